"""Triangle meshes: storage, PLY I/O, cropping and per-face geometry."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .geo import NULL_CLASS, GeoRaster

MIN_FACE_AREA = 1e-12
PLY_NULL = -1


@dataclass(frozen=True, eq=False)
class Mesh:
    """Vertices (N_v x 3, meters) and triangular faces (N_f x 3 indices)."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f):
            if f.min() < 0 or f.max() >= len(v):
                raise InputError("face index out of range")
            rep = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if rep.any():
                raise InputError(f"faces with repeated vertices: {np.flatnonzero(rep)[:10].tolist()}")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        areas = _triangle_areas(v, f)
        bad = np.flatnonzero(~(areas > MIN_FACE_AREA))
        if len(bad):
            raise InputError(
                f"{len(bad)} degenerate faces (area <= {MIN_FACE_AREA} m^2), "
                f"first: {bad[:10].tolist()}"
            )
        areas.setflags(write=False)
        object.__setattr__(self, "_areas", areas)

    @classmethod
    def empty(cls) -> "Mesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangles(self) -> np.ndarray:
        """N_f x 3 x 3 corner coordinates."""
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        return self._areas

    def face_centroids(self) -> np.ndarray:
        return self.triangles().mean(axis=1)


def _triangle_areas(v, f):
    if not len(f):
        return np.zeros(0)
    t = v[f]
    return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)


def face_area_3d(mesh: Mesh, f: int) -> float:
    return float(mesh.face_areas()[f])


def face_height_above_ground(mesh: Mesh, dtm: GeoRaster) -> np.ndarray:
    """Centroid elevation minus bilinear DTM elevation; +inf where the DTM has no data."""
    c = mesh.face_centroids()
    if not len(c):
        return np.zeros(0)
    ground = dtm.query(c[:, 0], c[:, 1], "bilinear")
    h = c[:, 2] - ground
    h[ground == dtm.nodata] = np.inf
    return h


def crop_mesh_to_roi(mesh: Mesh, roi):
    """Keep faces whose three vertices all lie (in x, y) inside ``roi``.

    Returns ``(cropped, old_to_new)`` where ``old_to_new[f]`` is the new index
    of original face ``f`` or -1 if it was dropped.
    """
    inside = roi.contains(mesh.vertices[:, 0], mesh.vertices[:, 1]) if mesh.n_vertices else np.zeros(0, bool)
    keep = inside[mesh.faces].all(axis=1) if mesh.n_faces else np.zeros(0, bool)
    old_to_new = np.full(mesh.n_faces, -1, dtype=np.int64)
    old_to_new[keep] = np.arange(keep.sum())
    faces = mesh.faces[keep]
    used = np.unique(faces)
    vmap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    vmap[used] = np.arange(len(used))
    return Mesh(mesh.vertices[used], vmap[faces]), old_to_new


# ---------------------------------------------------------------------------
# ASCII PLY


def write_ply(path, mesh: Mesh, face_labels=None) -> None:
    """ASCII PLY; per-face ``class_id`` (-1 for null) when labels are given."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {mesh.n_vertices}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
    ]
    if face_labels is not None:
        lines.append("property int class_id")
    lines.append("end_header")
    lines.extend(" ".join(repr(float(c)) for c in v) for v in mesh.vertices)
    if face_labels is None:
        lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.faces)
    else:
        labels = np.asarray(face_labels)
        if labels.shape != (mesh.n_faces,):
            raise InputError("face label count does not match the mesh")
        out = np.where(labels == NULL_CLASS, PLY_NULL, labels)
        lines.extend(f"3 {a} {b} {c} {k}" for (a, b, c), k in zip(mesh.faces, out))
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path):
    """Read an ASCII PLY mesh.

    Returns ``(mesh, face_labels)``; ``face_labels`` is None when the file has
    no per-face ``class_id`` property.
    """
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError(path, "line 1", "missing 'ply' magic")
    elements = []  # [name, count, [props]]
    k = 1
    while True:
        if k >= len(lines):
            raise FormatError(path, f"line {k}", "header has no end_header")
        tok = lines[k].split()
        k += 1
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if tok[1:2] != ["ascii"]:
                raise FormatError(path, f"line {k}", "only ASCII PLY is supported")
        elif tok[0] == "element":
            try:
                elements.append([tok[1], int(tok[2]), []])
            except (IndexError, ValueError):
                raise FormatError(path, f"line {k}", "bad element line") from None
        elif tok[0] == "property":
            if not elements:
                raise FormatError(path, f"line {k}", "property before element")
            elements[-1][2].append(tok[-1] if tok[1] != "list" else ("list", tok[-1]))
        elif tok[0] == "end_header":
            break
        else:
            raise FormatError(path, f"line {k}", f"unexpected header token {tok[0]!r}")

    verts = np.zeros((0, 3))
    faces = np.zeros((0, 3), dtype=np.int64)
    labels = None
    for name, count, props in elements:
        body = lines[k : k + count]
        if len(body) < count:
            raise FormatError(path, f"line {k + len(body) + 1}", f"truncated {name} element")
        if name == "vertex":
            try:
                idx = [props.index(a) for a in ("x", "y", "z")]
                rows = [[float(t) for t in ln.split()] for ln in body]
                verts = np.array(rows, dtype=np.float64).reshape(count, -1)[:, idx]
            except ValueError as exc:
                raise FormatError(path, f"line {_bad_line(body, k, float)}", f"bad vertex ({exc})") from None
        elif name == "face":
            faces_l, lab_l = [], []
            has_label = "class_id" in props
            for n, ln in enumerate(body):
                try:
                    tok = [int(t) for t in ln.split()]
                except ValueError:
                    raise FormatError(path, f"line {k + n + 1}", "non-integer face entry") from None
                if not tok or tok[0] != 3 or len(tok) < 4:
                    raise FormatError(path, f"line {k + n + 1}", "faces must be triangles")
                faces_l.append(tok[1:4])
                if has_label:
                    if len(tok) < 5:
                        raise FormatError(path, f"line {k + n + 1}", "missing class_id")
                    lab_l.append(tok[4])
            faces = np.array(faces_l, dtype=np.int64).reshape(-1, 3)
            if has_label:
                raw = np.array(lab_l, dtype=np.int64)
                labels = np.where(raw == PLY_NULL, NULL_CLASS, raw).astype(np.int32)
        k += count
    try:
        mesh = Mesh(verts, faces)
    except InputError as exc:
        raise FormatError(path, "body", str(exc)) from None
    return mesh, labels


def _bad_line(body, start, conv):
    for n, ln in enumerate(body):
        try:
            [conv(t) for t in ln.split()]
        except ValueError:
            return start + n + 1
    return start + 1
