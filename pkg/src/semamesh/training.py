"""Training labels: texture a mesh from labeled polygons and render per-camera label images."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraSet, filter_cameras_in_roi
from .geo import NULL_CLASS, GeoRaster, LabelPolygons, buffer_polygons, check_crs
from .mesh import Mesh, crop_mesh_to_roi
from .raycast import Bvh, build_bvh, render_face_index_image

DEFAULT_ROI_BUFFER = 50.0
DEFAULT_GROUND_HEIGHT = 2.0


def label_vertices(mesh: Mesh, labels: LabelPolygons) -> np.ndarray:
    """Class of the polygon under each vertex (x, y); NULL_CLASS outside all polygons."""
    if not mesh.n_vertices:
        return np.zeros(0, dtype=np.int32)
    return labels.query(mesh.vertices[:, 0], mesh.vertices[:, 1])


def vertex_height_above_ground(mesh: Mesh, dtm: GeoRaster) -> np.ndarray:
    v = mesh.vertices
    ground = dtm.query(v[:, 0], v[:, 1], "bilinear")
    h = v[:, 2] - ground
    h[ground == dtm.nodata] = np.inf
    return h


def apply_ground_filter(mesh: Mesh, dtm: GeoRaster, vertex_labels, height_threshold: float = DEFAULT_GROUND_HEIGHT):
    """Null the labels of vertices strictly less than ``height_threshold`` above the DTM.

    Vertices outside the DTM (nodata) are never filtered.
    """
    if height_threshold < 0:
        raise ValueError("height threshold must be >= 0")
    out = np.array(vertex_labels, dtype=np.int32, copy=True)
    if len(out):
        out[vertex_height_above_ground(mesh, dtm) < height_threshold] = NULL_CLASS
    return out


def _tie_break(seed: int, face: int, options) -> int:
    rng = np.random.default_rng([seed, face])
    return int(options[rng.integers(len(options))])


def mode_label(a: int, b: int, c: int, seed: int = 0, face: int = 0) -> int:
    """Most common non-null label of a face's three vertices.

    Null votes are ignored unless all three are null. When the non-null
    labels are all different the winner is drawn uniformly with an RNG
    seeded by ``(seed, face)``.
    """
    votes = [v for v in (a, b, c) if v != NULL_CLASS]
    if not votes:
        return NULL_CLASS
    counts = {v: votes.count(v) for v in votes}
    top = max(counts.values())
    winners = sorted(v for v, n in counts.items() if n == top)
    if len(winners) == 1:
        return winners[0]
    return _tie_break(seed, face, winners)


def label_faces(mesh: Mesh, vertex_labels, rng_seed: int = 0) -> np.ndarray:
    """Per-face mode of the vertex labels (see :func:`mode_label`)."""
    lv = np.asarray(vertex_labels, dtype=np.int32)
    if not mesh.n_faces:
        return np.zeros(0, dtype=np.int32)
    a, b, c = lv[mesh.faces].T
    na, nb, nc = a != NULL_CLASS, b != NULL_CLASS, c != NULL_CLASS
    out = np.full(mesh.n_faces, NULL_CLASS, dtype=np.int32)
    # Any non-null label that agrees with another vertex wins outright.
    ab = na & (a == b)
    ac = na & (a == c)
    bc = nb & (b == c)
    out[bc] = b[bc]
    out[ac] = a[ac]
    out[ab] = a[ab]
    # Exactly one non-null vote.
    n_votes = na.astype(int) + nb + nc
    single = n_votes == 1
    out[single] = (a + b + c)[single]
    # Remaining: two or three distinct non-null labels.
    tied = np.flatnonzero((n_votes >= 2) & ~(ab | ac | bc))
    for f in tied:
        opts = sorted(v for v in (a[f], b[f], c[f]) if v != NULL_CLASS)
        out[f] = _tie_break(rng_seed, int(f), opts)
    return out


def render_label_image(mesh: Mesh, bvh: Bvh, face_labels, camera) -> np.ndarray:
    """Class ID image: the label of the face seen through each pixel."""
    return labels_from_face_index(render_face_index_image(mesh, bvh, camera), face_labels)


def labels_from_face_index(face_index: np.ndarray, face_labels) -> np.ndarray:
    face_labels = np.asarray(face_labels, dtype=np.int32)
    out = np.full(face_index.shape, NULL_CLASS, dtype=np.int32)
    hit = face_index >= 0
    out[hit] = face_labels[face_index[hit]]
    return out


@dataclass
class TrainingSet:
    images: dict
    mesh: Mesh
    face_labels: np.ndarray
    vertex_labels: np.ndarray
    face_map: np.ndarray
    metadata: dict = field(default_factory=dict)


def generate_training_set(
    mesh: Mesh,
    labels: LabelPolygons,
    dtm: GeoRaster,
    cameras: CameraSet,
    roi_buffer: float = DEFAULT_ROI_BUFFER,
    height_threshold: float = DEFAULT_GROUND_HEIGHT,
    seed: int = 0,
) -> TrainingSet:
    """Full training workflow, from geospatial labels to per-camera label images.

    The mesh is cropped to the buffered label region, cameras outside that
    region are dropped, vertices are labeled and ground-filtered, faces take
    the mode of their vertices, and each retained camera gets a rendered
    label image keyed by camera id.
    """
    crs = check_crs(labels.crs_tag, dtm.crs_tag, cameras.crs_tag)
    roi = buffer_polygons(labels, roi_buffer)
    cropped, face_map = crop_mesh_to_roi(mesh, roi)
    kept = filter_cameras_in_roi(cameras, roi)
    lv = label_vertices(cropped, labels)
    lv = apply_ground_filter(cropped, dtm, lv, height_threshold)
    lf = label_faces(cropped, lv, seed)
    images = {}
    if not len(kept):
        warnings.warn("no cameras inside the region of interest; no label images produced", stacklevel=2)
    else:
        bvh = build_bvh(cropped)
        for cam in kept:
            images[cam.id] = render_label_image(cropped, bvh, lf, cam)
    metadata = {
        "roi_buffer": float(roi_buffer),
        "height_threshold": float(height_threshold),
        "seed": int(seed),
        "crs_tag": crs,
        "n_images": len(images),
        "n_faces": cropped.n_faces,
        "n_faces_input": mesh.n_faces,
        "cameras_retained": kept.ids,
    }
    return TrainingSet(images, cropped, lf, lv, face_map, metadata)
