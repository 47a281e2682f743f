"""File formats shared by the workflows: PGM label images, manifests, point layers."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .geo import NULL_CLASS, UNSPECIFIED_CRS, class_to_json, feature_collection, load_geojson, write_json
from .trees import FieldTree, Treetop

PGM_NULL = 255
MAX_CLASS_ID = 254


def write_pgm(path, labels) -> None:
    """Binary PGM (P5, maxval 255); null pixels are stored as 255."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise InputError("label image must be 2D")
    if labels.size and (labels.min() < 0 or labels.max() > MAX_CLASS_ID):
        raise InputError(f"class IDs must be within 1..{MAX_CLASS_ID} for PGM output")
    data = np.where(labels == NULL_CLASS, PGM_NULL, labels).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + data.tobytes())


def read_pgm(path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(path, "header", "truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise FormatError(path, "header", "not a binary PGM (P5)")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(path, "header", "bad PGM dimensions") from None
    if maxval != 255:
        raise FormatError(path, "header", "only maxval 255 is supported")
    body = raw[pos : pos + w * h]
    if len(body) != w * h:
        raise FormatError(path, "body", f"expected {w * h} bytes, got {len(body)}")
    img = np.frombuffer(body, dtype=np.uint8).reshape(h, w).astype(np.int32)
    img[img == PGM_NULL] = NULL_CLASS
    return img


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"line {exc.lineno}", exc.msg) from None
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def write_label_set(out_dir, images: dict, legend: dict, parameters: dict, subdir="images") -> Path:
    """Write one PGM per camera id plus ``labels_manifest.json``."""
    out_dir = Path(out_dir)
    (out_dir / subdir).mkdir(parents=True, exist_ok=True)
    files = {}
    for cam_id in sorted(images):
        rel = f"{subdir}/{cam_id}.pgm"
        write_pgm(out_dir / rel, images[cam_id])
        files[cam_id] = rel
    manifest = {"cameras": files, "class_legend": legend, "parameters": parameters}
    path = out_dir / "labels_manifest.json"
    write_json(path, manifest)
    return path


def read_label_set(manifest_path):
    """Images keyed by camera id, plus the manifest document."""
    manifest_path = Path(manifest_path)
    doc = read_json(manifest_path)
    if "cameras" not in doc:
        raise FormatError(manifest_path, "top level", "manifest has no 'cameras' map")
    base = manifest_path.parent
    images = {cam: read_pgm(base / rel) for cam, rel in doc["cameras"].items()}
    return images, doc


def point_feature(x, y, **props) -> dict:
    return {"type": "Feature", "geometry": {"type": "Point", "coordinates": [x, y]}, "properties": props}


def write_treetops(path, tops, crs_tag=UNSPECIFIED_CRS) -> None:
    feats = [point_feature(t.x, t.y, treetop_id=t.id, height=t.height, row=t.row, col=t.col) for t in tops]
    write_json(path, feature_collection(feats, crs_tag))


def _points(path):
    doc = load_geojson(path)
    for k, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point":
            raise FormatError(path, f"feature {k}", "expected Point geometry")
        yield k, geom["coordinates"], feat.get("properties") or {}
    return doc


def read_treetops(path):
    tops = []
    for k, (x, y, *_), p in _points(path):
        try:
            tops.append(Treetop(int(p["treetop_id"]), float(x), float(y), float(p["height"]),
                                int(p.get("row", -1)), int(p.get("col", -1))))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, f"feature {k}", f"bad treetop properties ({exc})") from None
    return tops, load_geojson(path).get("crs_tag", UNSPECIFIED_CRS)


def write_field_trees(path, trees, crs_tag=UNSPECIFIED_CRS) -> None:
    feats = [point_feature(t.x, t.y, id=t.id, height=t.height, class_id=class_to_json(t.class_id)) for t in trees]
    write_json(path, feature_collection(feats, crs_tag))


def read_field_trees(path):
    trees = []
    for k, (x, y, *_), p in _points(path):
        try:
            cid = p.get("class_id")
            trees.append(FieldTree(int(p["id"]), float(x), float(y), float(p["height"]),
                                   NULL_CLASS if cid is None else int(cid)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, f"feature {k}", f"bad field tree properties ({exc})") from None
    return trees, load_geojson(path).get("crs_tag", UNSPECIFIED_CRS)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()
