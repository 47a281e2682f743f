"""Prediction workflow: fuse per-image class predictions onto mesh faces and objects."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraSet, filter_cameras_in_roi
from .errors import ConsistencyError, InputError, MissingPredictionError
from .geo import NULL_CLASS, GeoRaster, LabelPolygons, buffer_polygons, check_crs
from .mesh import Mesh, crop_mesh_to_roi, face_height_above_ground
from .raycast import Bvh, build_bvh, render_face_index_image
from .training import DEFAULT_GROUND_HEIGHT, DEFAULT_ROI_BUFFER

DEFAULT_GROUND_WEIGHT = 0.01


def votes_from_face_index(face_index: np.ndarray, pred, n_classes: int, n_faces: int) -> np.ndarray:
    """Binary face x class indicator for one camera.

    Entry ``[f, k-1]`` is 1 when at least one pixel sees face ``f`` and is
    predicted as class ``k``. Repeated pixels do not add up.
    """
    pred = np.asarray(pred)
    if pred.shape != face_index.shape:
        raise ConsistencyError(f"prediction shape {pred.shape} != image shape {face_index.shape}")
    return _indicator(face_index, pred, n_classes, n_faces)


def _indicator(face_index, pred, n_classes, n_faces):
    out = np.zeros((n_faces, n_classes), dtype=np.int64)
    ok = (face_index >= 0) & (pred != NULL_CLASS)
    cls = pred[ok].astype(np.int64)
    if len(cls) and (cls.min() < 1 or cls.max() > n_classes):
        raise InputError(f"predicted class outside 1..{n_classes}")
    out[face_index[ok], cls - 1] = 1
    return out


def accumulate_camera(mesh: Mesh, bvh: Bvh, camera, pred, n_classes: int) -> np.ndarray:
    pred = np.asarray(pred)
    if pred.shape != (camera.height, camera.width):
        raise ConsistencyError(
            f"camera {camera.id}: prediction is {pred.shape}, camera is {(camera.height, camera.width)}"
        )
    return _indicator(render_face_index_image(mesh, bvh, camera), pred, n_classes, mesh.n_faces)


def sum_votes(per_camera) -> np.ndarray:
    mats = list(per_camera)
    if not mats:
        raise InputError("no vote matrices to sum")
    shape = mats[0].shape
    total = np.zeros(shape, dtype=np.int64)
    for m in mats:
        if m.shape != shape:
            raise ConsistencyError(f"vote matrix shape {m.shape} != {shape}")
        total += m
    return total


def face_argmax(votes: np.ndarray) -> np.ndarray:
    """Most voted class per face (ties to the smallest class); NULL_CLASS for no votes."""
    votes = np.asarray(votes)
    if not votes.shape[0]:
        return np.zeros(0, dtype=np.int32)
    best = np.argmax(votes, axis=1).astype(np.int32) + 1
    best[votes.max(axis=1) <= 0] = NULL_CLASS
    return best


@dataclass
class ObjectPrediction:
    object_id: int
    class_id: int
    scores: np.ndarray
    n_faces: int = 0


def _argmax_scores(scores: np.ndarray) -> int:
    if not np.any(scores > 0):
        return NULL_CLASS
    return int(np.argmax(scores)) + 1


def classify_objects(
    mesh: Mesh,
    face_classes,
    objects: LabelPolygons,
    ground_mask=None,
    ground_weight: float = DEFAULT_GROUND_WEIGHT,
    n_classes: int | None = None,
    face_areas=None,
):
    """Area-weighted class vote per object polygon.

    Faces belong to an object when their top-down centroid falls inside it.
    Each face votes for its class with weight equal to its 3D area, scaled by
    ``ground_weight`` for ground faces. Null faces do not vote.
    """
    if not 0.0 <= ground_weight <= 1.0:
        raise InputError("ground_weight must be within [0, 1]")
    face_classes = np.asarray(face_classes, dtype=np.int64)
    if n_classes is None:
        n_classes = int(face_classes.max(initial=0))
    areas = mesh.face_areas() if face_areas is None else np.asarray(face_areas, dtype=np.float64)
    weights = areas.copy()
    if ground_mask is not None:
        weights[np.asarray(ground_mask, dtype=bool)] *= ground_weight
    cent = mesh.face_centroids() if mesh.n_faces else np.zeros((0, 3))
    voting = face_classes != NULL_CLASS
    out = []
    for k, poly in enumerate(objects):
        inside = poly.contains(cent[:, 0], cent[:, 1]) if len(cent) else np.zeros(0, bool)
        sel = inside & voting
        scores = np.bincount(face_classes[sel] - 1, weights=weights[sel], minlength=n_classes)[:n_classes]
        out.append(ObjectPrediction(k, _argmax_scores(scores), scores, int(inside.sum())))
    return out


@dataclass
class AggregationResult:
    mesh: Mesh
    votes: np.ndarray
    face_classes: np.ndarray
    objects: list
    ground_mask: np.ndarray
    face_map: np.ndarray
    metadata: dict = field(default_factory=dict)


def aggregate_predictions(
    mesh: Mesh,
    cameras: CameraSet,
    predictions: dict,
    dtm: GeoRaster,
    objects: LabelPolygons,
    n_classes: int,
    roi_buffer: float | None = DEFAULT_ROI_BUFFER,
    height_threshold: float = DEFAULT_GROUND_HEIGHT,
    ground_weight: float = DEFAULT_GROUND_WEIGHT,
    bvh: Bvh | None = None,
) -> AggregationResult:
    """Full prediction workflow.

    With ``roi_buffer`` set, the mesh and cameras are restricted to the
    buffered object region exactly as in training; pass ``None`` to use the
    mesh as is (``bvh`` may then be supplied). Every retained camera needs a
    prediction image in ``predictions`` (keyed by camera id).
    """
    crs = check_crs(objects.crs_tag, dtm.crs_tag, cameras.crs_tag)
    face_map = np.arange(mesh.n_faces)
    if roi_buffer is not None:
        roi = buffer_polygons(objects, roi_buffer)
        mesh, face_map = crop_mesh_to_roi(mesh, roi)
        cameras = filter_cameras_in_roi(cameras, roi)
        bvh = None
    missing = [c.id for c in cameras if c.id not in predictions]
    if missing:
        raise MissingPredictionError(missing)
    if bvh is None:
        bvh = build_bvh(mesh)
    votes = np.zeros((mesh.n_faces, n_classes), dtype=np.int64)
    for cam in cameras:
        votes += accumulate_camera(mesh, bvh, cam, predictions[cam.id], n_classes)
    classes = face_argmax(votes)
    ground = face_height_above_ground(mesh, dtm) < height_threshold
    objs = classify_objects(mesh, classes, objects, ground, ground_weight, n_classes)
    meta = {
        "roi_buffer": None if roi_buffer is None else float(roi_buffer),
        "height_threshold": float(height_threshold),
        "ground_weight": float(ground_weight),
        "n_classes": int(n_classes),
        "crs_tag": crs,
        "cameras_used": [c.id for c in cameras],
        "n_faces": mesh.n_faces,
    }
    return AggregationResult(mesh, votes, classes, objs, ground, face_map, meta)
