"""Pinhole cameras: pixel rays, point projection, RoI filtering.

Conventions: pixel ``(i, j)`` is (row, col); its center sits at
``(i + 0.5, j + 0.5)`` in continuous image coordinates. Cameras look along
+Z of their own frame with +X to the right and +Y down the image. The
extrinsic matrix maps camera coordinates to world coordinates. Lens
distortion is assumed removed upstream.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .geo import UNSPECIFIED_CRS

BEHIND_EPS = 1e-9


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray


@dataclass(frozen=True, eq=False)
class Camera:
    intrinsic: np.ndarray
    extrinsic: np.ndarray
    width: int
    height: int
    id: str = ""

    def __post_init__(self):
        K = np.array(self.intrinsic, dtype=np.float64).reshape(3, 3)
        T = np.array(self.extrinsic, dtype=np.float64).reshape(4, 4)
        w, h = int(self.width), int(self.height)
        fx, fy, cx, cy = K[0, 0], K[1, 1], K[0, 2], K[1, 2]
        if not (fx > 0 and fy > 0):
            raise InputError(f"camera {self.id}: focal lengths must be positive")
        if not (0 < cx < w and 0 < cy < h):
            raise InputError(f"camera {self.id}: principal point outside the image")
        if K[0, 1] != 0 or K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0 or K[2, 2] != 1:
            raise InputError(f"camera {self.id}: intrinsic must be [[fx,0,cx],[0,fy,cy],[0,0,1]]")
        R = T[:3, :3]
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1) > 1e-6:
            raise InputError(f"camera {self.id}: extrinsic rotation is not orthonormal")
        if not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
            raise InputError(f"camera {self.id}: extrinsic last row must be [0,0,0,1]")
        K.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "intrinsic", K)
        object.__setattr__(self, "extrinsic", T)
        object.__setattr__(self, "width", w)
        object.__setattr__(self, "height", h)
        object.__setattr__(self, "id", str(self.id))

    @property
    def fx(self):
        return self.intrinsic[0, 0]

    @property
    def fy(self):
        return self.intrinsic[1, 1]

    @property
    def cx(self):
        return self.intrinsic[0, 2]

    @property
    def cy(self):
        return self.intrinsic[1, 2]

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsic[:3, :3]

    @property
    def center(self) -> np.ndarray:
        return self.extrinsic[:3, 3]

    def with_extrinsic(self, extrinsic) -> "Camera":
        return Camera(self.intrinsic, extrinsic, self.width, self.height, self.id)


def pixel_ray(camera: Camera, i: int, j: int) -> Ray:
    """World-space ray through the center of pixel (i, j)."""
    if not (0 <= i < camera.height and 0 <= j < camera.width):
        raise InputError(f"pixel ({i}, {j}) outside {camera.height}x{camera.width} image")
    d = np.array([(j + 0.5 - camera.cx) / camera.fx, (i + 0.5 - camera.cy) / camera.fy, 1.0])
    d /= np.linalg.norm(d)
    return Ray(camera.center.copy(), camera.rotation @ d)


def project_points(camera: Camera, points):
    """Project world points to continuous pixel indices.

    Returns ``(i, j, depth)`` arrays where integer ``(i, j)`` is the center of
    that pixel, so the principal point lands on ``(cy - 0.5, cx - 0.5)``.
    Points at or behind the camera plane get NaN.
    """
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    local = (p - camera.center) @ camera.rotation
    z = local[:, 2]
    front = z > BEHIND_EPS
    safe = np.where(front, z, 1.0)
    i = np.where(front, camera.fy * local[:, 1] / safe + camera.cy - 0.5, np.nan)
    j = np.where(front, camera.fx * local[:, 0] / safe + camera.cx - 0.5, np.nan)
    return i, j, np.where(front, z, np.nan)


def project_point(camera: Camera, p):
    """``(i, j, depth)`` of one point, or ``None`` if it is behind the camera."""
    i, j, depth = project_points(camera, p)
    if np.isnan(depth[0]):
        return None
    return float(i[0]), float(j[0]), float(depth[0])


@dataclass(frozen=True, eq=False)
class CameraSet:
    cameras: tuple
    crs_tag: str = UNSPECIFIED_CRS

    def __post_init__(self):
        object.__setattr__(self, "cameras", tuple(self.cameras))
        ids = [c.id for c in self.cameras]
        if len(set(ids)) != len(ids):
            raise InputError("camera ids must be unique")

    def __len__(self):
        return len(self.cameras)

    def __iter__(self):
        return iter(self.cameras)

    @property
    def ids(self) -> list:
        return [c.id for c in self.cameras]

    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.cameras]).reshape(-1, 3)


def filter_cameras_in_roi(cams: CameraSet, roi) -> CameraSet:
    """Keep cameras whose (x, y) center lies in ``roi`` (edges count)."""
    if not len(cams):
        return cams
    c = cams.centers()
    keep = roi.contains(c[:, 0], c[:, 1])
    return CameraSet(tuple(cam for cam, k in zip(cams, keep) if k), cams.crs_tag)


def read_cameras(path) -> CameraSet:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"line {exc.lineno}", exc.msg) from None
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    cams = []
    for k, entry in enumerate(doc.get("cameras", [])):
        try:
            cams.append(
                Camera(
                    np.array(entry["K"], dtype=float).reshape(3, 3),
                    np.array(entry["T_cam_to_world"], dtype=float).reshape(4, 4),
                    entry["width"],
                    entry["height"],
                    entry["id"],
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(path, f"camera {k}", str(exc)) from None
    return CameraSet(tuple(cams), doc.get("crs_tag", UNSPECIFIED_CRS))


def cameras_to_json(cams: CameraSet) -> dict:
    return {
        "crs_tag": cams.crs_tag,
        "cameras": [
            {
                "id": c.id,
                "width": c.width,
                "height": c.height,
                "K": c.intrinsic.ravel().tolist(),
                "T_cam_to_world": c.extrinsic.ravel().tolist(),
            }
            for c in cams
        ],
    }


def write_cameras(cams: CameraSet, path) -> None:
    Path(path).write_text(json.dumps(cameras_to_json(cams), indent=1) + "\n")


def look_at(center, target, up_hint=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Camera-to-world matrix for a camera at ``center`` looking at ``target``.

    Image rows run along the projection of ``-up_hint`` where possible.
    """
    center = np.asarray(center, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - center
    z /= np.linalg.norm(z)
    up = np.asarray(up_hint, dtype=np.float64)
    if abs(np.dot(up, z)) > 0.999:
        up = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.999 else np.array([0.0, 1.0, 0.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    T = np.eye(4)
    T[:3, 0], T[:3, 1], T[:3, 2], T[:3, 3] = x, y, z, center
    return T
