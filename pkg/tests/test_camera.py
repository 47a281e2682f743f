import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semamesh.camera import (
    Camera,
    CameraSet,
    filter_cameras_in_roi,
    look_at,
    pixel_ray,
    project_point,
    project_points,
    read_cameras,
    write_cameras,
)
from semamesh.errors import FormatError, InputError
from semamesh.geo import GeoPolygon, buffer_polygons

K = np.array([[500.0, 0, 320.0], [0, 480.0, 240.0], [0, 0, 1]])


def _cam(center=(0, 0, 10), target=(1, 2, 0), cid="c"):
    return Camera(K, look_at(center, target), 640, 480, cid)


def test_identity_camera_projection():
    cam = Camera(K, np.eye(4), 640, 480)
    i, j, depth = project_point(cam, (0.0, 0.0, 5.0))
    assert (i, j, depth) == (239.5, 319.5, 5.0)
    i, j, _ = project_point(cam, (1.0, -2.0, 10.0))
    assert j == pytest.approx(500 * 0.1 + 319.5)
    assert i == pytest.approx(480 * -0.2 + 239.5)


def test_behind_camera():
    cam = Camera(K, np.eye(4), 640, 480)
    assert project_point(cam, (0, 0, -1)) is None
    assert project_point(cam, (1, 1, 0)) is None
    i, _, _ = project_points(cam, [(0, 0, -1), (0, 0, 1)])
    assert np.isnan(i[0]) and not np.isnan(i[1])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 479), st.integers(0, 639), st.floats(0.5, 200.0))
def test_ray_project_roundtrip(i, j, t):
    cam = _cam()
    ray = pixel_ray(cam, i, j)
    assert np.linalg.norm(ray.direction) == pytest.approx(1.0)
    pi, pj, depth = project_point(cam, ray.origin + t * ray.direction)
    assert pi == pytest.approx(i, abs=1e-6)
    assert pj == pytest.approx(j, abs=1e-6)
    assert depth > 0


def test_pixel_out_of_bounds():
    cam = _cam()
    for i, j in [(-1, 0), (480, 0), (0, 640)]:
        with pytest.raises(InputError):
            pixel_ray(cam, i, j)


def test_look_at_is_rotation_aimed_at_target():
    T = look_at((5, 5, 50), (5, 5, 0))
    R = T[:3, :3]
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)
    np.testing.assert_allclose(R[:, 2], [0, 0, -1], atol=1e-12)
    T = look_at((0, 0, 0), (3, 4, -5))
    np.testing.assert_allclose(T[:3, 2], np.array([3, 4, -5]) / np.sqrt(50))


def test_invalid_cameras():
    with pytest.raises(InputError):
        Camera(np.diag([-1.0, 1, 1]), np.eye(4), 10, 10)
    with pytest.raises(InputError):
        Camera([[1, 0, 20], [0, 1, 5], [0, 0, 1]], np.eye(4), 10, 10)
    bad = np.eye(4)
    bad[0, 0] = 2
    with pytest.raises(InputError):
        Camera(K, bad, 640, 480)
    with pytest.raises(InputError):
        CameraSet((_cam(cid="a"), _cam(cid="a")))


def test_camera_json_roundtrip(tmp_path):
    cams = CameraSet((_cam(cid="a"), _cam((3, 4, 20), (0, 0, 0), "b")), "EPSG:32610")
    write_cameras(cams, tmp_path / "c.json")
    back = read_cameras(tmp_path / "c.json")
    assert back.ids == ["a", "b"] and back.crs_tag == "EPSG:32610"
    for a, b in zip(cams, back):
        np.testing.assert_array_equal(a.extrinsic, b.extrinsic)
        np.testing.assert_array_equal(a.intrinsic, b.intrinsic)


def test_camera_json_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"cameras": [{"id": "a", "width": 10}]}')
    with pytest.raises(FormatError):
        read_cameras(p)


def test_filter_cameras_in_roi():
    roi = buffer_polygons([GeoPolygon([(0, 0), (10, 0), (10, 10), (0, 10)], class_id=1)], 5.0)
    cams = CameraSet((_cam((12, 5, 30), (5, 5, 0), "in"), _cam((30, 5, 30), (5, 5, 0), "out")))
    assert filter_cameras_in_roi(cams, roi).ids == ["in"]
