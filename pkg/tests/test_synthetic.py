import numpy as np

from semamesh.synthetic import cone_levels, field_survey, make_scene


def test_scene_size_and_rig(scene):
    assert scene.mesh.n_faces >= 50_000
    assert len(scene.cameras) == 20
    assert len(scene.trees) == len(scene.crowns) == 20
    assert scene.ground_faces == 2 * 150**2


def test_scene_deterministic():
    a, b = make_scene(seed=4, n_trees=5), make_scene(seed=4, n_trees=5)
    np.testing.assert_array_equal(a.mesh.vertices, b.mesh.vertices)
    np.testing.assert_array_equal(a.dsm.values, b.dsm.values)
    assert a.trees == b.trees
    assert make_scene(seed=5, n_trees=5).trees != a.trees


def test_cone_levels_include_two_meters():
    for h in (10.0, 17.3, 29.9):
        z = cone_levels(h, 12)
        assert 2.0 in z and z[0] == 0.0 and z[-1] < h


def test_crowns_disjoint_and_dsm_peaks(scene):
    for k, t in enumerate(scene.trees):
        for u in scene.trees[k + 1 :]:
            assert np.hypot(t.x - u.x, t.y - u.y) > t.radius + u.radius
    assert scene.dsm.values.max() - scene.ground_z <= max(t.height for t in scene.trees)
    assert (scene.dsm.values >= scene.ground_z).all()


def test_field_survey_is_noisy_copy(scene):
    field = field_survey(scene, seed=1)
    assert [f.id for f in field] == [t.id for t in scene.trees]
    assert all(abs(f.x - t.x) < 2 and abs(f.height - t.height) < 0.3 * t.height for f, t in zip(field, scene.trees))
