import numpy as np
import pytest

from semamesh.errors import InputError
from semamesh.geo import NULL_CLASS, GeoPolygon, GeoRaster, LabelPolygons
from semamesh.ortho import (
    aggregate_chips,
    classify_crowns_from_raster,
    ramp_weight,
    ramp_weights,
    rasterize_labels,
    tile_chips,
)


@pytest.mark.parametrize("rows,cols,s", [(100, 100, 20), (101, 157, 40), (64, 64, 64), (90, 200, 16)])
def test_tiles_cover_everything(rows, cols, s):
    g = tile_chips(rows, cols, s)
    cover = np.zeros((rows, cols), dtype=int)
    for r0, c0 in g.origins:
        assert 0 <= r0 <= rows - s and 0 <= c0 <= cols - s
        cover[r0 : r0 + s, c0 : c0 + s] += 1
    assert cover.min() >= 1


def test_tile_rejects_bad_sizes():
    with pytest.raises(InputError):
        tile_chips(10, 10, 12)
    with pytest.raises(InputError):
        tile_chips(10, 10, 3)


def test_ramp_profile():
    s = 40
    w = ramp_weights(s)
    assert w.shape == (s, s)
    assert w[s // 2, s // 2] == 1.0
    assert ramp_weight(s // 4, s // 2, s) == 1.0
    assert ramp_weight(0, s // 2, s) == pytest.approx(2 / s)
    assert ramp_weight(0, 0, s) == pytest.approx(2 / s)
    assert (w > 0).all() and (w <= 1).all()
    np.testing.assert_array_equal(w, w.T)
    np.testing.assert_array_equal(w, w[::-1, ::-1])


def test_single_chip_passes_through():
    g = tile_chips(8, 8, 8)
    pred = np.arange(64).reshape(8, 8) % 3 + 1
    classes, _ = aggregate_chips({(0, 0): pred}, g, 8, 8, 3)
    np.testing.assert_array_equal(classes, pred)
    classes, _ = aggregate_chips({(0, 0): np.zeros((8, 8), int)}, g, 8, 8, 3)
    assert (classes == NULL_CLASS).all()


def test_missing_chip_rejected():
    g = tile_chips(16, 16, 8)
    with pytest.raises(InputError):
        aggregate_chips({}, g, 16, 16, 2)


def test_rasterize_and_classify_crowns():
    ras = GeoRaster.from_origin(0.0, 10.0, 1.0, np.zeros((10, 10)))
    labels = LabelPolygons((GeoPolygon([(0, 0), (4, 0), (4, 10), (0, 10)], class_id=2),))
    grid = rasterize_labels(labels, ras)
    assert (grid[:, :4] == 2).all() and (grid[:, 4:] == NULL_CLASS).all()
    crowns = LabelPolygons((GeoPolygon([(2, 2), (6, 2), (6, 6), (2, 6)]), GeoPolygon([(7, 7), (9, 7), (9, 9), (7, 9)])))
    res = classify_crowns_from_raster(GeoRaster(grid.astype(float), ras.transform, -1.0), crowns, 2)
    assert [r.class_id for r in res] == [2, NULL_CLASS]
    assert res[0].scores.tolist() == [0.0, 8.0]
