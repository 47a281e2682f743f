import itertools

import numpy as np
import pytest
from scipy.ndimage import map_coordinates

from semamesh.errors import ConsistencyError
from semamesh.geo import GeoRaster
from semamesh.trees import (
    FieldTree,
    Treetop,
    compute_chm,
    delineate_crowns,
    detect_treetops,
    match_trees,
)


def chm_oracle(dsm, dtm, cell, res, window):
    """Subtract, bilinear resample (clamped at the outer pixel centers), box mean, clamp."""
    diff = dsm - dtm
    rows, cols = diff.shape
    f = cell / res
    nr, nc = int(round(rows * f)), int(round(cols * f))
    rr, cc = np.meshgrid((np.arange(nr) + 0.5) / f - 0.5, (np.arange(nc) + 0.5) / f - 0.5, indexing="ij")
    fine = map_coordinates(diff, [rr, cc], order=1, mode="nearest")
    half = window // 2
    out = np.empty_like(fine)
    for r in range(nr):
        for c in range(nc):
            out[r, c] = fine[max(r - half, 0) : r + half + 1, max(c - half, 0) : c + half + 1].mean()
    return np.maximum(out, 0.0)


def test_chm_matches_oracle(rng):
    dtm = rng.uniform(100, 101, (12, 15))
    dsm = dtm + rng.uniform(-2, 25, (12, 15))
    a = GeoRaster.from_origin(10.0, 50.0, 0.5, dsm, crs_tag="EPSG:1")
    b = GeoRaster.from_origin(10.0, 50.0, 0.5, dtm, crs_tag="EPSG:1")
    chm = compute_chm(a, b)
    assert chm.shape == (24, 30) and chm.cellsize == 0.25
    np.testing.assert_allclose(chm.values, chm_oracle(dsm, dtm, 0.5, 0.25, 7), rtol=0, atol=1e-9)


def test_chm_trivial_cases():
    z = np.full((6, 6), 7.0)
    g = GeoRaster.from_origin(0.0, 6.0, 1.0, z)
    assert (compute_chm(g, g).values == 0).all()
    np.testing.assert_allclose(compute_chm(GeoRaster(z + 10, g.transform), g).values, 10.0, atol=1e-12)


def test_chm_errors():
    a = GeoRaster.from_origin(0.0, 6.0, 1.0, np.zeros((6, 6)), crs_tag="EPSG:1")
    with pytest.raises(ConsistencyError):
        compute_chm(a, GeoRaster.from_origin(0.0, 6.0, 1.0, np.zeros((6, 6)), crs_tag="EPSG:2"))
    with pytest.raises(ConsistencyError):
        compute_chm(a, GeoRaster.from_origin(1.0, 6.0, 1.0, np.zeros((6, 6)), crs_tag="EPSG:1"))


def brute_treetops(v, cell, min_h=5.0, ratio=0.11):
    rows, cols = v.shape
    out = []
    for r, c in itertools.product(range(rows), range(cols)):
        h = v[r, c]
        if h <= min_h:
            continue
        ok = True
        for rq, cq in itertools.product(range(rows), range(cols)):
            if (rq, cq) == (r, c) or np.hypot(rq - r, cq - c) * cell > ratio * h:
                continue
            if v[rq, cq] > h or (v[rq, cq] == h and (rq, cq) < (r, c)):
                ok = False
                break
        if ok:
            out.append((r, c))
    return out


def _blob_chm(peaks, shape=(60, 60), cell=0.25, sigma=1.0):
    r, c = np.mgrid[0 : shape[0], 0 : shape[1]]
    x, y = (c + 0.5) * cell, (shape[0] - r - 0.5) * cell
    v = np.zeros(shape)
    for px, py, h in peaks:
        v = np.maximum(v, h * np.exp(-((x - px) ** 2 + (y - py) ** 2) / (2 * sigma**2)))
    return GeoRaster.from_origin(0.0, shape[0] * cell, cell, v)


def test_single_blob_and_radius():
    chm = _blob_chm([(7.6, 7.4, 20.0)])
    tops = detect_treetops(chm)
    assert len(tops) == 1
    t = tops[0]
    assert chm.values[t.row, t.col] == chm.values.max()
    assert (t.x, t.y) == tuple(float(v) for v in chm.pixel_to_world(t.row + 0.5, t.col + 0.5))
    assert 0.11 * 20.0 == pytest.approx(2.2)


def test_low_canopy_has_no_tops():
    assert detect_treetops(_blob_chm([(7.0, 7.0, 5.0)])) == []


def test_close_blobs_match_brute_force():
    chm = _blob_chm([(6.0, 7.0, 15.0), (7.0, 7.0, 15.0)], shape=(50, 50))
    tops = detect_treetops(chm)
    assert len(tops) == 1
    assert [(t.row, t.col) for t in tops] == brute_treetops(chm.values, chm.cellsize)


def test_plateau_keeps_first_pixel():
    v = np.zeros((20, 20))
    v[8:11, 8:11] = 12.0
    tops = detect_treetops(GeoRaster.from_origin(0.0, 5.0, 0.25, v))
    assert [(t.row, t.col) for t in tops] == [(8, 8)]


def test_random_fields_match_brute_force(rng):
    for _ in range(3):
        v = rng.uniform(0, 12, (18, 18))
        chm = GeoRaster.from_origin(0.0, 4.5, 0.25, v)
        assert [(t.row, t.col) for t in detect_treetops(chm)] == brute_treetops(v, 0.25)


def _cone_chm(trees, size=30.0, cell=0.25):
    n = int(size / cell)
    r, c = np.mgrid[0:n, 0:n]
    x, y = (c + 0.5) * cell, (n - r - 0.5) * cell
    v = np.zeros((n, n))
    for tx, ty, h, rad in trees:
        v = np.maximum(v, h * (1 - np.hypot(x - tx, y - ty) / rad))
    chm = GeoRaster.from_origin(0.0, size, cell, v)
    tops = []
    for k, (tx, ty, h, _) in enumerate(trees, start=1):
        row, col = (int(v) for v in np.floor(chm.world_to_pixel(tx, ty)))
        tops.append(Treetop(k, tx, ty, h, row, col))
    return chm, tops


@pytest.mark.parametrize("h,rad", [(20.0, 5.0), (20.0, 8.0)])
def test_isolated_cone_crown_area(h, rad):
    chm, tops = _cone_chm([(15.125, 15.125, h, rad)])
    cm = delineate_crowns(chm, tops)
    reach = min(0.9 * rad, 0.24 * h)
    area = (cm.ids == 1).sum() * chm.cellsize**2
    assert area == pytest.approx(np.pi * reach**2, rel=0.05)
    assert sum(p.area for p in cm.polygons) == pytest.approx(area)


def test_crown_rules_hold(rng):
    trees = [(8.1, 9.0, 18.0, 6.0), (13.2, 10.1, 14.0, 5.0), (20.0, 20.0, 25.0, 7.0)]
    chm, tops = _cone_chm(trees)
    cm = delineate_crowns(chm, tops)
    rr, cc = np.nonzero(cm.ids)
    for r, c in zip(rr, cc):
        t = tops[cm.ids[r, c] - 1]
        assert chm.values[r, c] >= 0.1 * t.height
        assert np.hypot(r - t.row, c - t.col) * chm.cellsize <= 0.24 * t.height + 1e-9
    low = chm.values < 0.1 * min(t.height for t in tops)
    assert (cm.ids[low] == 0).all()


def test_equal_trees_split_on_bisector():
    chm, tops = _cone_chm([(12.125, 15.125, 20.0, 6.0), (17.125, 15.125, 20.0, 6.0)])
    cm = delineate_crowns(chm, tops)
    rr, cc = np.nonzero(cm.ids)
    for r, c in zip(rr, cc):
        d = [(r - t.row) ** 2 + (c - t.col) ** 2 for t in tops]
        own = cm.ids[r, c] - 1
        assert d[own] < d[1 - own] or (d[own] == d[1 - own] and own == 0)
    assert (cm.ids == 1).sum() >= (cm.ids == 2).sum()


def greedy_oracle(field, det):
    pairs = []
    used_f, used_d = set(), set()
    while True:
        best = None
        for f in field:
            for d in det:
                if f.id in used_f or d.id in used_d:
                    continue
                dist = float(np.hypot(d.x - f.x, d.y - f.y))
                if abs(d.height - f.height) <= 0.5 * f.height and dist < 0.1 * f.height + 1:
                    key = (dist, f.id, d.id)
                    if best is None or key < best:
                        best = key
        if best is None:
            return pairs
        used_f.add(best[1])
        used_d.add(best[2])
        pairs.append((best[1], best[2], best[0]))


def test_match_examples():
    f = [FieldTree(1, 0.0, 0.0, 10.0, 2)]
    assert match_trees(f, []).pairs == ()
    near = [Treetop(1, 1.99, 0.0, 10.0), Treetop(2, 2.0, 0.0, 10.0)]
    assert match_trees(f, near[1:]).pairs == ()
    assert match_trees(f, near).as_dict() == {1: 1}
    assert match_trees(f, [Treetop(1, 0, 0, 15.0)]).as_dict() == {1: 1}
    assert match_trees(f, [Treetop(1, 0, 0, 15.01)]).pairs == ()
    assert match_trees(f, [Treetop(1, 0, 0, 4.99)]).pairs == ()


def test_match_three_by_three_crafted():
    f = [FieldTree(1, 0, 0, 10), FieldTree(2, 1, 0, 10), FieldTree(3, 3, 0, 10)]
    d = [Treetop(1, 0.6, 0, 10), Treetop(2, 1.5, 0, 10), Treetop(3, 3.2, 0, 10)]
    m = match_trees(f, d)
    # greedy takes f2-d1 (0.4) before f1-d1 (0.6), leaving f1 with d2 at 1.5
    assert [p[:2] for p in m.pairs] == [(3, 3), (2, 1), (1, 2)]
    assert m.pairs == tuple(greedy_oracle(f, d))


def test_match_order_invariant(rng):
    f = [FieldTree(k, *rng.uniform(0, 5, 2), rng.uniform(5, 20)) for k in range(8)]
    d = [Treetop(k, *rng.uniform(0, 5, 2), rng.uniform(5, 20)) for k in range(8)]
    a = match_trees(f, d)
    b = match_trees(f[::-1], d[::-1])
    assert a == b
    assert a.pairs == tuple(greedy_oracle(f, d))
