"""Canopy height model, treetop detection, crown delineation and field-tree matching."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from numba import njit
from shapely.geometry import box
from shapely.ops import unary_union

from .errors import ConsistencyError, InputError
from .geo import NULL_CLASS, GeoPolygon, GeoRaster, check_crs

CHM_RESOLUTION = 0.25
SMOOTH_WINDOW = 7
MIN_TREE_HEIGHT = 5.0
SEARCH_RADIUS_RATIO = 0.11
CROWN_HEIGHT_RATIO = 0.1
CROWN_DISTANCE_RATIO = 0.24
MATCH_HEIGHT_TOL = 0.5
MATCH_DIST_SLOPE = 0.1
MATCH_DIST_OFFSET = 1.0


@dataclass(frozen=True)
class Treetop:
    id: int
    x: float
    y: float
    height: float
    row: int = -1
    col: int = -1


@dataclass(frozen=True)
class FieldTree:
    id: int
    x: float
    y: float
    height: float
    class_id: int = NULL_CLASS


@dataclass(frozen=True)
class TreeMatch:
    pairs: tuple  # (field_id, treetop_id, distance), in acceptance order

    def as_dict(self) -> dict:
        return {f: d for f, d, _ in self.pairs}


def resample_bilinear(raster: GeoRaster, cellsize: float) -> GeoRaster:
    """Resample a north-up raster onto a grid of ``cellsize`` over the same extent."""
    x0, _, _, y0, _, _ = raster.transform
    cell = raster.cellsize
    rows = int(round(raster.rows * cell / cellsize))
    cols = int(round(raster.cols * cell / cellsize))
    out = GeoRaster.from_origin(x0, y0, cellsize, np.zeros((rows, cols)), raster.nodata, raster.crs_tag)
    x, y = out.pixel_centers()
    vals = raster.query(x.ravel(), y.ravel(), "bilinear").reshape(rows, cols)
    return GeoRaster(vals, out.transform, raster.nodata, raster.crs_tag)


def mean_filter(raster: GeoRaster, window: int = SMOOTH_WINDOW) -> GeoRaster:
    """Moving-window mean of valid pixels; the window is truncated at the borders."""
    half = window // 2
    valid = raster.valid_mask()
    v = np.where(valid, raster.values, 0.0)

    def box_sum(a):
        p = np.pad(a, ((half + 1, half), (half + 1, half)))
        c = p.cumsum(0).cumsum(1)
        return c[window:, window:] - c[:-window, window:] - c[window:, :-window] + c[:-window, :-window]

    total = box_sum(v)
    n = box_sum(valid.astype(np.float64))
    out = np.where(n > 0, total / np.where(n > 0, n, 1), raster.nodata)
    return GeoRaster(out, raster.transform, raster.nodata, raster.crs_tag)


def compute_chm(dsm: GeoRaster, dtm: GeoRaster, resolution: float = CHM_RESOLUTION, window: int = SMOOTH_WINDOW) -> GeoRaster:
    """DSM minus DTM, bilinear resample to ``resolution``, window mean, negatives clamped to 0."""
    crs = check_crs(dsm.crs_tag, dtm.crs_tag)
    if dsm.shape != dtm.shape or not np.allclose(dsm.transform, dtm.transform, rtol=0, atol=1e-9):
        raise ConsistencyError("DSM and DTM are not on the same grid")
    ok = dsm.valid_mask() & dtm.valid_mask()
    diff = np.where(ok, dsm.values - dtm.values, dsm.nodata)
    chm = GeoRaster(diff, dsm.transform, dsm.nodata, crs)
    chm = mean_filter(resample_bilinear(chm, resolution), window)
    vals = chm.values.copy()
    vals[(vals < 0) & chm.valid_mask()] = 0.0
    return GeoRaster(vals, chm.transform, chm.nodata, crs)


@njit(cache=True)
def _local_maxima(v, valid, cell, min_height, ratio):
    rows, cols = v.shape
    out = np.zeros((rows, cols), dtype=np.bool_)
    for r in range(rows):
        for c in range(cols):
            h = v[r, c]
            if not valid[r, c] or h <= min_height:
                continue
            rad = ratio * h
            rad2 = rad * rad
            reach = int(rad / cell) + 1
            best = True
            for dr in range(-reach, reach + 1):
                rq = r + dr
                if rq < 0 or rq >= rows:
                    continue
                for dc in range(-reach, reach + 1):
                    cq = c + dc
                    if cq < 0 or cq >= cols or (dr == 0 and dc == 0):
                        continue
                    if (dr * dr + dc * dc) * cell * cell > rad2 or not valid[rq, cq]:
                        continue
                    hq = v[rq, cq]
                    if hq > h or (hq == h and (rq < r or (rq == r and cq < c))):
                        best = False
                        break
                if not best:
                    break
            out[r, c] = best
    return out


def detect_treetops(chm: GeoRaster, min_height: float = MIN_TREE_HEIGHT, radius_ratio: float = SEARCH_RADIUS_RATIO):
    """Variable-radius local maxima of the CHM.

    A pixel above ``min_height`` is a treetop when no pixel within
    ``radius_ratio * height`` meters is higher. Equal heights keep only the
    first pixel in (row, col) order. Ids count from 1 in row-major order.
    """
    peaks = _local_maxima(chm.values, chm.valid_mask(), chm.cellsize, min_height, radius_ratio)
    rr, cc = np.nonzero(peaks)
    x, y = chm.pixel_to_world(rr + 0.5, cc + 0.5)
    return [
        Treetop(k + 1, float(x[k]), float(y[k]), float(chm.values[rr[k], cc[k]]), int(rr[k]), int(cc[k]))
        for k in range(len(rr))
    ]


@dataclass
class CrownMap:
    ids: np.ndarray
    raster: GeoRaster
    polygons: list


def _grow(chm_vals, valid, top, cell, height_ratio, distance_ratio):
    """4-connected pixels reachable from the treetop under the height and distance limits."""
    rows, cols = chm_vals.shape
    min_h = height_ratio * top.height
    max_d2 = (distance_ratio * top.height / cell) ** 2
    seen = {(top.row, top.col)}
    queue = deque([(top.row, top.col)])
    while queue:
        r, c = queue.popleft()
        for rq, cq in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if not (0 <= rq < rows and 0 <= cq < cols) or (rq, cq) in seen:
                continue
            if (rq - top.row) ** 2 + (cq - top.col) ** 2 > max_d2:
                continue
            if not valid[rq, cq] or chm_vals[rq, cq] < min_h:
                continue
            seen.add((rq, cq))
            queue.append((rq, cq))
    return seen


def _resolve_owners(pix, owner, tops):
    """Keep, per pixel, the candidate treetop nearest to it (ties to the smaller id)."""
    seeds = np.array([[t.row, t.col] for t in tops], dtype=np.int64)
    ids = np.array([t.id for t in tops], dtype=np.int64)
    d2 = ((pix - seeds[owner]) ** 2).sum(axis=1)
    order = np.lexsort((ids[owner], d2, pix[:, 1], pix[:, 0]))
    pix, owner = pix[order], owner[order]
    first = np.ones(len(pix), dtype=bool)
    first[1:] = (np.diff(pix, axis=0) != 0).any(axis=1)
    return pix[first], owner[first]


def delineate_crowns(
    chm: GeoRaster,
    treetops,
    height_ratio: float = CROWN_HEIGHT_RATIO,
    distance_ratio: float = CROWN_DISTANCE_RATIO,
) -> CrownMap:
    """Crown segments around treetops.

    A pixel joins treetop ``t`` when it is at least ``height_ratio`` times
    the treetop height, within ``distance_ratio`` times that height, 4-connected
    to the treetop through such pixels, and ``t`` is the nearest of the
    treetops meeting those three conditions (Voronoi split; equal distances
    go to the smaller id).
    """
    cell = chm.cellsize
    ids = np.zeros(chm.shape, dtype=np.int32)
    tops = list(treetops)
    if tops:
        for t in tops:
            if not (0 <= t.row < chm.rows and 0 <= t.col < chm.cols):
                raise InputError(f"treetop {t.id} is outside the CHM grid")
        vals, valid = chm.values, chm.valid_mask()
        cand_pix, cand_top = [], []
        for k, t in enumerate(tops):
            grown = _grow(vals, valid, t, cell, height_ratio, distance_ratio)
            cand_pix.extend(sorted(grown))
            cand_top.extend([k] * len(grown))
        pix = np.array(cand_pix, dtype=np.int64).reshape(-1, 2)
        owner = np.array(cand_top, dtype=np.int64)
        pix, owner = _resolve_owners(pix, owner, tops)
        top_ids = np.array([t.id for t in tops], dtype=np.int32)
        ids[pix[:, 0], pix[:, 1]] = top_ids[owner]
    raster = GeoRaster(ids.astype(np.float64), chm.transform, -1.0, chm.crs_tag)
    return CrownMap(ids, raster, crown_polygons(ids, chm))


def crown_polygons(ids: np.ndarray, grid: GeoRaster) -> list:
    """Pixel-boundary polygons per crown id (one entry per connected part)."""
    polys = []
    for tid in np.unique(ids[ids > 0]):
        rects = []
        rr, cc = np.nonzero(ids == tid)
        for r in np.unique(rr):
            cols = np.sort(cc[rr == r])
            breaks = np.flatnonzero(np.diff(cols) > 1)
            starts = np.concatenate([[cols[0]], cols[breaks + 1]])
            ends = np.concatenate([cols[breaks], [cols[-1]]]) + 1
            for c0, c1 in zip(starts, ends):
                corners = grid.pixel_to_world([r, r, r + 1, r + 1], [c0, c1, c1, c0])
                xs, ys = corners
                rects.append(box(min(xs), min(ys), max(xs), max(ys)))
        merged = unary_union(rects)
        parts = list(merged.geoms) if hasattr(merged, "geoms") else [merged]
        for part in sorted(parts, key=lambda p: (-p.area, p.bounds)):
            polys.append(GeoPolygon.from_shapely(part.simplify(0), NULL_CLASS, {"treetop_id": int(tid)}))
    return polys


def match_trees(
    field,
    detected,
    height_tol: float = MATCH_HEIGHT_TOL,
    dist_slope: float = MATCH_DIST_SLOPE,
    dist_offset: float = MATCH_DIST_OFFSET,
) -> TreeMatch:
    """Greedy one-to-one pairing of field trees with detected treetops.

    A pair is a candidate when the detected height is within
    ``height_tol`` (relative) of the field height and the horizontal distance
    is below ``dist_slope * h + dist_offset`` with ``h`` the field height.
    Candidates are accepted by increasing distance (then field id, then
    treetop id), skipping trees already paired.
    """
    cands = []
    for f in field:
        gate = dist_slope * f.height + dist_offset
        for d in detected:
            if abs(d.height - f.height) > height_tol * f.height:
                continue
            dist = float(np.hypot(d.x - f.x, d.y - f.y))
            if dist < gate:
                cands.append((dist, f.id, d.id))
    cands.sort()
    used_f, used_d, pairs = set(), set(), []
    for dist, fid, did in cands:
        if fid in used_f or did in used_d:
            continue
        used_f.add(fid)
        used_d.add(did)
        pairs.append((fid, did, dist))
    return TreeMatch(tuple(pairs))
