"""Orthomosaic baseline: overlapping chips, ramp-weighted vote blending, per-crown mode."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aggregation import ObjectPrediction
from .errors import InputError
from .geo import NULL_CLASS, GeoRaster, LabelPolygons


@dataclass(frozen=True)
class ChipGrid:
    chip_size: int
    origins: tuple

    @property
    def stride(self) -> int:
        return self.chip_size // 2


def _axis_origins(n, size):
    half = size // 2
    out = list(range(0, n - size + 1, half))
    if out[-1] + size < n:
        out.append(n - size)
    return out


def tile_chips(rows: int, cols: int, chip_size: int) -> ChipGrid:
    """Square chips with 50% overlap; the last row/column of chips is clamped inward."""
    if chip_size <= 0 or chip_size % 2:
        raise InputError(f"chip size must be a positive even number, got {chip_size}")
    if chip_size > min(rows, cols):
        raise InputError(f"chip size {chip_size} exceeds raster size {rows}x{cols}")
    origins = tuple(
        (r, c) for r in _axis_origins(rows, chip_size) for c in _axis_origins(cols, chip_size)
    )
    return ChipGrid(chip_size, origins)


def _ramp(k, size):
    center = np.asarray(k, dtype=np.float64) + 0.5
    return np.minimum(1.0, np.minimum(center, size - center) / (size / 4.0))


def ramp_weight(i: int, j: int, chip_size: int) -> float:
    """Blend weight of chip pixel (i, j).

    Full weight in the central half of the chip; over the outer 25% on each
    side the weight falls linearly to zero at the chip edge, evaluated at
    pixel centers so every pixel keeps a positive weight.
    """
    if not (0 <= i < chip_size and 0 <= j < chip_size):
        raise InputError(f"pixel ({i}, {j}) outside a {chip_size} chip")
    return float(min(_ramp(i, chip_size), _ramp(j, chip_size)))


def ramp_weights(chip_size: int) -> np.ndarray:
    r = _ramp(np.arange(chip_size), chip_size)
    return np.minimum(r[:, None], r[None, :])


def aggregate_chips(chip_preds: dict, grid: ChipGrid, rows: int, cols: int, n_classes: int):
    """Blend per-chip class predictions into one class raster.

    Returns ``(classes, weights)``: an int32 class grid (NULL_CLASS where no
    chip voted) and the ``rows x cols x n_classes`` weighted vote volume.
    """
    s = grid.chip_size
    w = ramp_weights(s)
    votes = np.zeros((rows, cols, n_classes), dtype=np.float64)
    missing = [o for o in grid.origins if tuple(o) not in chip_preds]
    if missing:
        raise InputError(f"missing predictions for chips at {missing[:5]}")
    for r0, c0 in sorted(tuple(o) for o in grid.origins):
        pred = np.asarray(chip_preds[(r0, c0)])
        if pred.shape != (s, s):
            raise InputError(f"chip at {(r0, c0)} is {pred.shape}, expected {(s, s)}")
        if pred.max(initial=0) > n_classes or pred.min(initial=0) < 0:
            raise InputError(f"chip at {(r0, c0)} has classes outside 0..{n_classes}")
        window = votes[r0 : r0 + s, c0 : c0 + s]
        for k in range(1, n_classes + 1):
            window[..., k - 1] += np.where(pred == k, w, 0.0)
    classes = np.argmax(votes, axis=2).astype(np.int32) + 1
    classes[votes.max(axis=2) <= 0] = NULL_CLASS
    return classes, votes


def classify_crowns_from_raster(class_raster: GeoRaster, crowns: LabelPolygons, n_classes: int | None = None):
    """Most frequent non-null class among pixel centers inside each crown."""
    vals = class_raster.values
    valid = (vals != class_raster.nodata) & (vals != NULL_CLASS)
    if n_classes is None:
        n_classes = int(vals[valid].max(initial=0))
    out = []
    for k, poly in enumerate(crowns):
        xmin, ymin, xmax, ymax = poly.bounds
        rr, cc = class_raster.world_to_pixel([xmin, xmin, xmax, xmax], [ymin, ymax, ymin, ymax])
        r0 = max(int(np.floor(rr.min())) - 1, 0)
        r1 = min(int(np.ceil(rr.max())) + 1, class_raster.rows)
        c0 = max(int(np.floor(cc.min())) - 1, 0)
        c1 = min(int(np.ceil(cc.max())) + 1, class_raster.cols)
        counts = np.zeros(n_classes)
        if r0 < r1 and c0 < c1:
            gr, gc = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1), indexing="ij")
            x, y = class_raster.pixel_to_world(gr + 0.5, gc + 0.5)
            inside = poly.contains(x.ravel(), y.ravel()).reshape(gr.shape)
            sel = inside & valid[r0:r1, c0:c1]
            cls = vals[r0:r1, c0:c1][sel].astype(np.int64)
            counts = np.bincount(cls - 1, minlength=n_classes)[:n_classes].astype(np.float64)
        best = int(np.argmax(counts)) + 1 if counts.max(initial=0) > 0 else NULL_CLASS
        out.append(ObjectPrediction(k, best, counts, int(counts.sum())))
    return out


def rasterize_labels(labels: LabelPolygons, raster: GeoRaster) -> np.ndarray:
    """Class of the label polygon under each pixel center (training chips)."""
    x, y = raster.pixel_centers()
    return labels.query(x.ravel(), y.ravel()).reshape(raster.shape)
