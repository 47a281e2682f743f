"""Geospatial vector and raster primitives.

Class IDs are plain integers ``1..n_classes``; ``NULL_CLASS`` (0) marks
background, unlabeled or unobserved content. Serialized forms translate the
sentinel (``null`` in GeoJSON, -1 in PLY, 255 in PGM label images).

All inputs are expected in one projected, metric CRS. CRS identifiers are
opaque strings compared for equality; nothing is reprojected.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from numba import njit
from shapely.geometry import MultiPolygon, Polygon, mapping, shape
from shapely.ops import unary_union
from shapely.strtree import STRtree
from shapely.validation import explain_validity

from .errors import ConsistencyError, FormatError, InputError

NULL_CLASS = 0
UNSPECIFIED_CRS = "unspecified"
EDGE_TOL = 1e-9
OVERLAP_TOL = 1e-9
BUFFER_QUAD_SEGS = 16


def check_crs(*tags: str) -> str:
    """Return the common CRS tag of the inputs.

    ``"unspecified"`` matches anything (with a warning); two different
    concrete tags raise :class:`ConsistencyError`.
    """
    concrete = {t for t in tags if t != UNSPECIFIED_CRS}
    if len(concrete) > 1:
        raise ConsistencyError(f"mixed CRS inputs: {sorted(concrete)}")
    if UNSPECIFIED_CRS in tags:
        warnings.warn("input with unspecified CRS assumed to match", stacklevel=2)
    return concrete.pop() if concrete else UNSPECIFIED_CRS


@njit(cache=True)
def _points_in_rings(px, py, coords, offsets, tol):
    # Even-odd rule over every ring; points within tol of an edge are inside.
    n = px.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for k in range(n):
        x = px[k]
        y = py[k]
        inside = False
        on_edge = False
        for r in range(offsets.shape[0] - 1):
            for m in range(offsets[r], offsets[r + 1] - 1):
                ax = coords[m, 0]
                ay = coords[m, 1]
                bx = coords[m + 1, 0]
                by = coords[m + 1, 1]
                dx = bx - ax
                dy = by - ay
                len2 = dx * dx + dy * dy
                cross = dx * (y - ay) - dy * (x - ax)
                if cross * cross <= tol * tol * len2:
                    dot = (x - ax) * dx + (y - ay) * dy
                    slack = tol * math.sqrt(len2)
                    if dot >= -slack and dot <= len2 + slack:
                        on_edge = True
                        break
                if (ay > y) != (by > y):
                    xint = ax + (y - ay) * dx / dy
                    if x < xint:
                        inside = not inside
            if on_edge:
                break
        out[k] = inside or on_edge
    return out


def _close_ring(points) -> np.ndarray:
    ring = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(ring) == 0 or not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[:1]])
    return ring


@dataclass(frozen=True, eq=False)
class GeoPolygon:
    """A closed 2D polygon with optional holes and an integer class ID."""

    exterior: np.ndarray
    interiors: tuple = ()
    class_id: int = NULL_CLASS
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        ext = _close_ring(self.exterior)
        holes = tuple(_close_ring(h) for h in self.interiors)
        if len(np.unique(ext[:-1], axis=0)) < 3:
            raise InputError("polygon exterior needs at least 3 distinct vertices")
        poly = Polygon(ext, [h for h in holes])
        if not poly.is_valid:
            raise InputError(f"invalid polygon: {explain_validity(poly)}")
        rings = (ext,) + holes
        object.__setattr__(self, "exterior", ext)
        object.__setattr__(self, "interiors", holes)
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "_coords", np.ascontiguousarray(np.vstack(rings)))
        object.__setattr__(
            self, "_offsets", np.cumsum([0] + [len(r) for r in rings]).astype(np.int64)
        )
        object.__setattr__(self, "bounds", poly.bounds)

    @classmethod
    def from_shapely(cls, poly: Polygon, class_id=NULL_CLASS, attributes=None):
        return cls(
            np.asarray(poly.exterior.coords)[:, :2],
            tuple(np.asarray(h.coords)[:, :2] for h in poly.interiors),
            class_id,
            dict(attributes or {}),
        )

    def to_shapely(self) -> Polygon:
        return Polygon(self.exterior, list(self.interiors))

    @property
    def area(self) -> float:
        return self.to_shapely().area

    def contains(self, x, y) -> np.ndarray:
        """Vectorized point-in-polygon; points on an edge count as inside."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        out = np.zeros(x.shape, dtype=bool)
        xmin, ymin, xmax, ymax = self.bounds
        cand = (x >= xmin - EDGE_TOL) & (x <= xmax + EDGE_TOL)
        cand &= (y >= ymin - EDGE_TOL) & (y <= ymax + EDGE_TOL)
        idx = np.flatnonzero(cand)
        if len(idx):
            out[idx] = _points_in_rings(
                np.ascontiguousarray(x[idx]),
                np.ascontiguousarray(y[idx]),
                self._coords,
                self._offsets,
                EDGE_TOL,
            )
        return out


@dataclass(frozen=True, eq=False)
class Region:
    """A possibly multi-part area made of disjoint polygons."""

    parts: tuple

    def contains(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.zeros(x.shape, dtype=bool)
        for part in self.parts:
            out |= part.contains(x, y)
        return out

    @property
    def area(self) -> float:
        return float(sum(p.area for p in self.parts))

    def to_shapely(self):
        return MultiPolygon([p.to_shapely() for p in self.parts])


@dataclass(frozen=True, eq=False)
class LabelPolygons:
    """Non-overlapping labeled polygons sharing one CRS."""

    polygons: tuple
    crs_tag: str = UNSPECIFIED_CRS

    def __post_init__(self):
        object.__setattr__(self, "polygons", tuple(self.polygons))
        self.validate()

    def validate(self) -> None:
        geoms = [p.to_shapely() for p in self.polygons]
        if len(geoms) < 2:
            return
        tree = STRtree(geoms)
        left, right = tree.query(geoms, predicate="intersects")
        for a, b in zip(left, right):
            if a < b:
                overlap = geoms[a].intersection(geoms[b]).area
                if overlap > OVERLAP_TOL:
                    raise InputError(
                        f"label polygons {a} and {b} overlap by {overlap:.3g} m^2"
                    )

    def __len__(self):
        return len(self.polygons)

    def __iter__(self):
        return iter(self.polygons)

    @property
    def class_ids(self) -> np.ndarray:
        return np.array([p.class_id for p in self.polygons], dtype=np.int64)

    def query(self, x, y) -> np.ndarray:
        """Class ID at each point, NULL_CLASS outside every polygon.

        A point on an edge shared by two polygons takes the class of the one
        listed first.
        """
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        out = np.full(x.shape, NULL_CLASS, dtype=np.int32)
        free = np.ones(x.shape, dtype=bool)
        for poly in self.polygons:
            idx = np.flatnonzero(free)
            if not len(idx):
                break
            hit = poly.contains(x[idx], y[idx])
            out[idx[hit]] = poly.class_id
            free[idx[hit]] = False
        return out


def query_polygon_label(labels: LabelPolygons, x: float, y: float) -> int:
    return int(labels.query(x, y)[0])


def buffer_polygons(labels, r_b: float) -> Region:
    """Region of all points within ``r_b`` meters of any input polygon."""
    if r_b < 0 or not np.isfinite(r_b):
        raise InputError(f"buffer radius must be >= 0, got {r_b}")
    polys = labels.polygons if isinstance(labels, LabelPolygons) else labels
    merged = unary_union([p.to_shapely() for p in polys])
    if r_b > 0:
        merged = merged.buffer(r_b, quad_segs=BUFFER_QUAD_SEGS)
    if merged.is_empty:
        return Region(())
    parts = list(merged.geoms) if hasattr(merged, "geoms") else [merged]
    return Region(tuple(GeoPolygon.from_shapely(p) for p in parts))


@dataclass(frozen=True, eq=False)
class GeoRaster:
    """Single-band grid with an affine pixel -> world transform.

    ``transform`` is ``(x0, a, b, y0, d, e)`` mapping continuous pixel
    coordinates ``(row, col)`` to ``x = x0 + a*col + b*row`` and
    ``y = y0 + d*col + e*row``. Pixel ``(r, c)`` covers ``[r, r+1) x [c, c+1)``;
    its center sits at ``(r + 0.5, c + 0.5)``.
    """

    values: np.ndarray
    transform: tuple
    nodata: float = -9999.0
    crs_tag: str = UNSPECIFIED_CRS

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2 or min(vals.shape) < 1:
            raise InputError(f"raster must be a non-empty 2D grid, got {vals.shape}")
        if not np.isfinite(self.nodata):
            raise InputError("nodata must be a finite sentinel")
        vals[~np.isfinite(vals)] = self.nodata
        vals.setflags(write=False)
        t = tuple(float(v) for v in self.transform)
        if len(t) != 6:
            raise InputError("transform needs 6 coefficients")
        det = t[1] * t[5] - t[2] * t[4]
        if det == 0:
            raise InputError("raster transform is not invertible")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "transform", t)
        object.__setattr__(self, "nodata", float(self.nodata))

    @classmethod
    def from_origin(cls, west, north, cellsize, values, nodata=-9999.0, crs_tag=UNSPECIFIED_CRS):
        return cls(values, (west, cellsize, 0.0, north, 0.0, -cellsize), nodata, crs_tag)

    @property
    def shape(self):
        return self.values.shape

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def is_north_up(self) -> bool:
        x0, a, b, y0, d, e = self.transform
        return b == 0 and d == 0 and a > 0 and e < 0

    @property
    def cellsize(self) -> float:
        x0, a, b, y0, d, e = self.transform
        if not (self.is_north_up and a == -e):
            raise InputError("raster does not have square north-up cells")
        return a

    def valid_mask(self) -> np.ndarray:
        return self.values != self.nodata

    def pixel_to_world(self, row, col):
        x0, a, b, y0, d, e = self.transform
        row = np.asarray(row, dtype=np.float64)
        col = np.asarray(col, dtype=np.float64)
        return x0 + a * col + b * row, y0 + d * col + e * row

    def world_to_pixel(self, x, y):
        """Continuous (row, col) of world points."""
        x0, a, b, y0, d, e = self.transform
        det = a * e - b * d
        dx = np.asarray(x, dtype=np.float64) - x0
        dy = np.asarray(y, dtype=np.float64) - y0
        col = (e * dx - b * dy) / det
        row = (-d * dx + a * dy) / det
        return row, col

    def pixel_centers(self):
        rr, cc = np.meshgrid(
            np.arange(self.rows) + 0.5, np.arange(self.cols) + 0.5, indexing="ij"
        )
        return self.pixel_to_world(rr, cc)

    def query(self, x, y, method: str = "bilinear") -> np.ndarray:
        """Sample the raster at world points; nodata outside the extent."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        row, col = self.world_to_pixel(x, y)
        nr, nc = self.values.shape
        out = np.full(x.shape, self.nodata)
        ok = (row >= 0) & (row <= nr) & (col >= 0) & (col <= nc)
        row, col = row[ok], col[ok]
        vals = self.values
        if method == "nearest":
            r = np.minimum(np.floor(row).astype(np.int64), nr - 1)
            c = np.minimum(np.floor(col).astype(np.int64), nc - 1)
            out[ok] = vals[r, c]
            return out
        if method != "bilinear":
            raise InputError(f"unknown interpolation method {method!r}")
        # Clamp to the grid of pixel centers: the outer half-pixel ring
        # replicates the edge values.
        u = np.clip(row - 0.5, 0.0, nr - 1)
        v = np.clip(col - 0.5, 0.0, nc - 1)
        r0 = np.minimum(np.floor(u).astype(np.int64), max(nr - 2, 0))
        c0 = np.minimum(np.floor(v).astype(np.int64), max(nc - 2, 0))
        r1 = np.minimum(r0 + 1, nr - 1)
        c1 = np.minimum(c0 + 1, nc - 1)
        fr = u - r0
        fc = v - c0
        w00 = (1 - fr) * (1 - fc)
        w01 = (1 - fr) * fc
        w10 = fr * (1 - fc)
        w11 = fr * fc
        v00, v01, v10, v11 = vals[r0, c0], vals[r0, c1], vals[r1, c0], vals[r1, c1]
        # Nested lerps reproduce constant neighborhoods exactly.
        top = v00 + fc * (v01 - v00)
        bottom = v10 + fc * (v11 - v10)
        res = top + fr * (bottom - top)
        nd = self.nodata
        bad = (
            ((w00 > 0) & (v00 == nd))
            | ((w01 > 0) & (v01 == nd))
            | ((w10 > 0) & (v10 == nd))
            | ((w11 > 0) & (v11 == nd))
        )
        res[bad] = nd
        out[ok] = res
        return out


def query_raster(raster: GeoRaster, x: float, y: float, method: str = "bilinear") -> float:
    return float(raster.query(x, y, method)[0])


# ---------------------------------------------------------------------------
# GeoJSON


def _class_from_json(value, where):
    if value is None:
        return NULL_CLASS
    if isinstance(value, bool) or not isinstance(value, int):
        raise InputError(f"{where}: class_id must be an integer or null")
    if value <= 0:
        raise InputError(f"{where}: class_id must be >= 1")
    return value


def class_to_json(class_id):
    return None if class_id == NULL_CLASS else int(class_id)


def load_geojson(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"line {exc.lineno}", exc.msg) from None
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if doc.get("type") != "FeatureCollection":
        raise FormatError(path, "top level", "expected a GeoJSON FeatureCollection")
    if "crs_tag" not in doc:
        warnings.warn(f"{path}: no crs_tag, treating as unspecified", stacklevel=2)
    return doc


def read_label_polygons(path) -> LabelPolygons:
    doc = load_geojson(path)
    polys = []
    for k, feat in enumerate(doc.get("features", [])):
        props = dict(feat.get("properties") or {})
        cid = _class_from_json(props.pop("class_id", None), f"{path}: feature {k}")
        try:
            geom = shape(feat["geometry"])
        except Exception as exc:  # shapely raises several types
            raise FormatError(path, f"feature {k}", f"bad geometry: {exc}") from None
        parts = geom.geoms if isinstance(geom, MultiPolygon) else [geom]
        for part in parts:
            if not isinstance(part, Polygon):
                raise FormatError(path, f"feature {k}", "expected polygon geometry")
            polys.append(GeoPolygon.from_shapely(part, cid, props))
    return LabelPolygons(tuple(polys), doc.get("crs_tag", UNSPECIFIED_CRS))


def feature_collection(features: Iterable[dict], crs_tag: str) -> dict:
    return {"type": "FeatureCollection", "crs_tag": crs_tag, "features": list(features)}


def polygon_feature(poly: GeoPolygon, **properties) -> dict:
    props = {"class_id": class_to_json(poly.class_id)}
    props.update(poly.attributes)
    props.update(properties)
    return {"type": "Feature", "geometry": mapping(poly.to_shapely()), "properties": props}


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def write_label_polygons(labels: LabelPolygons, path) -> None:
    write_json(path, feature_collection((polygon_feature(p) for p in labels), labels.crs_tag))


# ---------------------------------------------------------------------------
# ESRI ASCII grid

_ASC_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def read_asc(path, crs_tag: str = UNSPECIFIED_CRS) -> GeoRaster:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    header = {}
    k = 0
    while k < len(lines):
        parts = lines[k].split()
        if len(parts) == 2 and parts[0][0].isalpha():
            header[parts[0].lower()] = parts[1]
            k += 1
        else:
            break
    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        cell = float(header["cellsize"])
        if "xllcenter" in header:
            xll = float(header["xllcenter"]) - cell / 2
            yll = float(header["yllcenter"]) - cell / 2
        else:
            xll = float(header["xllcorner"])
            yll = float(header["yllcorner"])
        nodata = float(header.get("nodata_value", -9999.0))
    except (KeyError, ValueError) as exc:
        raise FormatError(path, "header", f"bad or missing keyword ({exc})") from None
    try:
        vals = np.array(" ".join(lines[k:]).split(), dtype=np.float64)
    except ValueError as exc:
        raise FormatError(path, f"line {k + 1}", str(exc)) from None
    if vals.size != ncols * nrows:
        raise FormatError(path, "body", f"expected {ncols * nrows} values, got {vals.size}")
    return GeoRaster.from_origin(
        xll, yll + nrows * cell, cell, vals.reshape(nrows, ncols), nodata, crs_tag
    )


def write_asc(raster: GeoRaster, path) -> None:
    cell = raster.cellsize
    x0, _, _, y0, _, _ = raster.transform
    head = [
        f"ncols {raster.cols}",
        f"nrows {raster.rows}",
        f"xllcorner {x0!r}",
        f"yllcorner {y0 - raster.rows * cell!r}",
        f"cellsize {cell!r}",
        f"NODATA_value {raster.nodata!r}",
    ]
    body = [" ".join(repr(float(v)) for v in row) for row in raster.values]
    Path(path).write_text("\n".join(head + body) + "\n")
