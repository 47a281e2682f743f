"""Deterministic synthetic forest: cone trees on flat ground plus a camera rig.

Every geometric quantity of the scene (cone heights, crown footprints,
silhouettes) is available in closed form, which makes it a test bed for the
whole pipeline. The scene is fully determined by its arguments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import Camera, CameraSet, look_at
from .geo import GeoPolygon, GeoRaster, LabelPolygons
from .mesh import Mesh

CROWN_RADIUS_RATIO = 0.25


@dataclass(frozen=True)
class ConeTree:
    id: int
    x: float
    y: float
    height: float
    radius: float
    class_id: int

    def surface_height(self, x, y):
        """Height of the analytic cone above ground, 0 outside its base."""
        d = np.hypot(np.asarray(x) - self.x, np.asarray(y) - self.y)
        return np.maximum(0.0, self.height * (1.0 - d / self.radius))


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    mesh: Mesh
    cameras: CameraSet
    dtm: GeoRaster
    dsm: GeoRaster
    crowns: LabelPolygons
    trees: tuple
    ground_z: float
    ground_faces: int
    n_classes: int
    crs_tag: str

    @property
    def cone_vertex_start(self) -> int:
        side = int(round(math.sqrt(self.ground_faces / 2))) + 1
        return side * side


def cone_levels(height: float, levels: int) -> np.ndarray:
    """Ring elevations of a cone; always contains 2.0 m exactly."""
    z = np.linspace(0.0, height, levels + 1)[:-1]
    return np.unique(np.concatenate([z, [2.0]]))


def _cone(tree: ConeTree, base_z: float, sectors: int, levels: int, first_vertex: int):
    zs = cone_levels(tree.height, levels)
    theta = 2 * np.pi * np.arange(sectors) / sectors
    verts = []
    for z in zs:
        r = tree.radius * (1.0 - z / tree.height)
        verts.append(np.column_stack([
            tree.x + r * np.cos(theta),
            tree.y + r * np.sin(theta),
            np.full(sectors, base_z + z),
        ]))
    verts.append([[tree.x, tree.y, base_z + tree.height]])
    verts = np.vstack(verts)
    faces = []
    k = np.arange(sectors)
    for ring in range(len(zs) - 1):
        a = first_vertex + ring * sectors + k
        b = first_vertex + ring * sectors + (k + 1) % sectors
        c = a + sectors
        d = b + sectors
        faces.append(np.column_stack([a, b, d]))
        faces.append(np.column_stack([a, d, c]))
    top = first_vertex + (len(zs) - 1) * sectors
    apex = first_vertex + len(verts) - 1
    faces.append(np.column_stack([top + k, top + (k + 1) % sectors, np.full(sectors, apex)]))
    return verts, np.vstack(faces)


def _place_trees(rng, n_trees, extent, n_classes, x0, y0):
    trees = []
    attempts = 0
    while len(trees) < n_trees:
        attempts += 1
        if attempts > 100000:
            raise ValueError(f"cannot fit {n_trees} non-overlapping trees in {extent} m")
        h = rng.uniform(10.0, 30.0)
        r = CROWN_RADIUS_RATIO * h
        x = rng.uniform(x0 + r + 2.0, x0 + extent - r - 2.0)
        y = rng.uniform(y0 + r + 2.0, y0 + extent - r - 2.0)
        if all(math.hypot(x - t.x, y - t.y) > r + t.radius + 1.0 for t in trees):
            cls = int(rng.integers(1, n_classes + 1))
            trees.append(ConeTree(len(trees) + 1, x, y, h, r, cls))
    return trees


def _rig(n_cameras, extent, x0, y0, ground_z, size):
    w, h = size
    fx = (w / 2) / math.tan(math.radians(35.0))
    K = np.array([[fx, 0, w / 2], [0, fx, h / 2], [0, 0, 1.0]])
    cx, cy = x0 + extent / 2, y0 + extent / 2
    n_nadir = max(1, n_cameras // 5)
    cams = []
    side = math.ceil(math.sqrt(n_nadir))
    for k in range(n_nadir):
        gx = (k % side + 0.5) / side
        gy = (k // side + 0.5) / side
        px, py = x0 + gx * extent, y0 + gy * extent
        T = look_at((px, py, ground_z + 120.0), (px, py, ground_z))
        cams.append(Camera(K, T, w, h, f"nadir_{k:03d}"))
    n_obl = n_cameras - n_nadir
    ring = 80.0 * math.tan(math.radians(25.0))
    for k in range(n_obl):
        a = 2 * math.pi * k / max(n_obl, 1)
        pos = (cx + ring * math.cos(a), cy + ring * math.sin(a), ground_z + 80.0)
        cams.append(Camera(K, look_at(pos, (cx, cy, ground_z)), w, h, f"oblique_{k:03d}"))
    return cams


def crown_polygon(tree: ConeTree, segments: int = 64) -> GeoPolygon:
    theta = 2 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([tree.x + tree.radius * np.cos(theta), tree.y + tree.radius * np.sin(theta)])
    return GeoPolygon(ring, (), tree.class_id, {"tree_id": str(tree.id)})


def make_scene(
    seed: int = 0,
    n_trees: int = 20,
    extent: float = 100.0,
    *,
    origin=(500000.0, 4400000.0),
    ground_z: float = 1200.0,
    ground_cells: int = 150,
    sectors: int = 32,
    levels: int = 12,
    n_cameras: int = 20,
    image_size=(320, 240),
    n_classes: int = 5,
    raster_cell: float = 0.5,
    crs_tag: str = "EPSG:32610",
) -> SyntheticScene:
    rng = np.random.default_rng(seed)
    x0, y0 = origin
    trees = _place_trees(rng, n_trees, extent, n_classes, x0, y0)

    g = np.linspace(0.0, extent, ground_cells + 1)
    gx, gy = np.meshgrid(x0 + g, y0 + g, indexing="xy")
    verts = [np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, ground_z)])]
    n = ground_cells + 1
    r, c = np.meshgrid(np.arange(ground_cells), np.arange(ground_cells), indexing="ij")
    a = (r * n + c).ravel()
    faces = [np.column_stack([a, a + 1, a + n + 1]), np.column_stack([a, a + n + 1, a + n])]
    nv = len(verts[0])
    for t in trees:
        v, f = _cone(t, ground_z, sectors, levels, nv)
        verts.append(v)
        faces.append(f)
        nv += len(v)
    mesh = Mesh(np.vstack(verts), np.vstack(faces))

    ncell = int(round(extent / raster_cell))
    dtm = GeoRaster.from_origin(x0, y0 + extent, raster_cell, np.full((ncell, ncell), ground_z), crs_tag=crs_tag)
    px, py = dtm.pixel_centers()
    canopy = np.zeros_like(px)
    for t in trees:
        canopy = np.maximum(canopy, t.surface_height(px, py))
    dsm = GeoRaster(ground_z + canopy, dtm.transform, dtm.nodata, crs_tag)

    cams = CameraSet(tuple(_rig(n_cameras, extent, x0, y0, ground_z, image_size)), crs_tag)
    crowns = LabelPolygons(tuple(crown_polygon(t) for t in trees), crs_tag)
    return SyntheticScene(
        mesh, cams, dtm, dsm, crowns, tuple(trees), ground_z, 2 * ground_cells**2, n_classes, crs_tag
    )


def field_survey(scene: SyntheticScene, seed: int = 0, jitter: float = 0.3, height_noise: float = 0.05):
    """Simulated field measurements of the scene's trees (position and height noise)."""
    from .trees import FieldTree

    rng = np.random.default_rng([seed, 1])
    out = []
    for t in scene.trees:
        dx, dy = rng.normal(0.0, jitter, 2)
        h = t.height * (1.0 + rng.normal(0.0, height_noise))
        out.append(FieldTree(t.id, t.x + dx, t.y + dy, max(h, 0.1), t.class_id))
    return out
