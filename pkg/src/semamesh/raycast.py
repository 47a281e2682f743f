"""Pixel-to-face correspondence by ray casting against a BVH.

A pixel's ray starts at the camera center and passes through the pixel
center. The reported face is the first one hit with ``t > T_MIN`` meters.
Hits within ``T_TIE`` of the nearest one count as ties and resolve to the
smallest face index, so the answer does not depend on traversal order.
Intersection is double sided.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .camera import Camera
from .errors import InputError
from .mesh import Mesh

NULL_FACE = -1
T_MIN = 1e-6
T_TIE = 1e-9
BARY_EPS = 1e-9
LEAF_SIZE = 4
STACK_SIZE = 256


@njit(cache=True)
def _intersect(tri, f, ox, oy, oz, dx, dy, dz):
    # Moller-Trumbore; returns +inf on a miss.
    ax = tri[f, 0, 0]
    ay = tri[f, 0, 1]
    az = tri[f, 0, 2]
    e1x = tri[f, 1, 0] - ax
    e1y = tri[f, 1, 1] - ay
    e1z = tri[f, 1, 2] - az
    e2x = tri[f, 2, 0] - ax
    e2y = tri[f, 2, 1] - ay
    e2z = tri[f, 2, 2] - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return np.inf
    inv = 1.0 / det
    sx = ox - ax
    sy = oy - ay
    sz = oz - az
    u = (sx * px + sy * py + sz * pz) * inv
    if u < -BARY_EPS or u > 1.0 + BARY_EPS:
        return np.inf
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -BARY_EPS or u + v > 1.0 + BARY_EPS:
        return np.inf
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= T_MIN:
        return np.inf
    return t


@njit(cache=True)
def _slab(lo, hi, o, inv, tnear, tfar):
    # ``inv`` is 1/d, or 0 with the sentinel meaning "axis-parallel ray".
    if inv == 0.0:
        if o < lo or o > hi:
            return np.inf, -np.inf
        return tnear, tfar
    t1 = (lo - o) * inv
    t2 = (hi - o) * inv
    if t1 > t2:
        t1, t2 = t2, t1
    return max(tnear, t1), min(tfar, t2)


@njit(cache=True)
def _box_entry(nmin, nmax, n, ox, oy, oz, ix, iy, iz, tmax):
    # Entry distance of the ray into box n, +inf if it misses within [0, tmax].
    tn, tf = _slab(nmin[n, 0], nmax[n, 0], ox, ix, 0.0, tmax)
    if tn > tf:
        return np.inf
    tn, tf = _slab(nmin[n, 1], nmax[n, 1], oy, iy, tn, tf)
    if tn > tf:
        return np.inf
    tn, tf = _slab(nmin[n, 2], nmax[n, 2], oz, iz, tn, tf)
    if tn > tf:
        return np.inf
    return tn


@njit(cache=True)
def _inv(d):
    return 0.0 if d == 0.0 else 1.0 / d


@njit(cache=True)
def _trace(tri, nmin, nmax, left, right, start, count, order, ox, oy, oz, dx, dy, dz, stack, entry):
    if nmin.shape[0] == 0:
        return -1
    ix, iy, iz = _inv(dx), _inv(dy), _inv(dz)
    # pass 1: nearest hit distance, visiting children front to back
    best = np.inf
    root = _box_entry(nmin, nmax, 0, ox, oy, oz, ix, iy, iz, best)
    if root == np.inf:
        return -1
    stack[0] = 0
    entry[0] = root
    sp = 1
    while sp > 0:
        sp -= 1
        n = stack[sp]
        if entry[sp] > best:
            continue
        if left[n] < 0:
            for k in range(start[n], start[n] + count[n]):
                t = _intersect(tri, k, ox, oy, oz, dx, dy, dz)
                if t < best:
                    best = t
        else:
            a = left[n]
            b = right[n]
            ta = _box_entry(nmin, nmax, a, ox, oy, oz, ix, iy, iz, best)
            tb = _box_entry(nmin, nmax, b, ox, oy, oz, ix, iy, iz, best)
            if ta > tb:
                a, b = b, a
                ta, tb = tb, ta
            if tb != np.inf:
                stack[sp] = b
                entry[sp] = tb
                sp += 1
            if ta != np.inf:
                stack[sp] = a
                entry[sp] = ta
                sp += 1
    if best == np.inf:
        return -1
    # pass 2: smallest face index among near-ties
    lim = best + T_TIE
    found = -1
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        n = stack[sp]
        if _box_entry(nmin, nmax, n, ox, oy, oz, ix, iy, iz, lim) == np.inf:
            continue
        if left[n] < 0:
            for k in range(start[n], start[n] + count[n]):
                f = order[k]
                if found >= 0 and f >= found:
                    continue
                if _intersect(tri, k, ox, oy, oz, dx, dy, dz) <= lim:
                    found = f
        else:
            stack[sp] = left[n]
            stack[sp + 1] = right[n]
            sp += 2
    return found


@njit(cache=True)
def _trace_brute(tri, ox, oy, oz, dx, dy, dz):
    nf = tri.shape[0]
    best = np.inf
    for f in range(nf):
        t = _intersect(tri, f, ox, oy, oz, dx, dy, dz)
        if t < best:
            best = t
    if best == np.inf:
        return -1
    lim = best + T_TIE
    for f in range(nf):
        if _intersect(tri, f, ox, oy, oz, dx, dy, dz) <= lim:
            return f
    return -1


@njit(cache=True)
def _pixel_dir(cam, i, j):
    # cam = [fx, fy, cx, cy, ox, oy, oz, R00..R22]
    a = (j + 0.5 - cam[2]) / cam[0]
    b = (i + 0.5 - cam[3]) / cam[1]
    norm = math.sqrt(a * a + b * b + 1.0)
    a /= norm
    b /= norm
    c = 1.0 / norm
    dx = cam[7] * a + cam[8] * b + cam[9] * c
    dy = cam[10] * a + cam[11] * b + cam[12] * c
    dz = cam[13] * a + cam[14] * b + cam[15] * c
    return dx, dy, dz


@njit(parallel=True, cache=True)
def _render_frame(tri, nmin, nmax, left, right, start, count, order, cam, height, width):
    out = np.empty((height, width), dtype=np.int64)
    for i in prange(height):
        stack = np.empty(STACK_SIZE, dtype=np.int64)
        entry = np.empty(STACK_SIZE, dtype=np.float64)
        for j in range(width):
            dx, dy, dz = _pixel_dir(cam, i, j)
            out[i, j] = _trace(
                tri, nmin, nmax, left, right, start, count, order,
                cam[4], cam[5], cam[6], dx, dy, dz, stack, entry,
            )
    return out


@njit(parallel=True, cache=True)
def _render_pixels(tri, nmin, nmax, left, right, start, count, order, cam, rows, cols):
    n = rows.shape[0]
    out = np.empty(n, dtype=np.int64)
    for k in prange(n):
        stack = np.empty(STACK_SIZE, dtype=np.int64)
        entry = np.empty(STACK_SIZE, dtype=np.float64)
        dx, dy, dz = _pixel_dir(cam, rows[k], cols[k])
        out[k] = _trace(
            tri, nmin, nmax, left, right, start, count, order,
            cam[4], cam[5], cam[6], dx, dy, dz, stack, entry,
        )
    return out


@njit(parallel=True, cache=True)
def _brute_pixels(tri, cam, rows, cols):
    n = rows.shape[0]
    out = np.empty(n, dtype=np.int64)
    for k in prange(n):
        dx, dy, dz = _pixel_dir(cam, rows[k], cols[k])
        out[k] = _trace_brute(tri, cam[4], cam[5], cam[6], dx, dy, dz)
    return out


@njit(cache=True)
def _build(fmin, fmax, cent, leaf_size):
    n = cent.shape[0]
    order = np.arange(n)
    cap = max(1, 2 * n)
    nmin = np.empty((cap, 3))
    nmax = np.empty((cap, 3))
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    count = np.zeros(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_s = np.empty(cap, dtype=np.int64)
    st_e = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_s[0] = 0
    st_e[0] = n
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        s = st_s[sp]
        e = st_e[sp]
        for a in range(3):
            lo = np.inf
            hi = -np.inf
            for k in range(s, e):
                f = order[k]
                lo = min(lo, fmin[f, a])
                hi = max(hi, fmax[f, a])
            nmin[node, a] = lo
            nmax[node, a] = hi
        if e - s <= leaf_size:
            start[node] = s
            count[node] = e - s
            continue
        axis = 0
        widest = -1.0
        for a in range(3):
            lo = np.inf
            hi = -np.inf
            for k in range(s, e):
                c = cent[order[k], a]
                lo = min(lo, c)
                hi = max(hi, c)
            if hi - lo > widest:
                widest = hi - lo
                axis = a
        sub = order[s:e].copy()
        keys = np.empty(e - s)
        for k in range(e - s):
            keys[k] = cent[sub[k], axis]
        idx = np.argsort(keys, kind="mergesort")
        for k in range(e - s):
            order[s + k] = sub[idx[k]]
        mid = (s + e) // 2
        left[node] = n_nodes
        right[node] = n_nodes + 1
        st_node[sp] = n_nodes + 1
        st_s[sp] = mid
        st_e[sp] = e
        st_node[sp + 1] = n_nodes
        st_s[sp + 1] = s
        st_e[sp + 1] = mid
        sp += 2
        n_nodes += 2
    return nmin[:n_nodes], nmax[:n_nodes], left[:n_nodes], right[:n_nodes], start[:n_nodes], count[:n_nodes], order


@dataclass(frozen=True, eq=False)
class Bvh:
    """Axis-aligned bounding box tree over mesh faces (median split).

    Leaves hold at most ``LEAF_SIZE`` faces, listed as
    ``order[start:start+count]``. ``triangles`` is stored in that same leaf
    order for memory locality. Boxes are padded slightly so that hits
    accepted by the barycentric tolerance are never culled.
    """

    triangles: np.ndarray
    node_min: np.ndarray
    node_max: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray

    @property
    def n_faces(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.node_min.shape[0]

    def arrays(self):
        return (self.triangles, self.node_min, self.node_max, self.left,
                self.right, self.start, self.count, self.order)


def build_bvh(mesh: Mesh, leaf_size: int = LEAF_SIZE) -> Bvh:
    tri = np.ascontiguousarray(mesh.triangles(), dtype=np.float64).reshape(-1, 3, 3)
    if not len(tri):
        z = np.zeros(0, dtype=np.int64)
        return Bvh(tri, np.zeros((0, 3)), np.zeros((0, 3)), z, z, z, z, z)
    scale = float(np.abs(tri).max())
    pad = 1e-6 + 1e-9 * scale
    fmin = tri.min(axis=1) - pad
    fmax = tri.max(axis=1) + pad
    *nodes, order = _build(fmin, fmax, tri.mean(axis=1), leaf_size)
    return Bvh(np.ascontiguousarray(tri[order]), *nodes, order)


def camera_params(camera: Camera) -> np.ndarray:
    return np.concatenate(
        [[camera.fx, camera.fy, camera.cx, camera.cy], camera.center, camera.rotation.ravel()]
    ).astype(np.float64)


def _check_bvh(mesh: Mesh, bvh: Bvh):
    if bvh.n_faces != mesh.n_faces:
        raise InputError("BVH was built for a different mesh")


def render_face_index_image(mesh: Mesh, bvh: Bvh, camera: Camera) -> np.ndarray:
    """Face index seen through every pixel; ``NULL_FACE`` (-1) on a miss."""
    _check_bvh(mesh, bvh)
    if not mesh.n_faces:
        return np.full((camera.height, camera.width), NULL_FACE, dtype=np.int64)
    return _render_frame(*bvh.arrays(), camera_params(camera), camera.height, camera.width)


def pix2face_many(mesh: Mesh, bvh: Bvh, camera: Camera, rows, cols) -> np.ndarray:
    rows = np.ascontiguousarray(rows, dtype=np.int64).ravel()
    cols = np.ascontiguousarray(cols, dtype=np.int64).ravel()
    _check_bvh(mesh, bvh)
    bad = (rows < 0) | (rows >= camera.height) | (cols < 0) | (cols >= camera.width)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise InputError(f"pixel ({rows[k]}, {cols[k]}) outside {camera.height}x{camera.width} image")
    if not mesh.n_faces:
        return np.full(rows.shape, NULL_FACE, dtype=np.int64)
    return _render_pixels(*bvh.arrays(), camera_params(camera), rows, cols)


def pix2face(mesh: Mesh, bvh: Bvh, camera: Camera, i: int, j: int) -> int:
    """Index of the first face seen through pixel (i, j), or ``NULL_FACE``."""
    return int(pix2face_many(mesh, bvh, camera, [i], [j])[0])


def pix2face_brute_force(mesh: Mesh, camera: Camera, rows, cols) -> np.ndarray:
    """Reference answer scanning every face for every pixel (slow)."""
    rows = np.ascontiguousarray(rows, dtype=np.int64).ravel()
    cols = np.ascontiguousarray(cols, dtype=np.int64).ravel()
    tri = np.ascontiguousarray(mesh.triangles(), dtype=np.float64).reshape(-1, 3, 3)
    return _brute_pixels(tri, camera_params(camera), rows, cols)
