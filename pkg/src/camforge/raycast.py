"""Numba kernels for ray / axis-aligned-box intersection.

Boxes are given as ``lo``/``hi`` arrays of shape (N, 3). A box with zero
extent along one axis is a plane. Rays are ``origin + t * direction`` and
only hits with ``t > EPS`` count.
"""
import numba
import numpy as np

EPS = 1e-6


@numba.njit(cache=True, nogil=True)
def _slab(ox, oy, oz, dx, dy, dz, lo, hi, k):
    t_near = -np.inf
    t_far = np.inf
    axis = -1
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    for a in range(3):
        if d[a] == 0.0:
            if o[a] < lo[k, a] or o[a] > hi[k, a]:
                return np.inf, -1
            continue
        inv = 1.0 / d[a]
        t1 = (lo[k, a] - o[a]) * inv
        t2 = (hi[k, a] - o[a]) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > t_near:
            t_near = t1
            axis = a
        if t2 < t_far:
            t_far = t2
    if axis < 0 or t_near > t_far or t_near <= EPS:
        return np.inf, -1
    return t_near, axis


@numba.njit(cache=True, nogil=True)
def cast_shared_origin(origin, dirs, lo, hi):
    """Nearest hit for rays sharing one origin.

    Returns (t, box index, hit axis); misses have t=inf and index -1.
    """
    n = dirs.shape[0]
    t_out = np.full(n, np.inf)
    idx_out = np.full(n, -1, dtype=np.int64)
    axis_out = np.full(n, -1, dtype=np.int64)
    nb = lo.shape[0]
    ox, oy, oz = origin[0], origin[1], origin[2]
    for i in range(n):
        dx, dy, dz = dirs[i, 0], dirs[i, 1], dirs[i, 2]
        best = np.inf
        for k in range(nb):
            t, a = _slab(ox, oy, oz, dx, dy, dz, lo, hi, k)
            if t < best:
                best = t
                idx_out[i] = k
                axis_out[i] = a
        t_out[i] = best
    return t_out, idx_out, axis_out


@numba.njit(cache=True, nogil=True)
def occluded(points, target, lo, hi, skip):
    """True where the segment from ``points[i]`` to ``target`` is blocked.

    ``skip[i]`` is the box the point lies on; it is ignored to avoid
    self-shadowing acne.
    """
    n = points.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    nb = lo.shape[0]
    for i in range(n):
        dx = target[0] - points[i, 0]
        dy = target[1] - points[i, 1]
        dz = target[2] - points[i, 2]
        for k in range(nb):
            if k == skip[i]:
                continue
            t, a = _slab(points[i, 0], points[i, 1], points[i, 2], dx, dy, dz, lo, hi, k)
            if t < 1.0 - EPS:
                out[i] = True
                break
    return out
