"""Numeric hot kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the ``CONVERGE_NUMBA``
environment variable: ``1``/``on`` forces numba, ``0``/``off`` forces the
numpy fallback, anything else (or unset) auto-detects. Both paths compute
bit-compatible results; ``benchmarks/bench_kernels.py`` compares them.
"""
from __future__ import annotations

import math
import os

import numpy as np

_FLAG = os.environ.get("CONVERGE_NUMBA", "auto").strip().lower()
if _FLAG in ("0", "off", "false", "no"):
    _NUMBA = False
elif _FLAG in ("1", "on", "true", "yes"):
    _NUMBA = True
else:
    try:
        import numba  # noqa: F401
        _NUMBA = True
    except ImportError:  # pragma: no cover
        _NUMBA = False


def backend() -> str:
    """Name of the active kernel backend."""
    return "numba" if _NUMBA else "numpy"


# -- numpy reference implementations ---------------------------------------

def _array_factor_np(phases, ex, ey, wx, wy, k):
    arg = phases + k * (ex * wx + ey * wy)
    return complex(np.exp(1j * arg).sum())


def _ray_box_np(ox, oy, oz, dx, dy, dz, mins, maxs):
    """Nearest slab-method hit distance per box; -1 where the ray misses.

    A ray starting inside a box hits it at distance 0.
    """
    origin = np.empty(3)
    origin[0], origin[1], origin[2] = ox, oy, oz
    direction = np.empty(3)
    direction[0], direction[1], direction[2] = dx, dy, dz
    n = mins.shape[0]
    out = np.full(n, -1.0)
    for i in range(n):
        tmin, tmax = -np.inf, np.inf
        ok = True
        for a in range(3):
            if direction[a] != 0.0:
                t1 = (mins[i, a] - origin[a]) / direction[a]
                t2 = (maxs[i, a] - origin[a]) / direction[a]
                if t1 > t2:
                    t1, t2 = t2, t1
                tmin = max(tmin, t1)
                tmax = min(tmax, t2)
            elif origin[a] < mins[i, a] or origin[a] > maxs[i, a]:
                ok = False
                break
        if ok and tmax >= tmin and tmax >= 0.0:
            out[i] = max(tmin, 0.0)
    return out


def _segment_boxes_np(ax, ay, az, bx, by, bz, mins, maxs):
    """Whether the open segment (a, b) passes through each box interior."""
    a = np.empty(3)
    a[0], a[1], a[2] = ax, ay, az
    d = np.empty(3)
    d[0], d[1], d[2] = bx - ax, by - ay, bz - az
    n = mins.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        tmin, tmax = 0.0, 1.0
        ok = True
        for ax_i in range(3):
            if d[ax_i] != 0.0:
                t1 = (mins[i, ax_i] - a[ax_i]) / d[ax_i]
                t2 = (maxs[i, ax_i] - a[ax_i]) / d[ax_i]
                if t1 > t2:
                    t1, t2 = t2, t1
                tmin = max(tmin, t1)
                tmax = min(tmax, t2)
            elif a[ax_i] <= mins[i, ax_i] or a[ax_i] >= maxs[i, ax_i]:
                ok = False
                break
        # strict inequality keeps face-tangent segments and the endpoints out
        out[i] = ok and tmin < tmax and tmax > 0.0 and tmin < 1.0
    return out


def _points_in_boxes_np(pts, mins, maxs):
    """Count, per point, how many boxes strictly contain it."""
    inside = (pts[:, None, :] > mins[None, :, :]) & (pts[:, None, :] < maxs[None, :, :])
    return inside.all(axis=2).sum(axis=1)


# -- numba versions ---------------------------------------------------------

if _NUMBA:
    from numba import njit

    @njit(cache=True)
    def _array_factor_nb(phases, ex, ey, wx, wy, k):  # pragma: no cover
        re = 0.0
        im = 0.0
        for i in range(phases.shape[0]):
            arg = phases[i] + k * (ex[i] * wx + ey[i] * wy)
            re += math.cos(arg)
            im += math.sin(arg)
        return complex(re, im)

    _ray_box_nb = njit(cache=True)(_ray_box_np)
    _segment_boxes_nb = njit(cache=True)(_segment_boxes_np)

    @njit(cache=True)
    def _points_in_boxes_nb(pts, mins, maxs):  # pragma: no cover
        out = np.zeros(pts.shape[0], dtype=np.int64)
        for p in range(pts.shape[0]):
            for b in range(mins.shape[0]):
                hit = True
                for a in range(3):
                    if not (mins[b, a] < pts[p, a] < maxs[b, a]):
                        hit = False
                        break
                if hit:
                    out[p] += 1
        return out

    array_factor_sum = _array_factor_nb
    ray_box_distances = _ray_box_nb
    segment_box_mask = _segment_boxes_nb
    points_in_boxes = _points_in_boxes_nb
else:
    array_factor_sum = _array_factor_np
    ray_box_distances = _ray_box_np
    segment_box_mask = _segment_boxes_np
    points_in_boxes = _points_in_boxes_np
