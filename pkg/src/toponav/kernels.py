"""Low-level grid kernels: raycasting, segment marching, distance fields, depth projection.

Hot paths are numba-jitted when numba is importable; otherwise the pure-Python
mirrors below are used (identical semantics, much slower).

Distance fields track (straight, diagonal) step counts as integers and derive
metric length as ``(s + sqrt(2) * d) * resolution``. Recomputing the key from
the integer pair on every comparison keeps results bit-identical across
implementations regardless of relaxation order.
"""

from __future__ import annotations

import math

import numpy as np

SQRT2 = math.sqrt(2.0)

# 8-connectivity: 4 straight then 4 diagonal moves, fixed order for determinism.
_NEIGH = np.array(
    [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)],
    dtype=np.int64,
)
_DIAG = np.array([0, 0, 0, 0, 1, 1, 1, 1], dtype=np.int64)


def _raycast_batch_py(occ, ox, oy, res, x0, y0, angles, max_range, out):
    h, w = occ.shape
    big = 1e30
    for k in range(angles.shape[0]):
        a = angles[k]
        dx = math.cos(a)
        dy = math.sin(a)
        cx = int(math.floor((x0 - ox) / res))
        cy = int(math.floor((y0 - oy) / res))
        if cx < 0 or cx >= w or cy < 0 or cy >= h or occ[cy, cx]:
            out[k] = 0.0
            continue
        if dx > 0.0:
            step_x = 1
            t_max_x = ((cx + 1) * res + ox - x0) / dx
            t_dx = res / dx
        elif dx < 0.0:
            step_x = -1
            t_max_x = (cx * res + ox - x0) / dx
            t_dx = -res / dx
        else:
            step_x = 0
            t_max_x = big
            t_dx = big
        if dy > 0.0:
            step_y = 1
            t_max_y = ((cy + 1) * res + oy - y0) / dy
            t_dy = res / dy
        elif dy < 0.0:
            step_y = -1
            t_max_y = (cy * res + oy - y0) / dy
            t_dy = -res / dy
        else:
            step_y = 0
            t_max_y = big
            t_dy = big
        depth = max_range
        while True:
            if t_max_x < t_max_y:
                t = t_max_x
                cx += step_x
                t_max_x += t_dx
            else:
                t = t_max_y
                cy += step_y
                t_max_y += t_dy
            if t >= max_range:
                break
            if cx < 0 or cx >= w or cy < 0 or cy >= h:
                depth = t
                break
            if occ[cy, cx]:
                depth = t
                break
        out[k] = depth
    return out


def _march_free_py(occ, ox, oy, res, x0, y0, ux, uy, dist, step):
    """Longest t in [0, dist] such that every sample point up to t lies on a free cell."""
    h, w = occ.shape
    if dist <= 0.0:
        return 0.0
    n = int(dist / step) + 1
    t_ok = 0.0
    for i in range(1, n + 1):
        t = i * step
        if t > dist:
            t = dist
        x = x0 + ux * t
        y = y0 + uy * t
        cx = int(math.floor((x - ox) / res))
        cy = int(math.floor((y - oy) / res))
        if cx < 0 or cx >= w or cy < 0 or cy >= h or occ[cy, cx]:
            return t_ok
        t_ok = t
        if t >= dist:
            break
    return t_ok


def _dist_field_py(occ, sr, sc, tr, tc, steps_s, steps_d):
    """Dijkstra over the free cells of ``occ`` from (sr, sc), 8-connected.

    Fills integer straight/diagonal step-count arrays. Stops early when the
    target (tr, tc) is settled (pass -1, -1 for a full field).
    """
    h, w = occ.shape
    steps_s.fill(-1)
    steps_d.fill(-1)
    if occ[sr, sc]:
        return
    cap = 16 * h * w + 16
    heap_key = np.empty(cap, dtype=np.float64)
    heap_idx = np.empty(cap, dtype=np.int64)
    best = np.full(h * w, np.inf, dtype=np.float64)
    done = np.zeros(h * w, dtype=np.uint8)
    size = 0

    def push(key, idx):
        nonlocal size
        i = size
        heap_key[i] = key
        heap_idx[i] = idx
        size += 1
        while i > 0:
            p = (i - 1) >> 1
            if heap_key[p] <= heap_key[i]:
                break
            heap_key[p], heap_key[i] = heap_key[i], heap_key[p]
            heap_idx[p], heap_idx[i] = heap_idx[i], heap_idx[p]
            i = p

    def pop():
        nonlocal size
        key = heap_key[0]
        idx = heap_idx[0]
        size -= 1
        heap_key[0] = heap_key[size]
        heap_idx[0] = heap_idx[size]
        i = 0
        while True:
            l = 2 * i + 1
            r = l + 1
            m = i
            if l < size and heap_key[l] < heap_key[m]:
                m = l
            if r < size and heap_key[r] < heap_key[m]:
                m = r
            if m == i:
                break
            heap_key[m], heap_key[i] = heap_key[i], heap_key[m]
            heap_idx[m], heap_idx[i] = heap_idx[i], heap_idx[m]
            i = m
        return key, idx

    start = sr * w + sc
    steps_s[sr, sc] = 0
    steps_d[sr, sc] = 0
    best[start] = 0.0
    push(0.0, start)
    while size > 0:
        key, idx = pop()
        if done[idx]:
            continue
        done[idx] = 1
        r = idx // w
        c = idx - r * w
        if r == tr and c == tc:
            return
        for k in range(8):
            nr = r + _NEIGH[k, 0]
            nc = c + _NEIGH[k, 1]
            if nr < 0 or nr >= h or nc < 0 or nc >= w or occ[nr, nc]:
                continue
            ns = steps_s[r, c] + (1 - _DIAG[k])
            nd = steps_d[r, c] + _DIAG[k]
            nkey = ns + SQRT2 * nd
            nidx = nr * w + nc
            if nkey < best[nidx]:
                best[nidx] = nkey
                steps_s[nr, nc] = ns
                steps_d[nr, nc] = nd
                push(nkey, nidx)


def _project_rays_py(obstacle, explored, ox, oy, res, x0, y0, depths, cap, step):
    """Mark free/obstacle cells of a local occupancy raster from panorama depths.

    Rays at 1-degree spacing in world frame (index i -> i degrees). Free cells
    first (clearing stale obstacles), obstacle endpoints second so they win
    within one update.
    """
    h, w = obstacle.shape
    n = depths.shape[0]
    for i in range(n):
        a = i * (2.0 * math.pi / n)
        ux = math.cos(a)
        uy = math.sin(a)
        lim = depths[i]
        if lim > cap:
            lim = cap
        m = int(lim / step)
        for j in range(m + 1):
            t = j * step
            if t > lim:
                t = lim
            cx = int(math.floor((x0 + ux * t - ox) / res))
            cy = int(math.floor((y0 + uy * t - oy) / res))
            if 0 <= cx < w and 0 <= cy < h:
                explored[cy, cx] = 1
                obstacle[cy, cx] = 0
    for i in range(n):
        d = depths[i]
        if d < cap:
            a = i * (2.0 * math.pi / n)
            x = x0 + math.cos(a) * (d + 0.5 * res)
            y = y0 + math.sin(a) * (d + 0.5 * res)
            cx = int(math.floor((x - ox) / res))
            cy = int(math.floor((y - oy) / res))
            if 0 <= cx < w and 0 <= cy < h:
                obstacle[cy, cx] = 1
                explored[cy, cx] = 1


try:  # pragma: no cover - exercised implicitly everywhere
    from numba import njit

    raycast_batch = njit(cache=True)(_raycast_batch_py)
    march_free = njit(cache=True)(_march_free_py)
    project_rays = njit(cache=True)(_project_rays_py)

    # The heap uses closures, which numba does not support; dedicated version.
    @njit(cache=True)
    def dist_field_steps(occ, sr, sc, tr, tc, steps_s, steps_d):
        h, w = occ.shape
        steps_s[:] = -1
        steps_d[:] = -1
        if occ[sr, sc]:
            return
        cap = 16 * h * w + 16
        heap_key = np.empty(cap, dtype=np.float64)
        heap_idx = np.empty(cap, dtype=np.int64)
        best = np.full(h * w, np.inf, dtype=np.float64)
        done = np.zeros(h * w, dtype=np.uint8)
        size = 0
        start = sr * w + sc
        steps_s[sr, sc] = 0
        steps_d[sr, sc] = 0
        best[start] = 0.0
        heap_key[0] = 0.0
        heap_idx[0] = start
        size = 1
        while size > 0:
            key = heap_key[0]
            idx = heap_idx[0]
            size -= 1
            heap_key[0] = heap_key[size]
            heap_idx[0] = heap_idx[size]
            i = 0
            while True:
                l = 2 * i + 1
                r_ = l + 1
                m = i
                if l < size and heap_key[l] < heap_key[m]:
                    m = l
                if r_ < size and heap_key[r_] < heap_key[m]:
                    m = r_
                if m == i:
                    break
                tk = heap_key[m]
                heap_key[m] = heap_key[i]
                heap_key[i] = tk
                ti = heap_idx[m]
                heap_idx[m] = heap_idx[i]
                heap_idx[i] = ti
                i = m
            if done[idx]:
                continue
            done[idx] = 1
            r = idx // w
            c = idx - r * w
            if r == tr and c == tc:
                return
            for k in range(8):
                nr = r + _NEIGH[k, 0]
                nc = c + _NEIGH[k, 1]
                if nr < 0 or nr >= h or nc < 0 or nc >= w or occ[nr, nc]:
                    continue
                ns = steps_s[r, c] + (1 - _DIAG[k])
                nd = steps_d[r, c] + _DIAG[k]
                nkey = ns + SQRT2 * nd
                nidx = nr * w + nc
                if nkey < best[nidx]:
                    best[nidx] = nkey
                    steps_s[nr, nc] = ns
                    steps_d[nr, nc] = nd
                    j = size
                    heap_key[j] = nkey
                    heap_idx[j] = nidx
                    size += 1
                    while j > 0:
                        p = (j - 1) >> 1
                        if heap_key[p] <= heap_key[j]:
                            break
                        tk = heap_key[p]
                        heap_key[p] = heap_key[j]
                        heap_key[j] = tk
                        ti = heap_idx[p]
                        heap_idx[p] = heap_idx[j]
                        heap_idx[j] = ti
                        j = p

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    raycast_batch = _raycast_batch_py
    march_free = _march_free_py
    project_rays = _project_rays_py
    dist_field_steps = _dist_field_py
    HAVE_NUMBA = False


def steps_to_meters(steps_s: np.ndarray, steps_d: np.ndarray, resolution: float) -> np.ndarray:
    """Metric distances from step-count pairs; unreached cells become +inf."""
    out = (steps_s + SQRT2 * steps_d) * resolution
    return np.where(steps_s < 0, np.inf, out)
