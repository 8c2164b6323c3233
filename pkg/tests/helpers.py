"""Independent oracles shared across test modules (kept separate from the
implementations they check)."""

import math

import numpy as np

from toponav.kernels import SQRT2


def bf_field_on_array(occ: np.ndarray, sr: int, sc: int, resolution: float) -> np.ndarray:
    """Vectorized Bellman-Ford over (straight, diagonal) step pairs on a raw
    boolean raster. Same adjacency rule as production (diagonal only needs the
    destination free); converges to the per-cell minimum key."""
    h, w = occ.shape
    S = np.full((h, w), -1, dtype=np.int64)
    D = np.full((h, w), -1, dtype=np.int64)
    S[sr, sc] = 0
    D[sr, sc] = 0
    key = np.where(S < 0, np.inf, S + SQRT2 * D)
    shifts = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0),
              (-1, -1, 1), (-1, 1, 1), (1, -1, 1), (1, 1, 1)]
    big = np.iinfo(np.int64).max // 2
    for _ in range(h * w):
        changed = False
        for dr, dc, diag in shifts:
            ns = np.full((h, w), big, dtype=np.int64)
            nd = np.zeros((h, w), dtype=np.int64)
            rs0, rs1 = max(dr, 0), h + min(dr, 0)
            cs0, cs1 = max(dc, 0), w + min(dc, 0)
            src_s = S[rs0 - dr:rs1 - dr, cs0 - dc:cs1 - dc]
            src_d = D[rs0 - dr:rs1 - dr, cs0 - dc:cs1 - dc]
            valid = src_s >= 0
            ns[rs0:rs1, cs0:cs1] = np.where(valid, src_s + (1 - diag), big)
            nd[rs0:rs1, cs0:cs1] = np.where(valid, src_d + diag, 0)
            nkey = np.where(ns >= big, np.inf, ns + SQRT2 * nd)
            nkey = np.where(occ, np.inf, nkey)
            better = nkey < key
            if better.any():
                S = np.where(better, ns, S)
                D = np.where(better, nd, D)
                key = np.where(better, nkey, key)
                changed = True
        if not changed:
            break
    return np.where(S < 0, np.inf, (S + SQRT2 * D) * resolution)


def raymarch_depth(grid, x0, y0, angle, max_range=10.0):
    """Brute-force fine-step ray marching at 1/10th-cell pitch."""
    step = grid.resolution / 10.0
    ux, uy = math.cos(angle), math.sin(angle)
    t = 0.0
    while t < max_range:
        t += step
        r, c = grid.cell_of(x0 + ux * t, y0 + uy * t)
        if not grid.in_bounds(r, c) or grid.occupied[r, c]:
            return min(t, max_range)
    return max_range


def brute_force_graph_shortest(edges: dict, src, dst):
    """Exhaustive min-cost simple path by DFS with cost pruning.

    edges: {node: [(neighbor, cost), ...]}. Returns (cost, path) or (inf, None).
    Ties broken by lexicographically smallest node-id path.
    """
    best = [math.inf, None]

    def dfs(node, cost, path, seen):
        if cost > best[0] + 1e-12:
            return
        if node == dst:
            if cost < best[0] - 1e-12 or (abs(cost - best[0]) <= 1e-12
                                          and (best[1] is None or path < best[1])):
                best[0] = cost
                best[1] = list(path)
            return
        for nxt, w in sorted(edges.get(node, [])):
            if nxt in seen:
                continue
            seen.add(nxt)
            path.append(nxt)
            dfs(nxt, cost + w, path, seen)
            path.pop()
            seen.remove(nxt)

    dfs(src, 0.0, [src], {src})
    return best[0], best[1]
