"""Global policy (goal localization, ghost scoring, graph planning, subgoal
hand-off) and local policy (depth-projected metric map + grid shortest-path
point-goal control).

The global policy is re-evaluated every step. Decisions carry a target point in
the agent's dead-reckoning frame; the local policy converts it into one of the
four discrete actions.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, ExplorationExhausted
from .oracles import NODE_RADIUS, bin_center
from .sim import MOVE_FORWARD, STOP, TURN_LEFT, TURN_RIGHT, PanoramicObservation
from .topograph import TopoGraph, localize_in_graph
from .world import wrap_to_pi

STOP_THRESHOLD = 0.5       # predicted remaining distance that triggers stop
HEADING_TOL = math.radians(15.0)
LOOKAHEAD = 0.5            # steering waypoint distance along the planned path
GHOST_OVERSHOOT = 0.75     # aim past a ghost so the agent exits the parent's radius

DECISION_SUBGOAL = "subgoal"
DECISION_GOAL_IN_NODE = "goal_in_node"
DECISION_STOP = "stop"


@dataclass(frozen=True)
class GlobalDecision:
    kind: str
    subgoal_id: int | None = None
    target_est: tuple[float, float] | None = None
    distance: float | None = None       # predicted remaining distance (goal_in_node)
    long_term_ghost: int | None = None  # ghost chosen for exploration, if any


# ---------------------------------------------------------------------------
# graph planning
# ---------------------------------------------------------------------------

def dijkstra(graph: TopoGraph, src: int, dst: int) -> list[int] | None:
    """Min-cost path over regular + ghost edges.

    Edge cost is the Euclidean norm of the edge's relative-pose translation;
    ghost edges cost the node radius. Ties resolve to the lexicographically
    smallest node-id path. Returns None when dst is unreachable.
    """
    if src not in graph.nodes:
        raise DomainError(f"unknown source node {src}")
    if dst not in graph.nodes and dst not in graph.ghosts:
        raise DomainError(f"unknown destination {dst}")
    if src == dst:
        return [src]
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    settled: set[int] = set()
    while heap:
        cost, path = heapq.heappop(heap)
        node = path[-1]
        if node == dst:
            return list(path)
        if node in settled:
            continue
        settled.add(node)
        for nb in sorted(graph.adj[node]):
            if nb in settled:
                continue
            dp = graph.edge_dp(node, nb)
            heapq.heappush(heap, (cost + float(np.hypot(dp[0], dp[1])), path + (nb,)))
        for g in graph.ghosts_of(node):
            if g.id == dst:
                heapq.heappush(heap, (cost + NODE_RADIUS, path + (g.id,)))
    return None


# ---------------------------------------------------------------------------
# global policy
# ---------------------------------------------------------------------------

def default_ghost_selector(scored: list[tuple[int, float]]) -> int:
    """Highest score wins; ties go to the lowest ghost id."""
    best_id, best_s = scored[0]
    for gid, s in scored[1:]:
        if s > best_s:
            best_id, best_s = gid, s
    return best_id


def global_policy(graph: TopoGraph, goal_obs: PanoramicObservation,
                  live_obs: PanoramicObservation, agent_xy: tuple[float, float],
                  predictors, ghost_selector=None,
                  score_cache: dict | None = None) -> GlobalDecision:
    """Pick stop / goal-approach / subgoal, per the branch structure:
    (a) goal visible from here -> approach it (or stop inside the threshold);
    (b) goal localized at a known node -> plan to that node;
    (c) otherwise -> score ghosts against the goal and plan to the best one.
    """
    if predictors.localize_pair(live_obs, goal_obs):
        rp = predictors.relative_pose(live_obs, goal_obs)
        d = rp.implied_distance
        if d <= STOP_THRESHOLD:
            return GlobalDecision(DECISION_STOP, distance=d)
        target = (agent_xy[0] + d * math.cos(rp.bearing),
                  agent_xy[1] + d * math.sin(rp.bearing))
        return GlobalDecision(DECISION_GOAL_IN_NODE, target_est=target, distance=d)

    current = graph.current_node
    loc = localize_in_graph(graph, goal_obs, predictors)
    if loc is not None:
        if loc == current:
            p = graph.nodes[loc].estimated_pose
            return GlobalDecision(DECISION_SUBGOAL, subgoal_id=loc, target_est=p.xy)
        path = dijkstra(graph, current, loc)
        hop = path[1]
        p = graph.nodes[hop].estimated_pose
        return GlobalDecision(DECISION_SUBGOAL, subgoal_id=hop, target_est=p.xy)

    if not graph.ghosts:
        raise ExplorationExhausted("no ghosts left and goal not localized")
    scored = []
    for gid in sorted(graph.ghosts):
        g = graph.ghosts[gid]
        if score_cache is not None and g.parent in score_cache:
            scores = score_cache[g.parent]
        else:
            scores = predictors.semantic_scores(graph.nodes[g.parent].observation, goal_obs)
            if score_cache is not None:
                score_cache[g.parent] = scores
        scored.append((gid, float(scores[g.direction_bin])))
    select = ghost_selector or default_ghost_selector
    chosen = select(scored)
    path = dijkstra(graph, current, chosen)
    hop = path[1]
    if hop == chosen:
        # aim beyond the nominal ghost point: crossing the parent's radius is
        # what spawns the next node (and retires this ghost)
        g = graph.ghosts[chosen]
        p = graph.nodes[g.parent].estimated_pose
        reach = NODE_RADIUS + GHOST_OVERSHOOT
        th = bin_center(g.direction_bin)
        target = (p.x + reach * math.cos(th), p.y + reach * math.sin(th))
    else:
        target = graph.nodes[hop].estimated_pose.xy
    return GlobalDecision(DECISION_SUBGOAL, subgoal_id=hop, target_est=target,
                          long_term_ghost=chosen)


# ---------------------------------------------------------------------------
# local metric map
# ---------------------------------------------------------------------------

class LocalMap:
    """Occupancy raster in the dead-reckoning frame, built from depth projections.

    A bounded window recenters around the agent (rolling old content out), so
    drift only accumulates for as long as content stays inside the window. The
    frontier-exploration agent uses a window large enough to never recenter.
    """

    def __init__(self, resolution: float, half_extent: float = 4.0,
                 center: tuple[float, float] = (0.0, 0.0), proj_range: float | None = None):
        self.resolution = resolution
        self.half_extent = half_extent
        n = 2 * int(round(half_extent / resolution)) + 1
        self.obstacle = np.zeros((n, n), dtype=np.uint8)
        self.explored = np.zeros((n, n), dtype=np.uint8)
        self.origin = (center[0] - half_extent, center[1] - half_extent)
        self.proj_range = proj_range if proj_range is not None else half_extent - 0.25

    @property
    def shape(self):
        return self.obstacle.shape

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor((y - self.origin[1]) / self.resolution)),
                int(math.floor((x - self.origin[0]) / self.resolution)))

    def cell_center(self, r: int, c: int) -> tuple[float, float]:
        return (self.origin[0] + (c + 0.5) * self.resolution,
                self.origin[1] + (r + 0.5) * self.resolution)

    def in_bounds(self, r: int, c: int) -> bool:
        h, w = self.obstacle.shape
        return 0 <= r < h and 0 <= c < w

    def recenter(self, agent_xy: tuple[float, float]) -> None:
        """Shift the window so the agent sits near the center; rolled-in cells clear."""
        h, w = self.obstacle.shape
        cx = self.origin[0] + w * self.resolution / 2
        cy = self.origin[1] + h * self.resolution / 2
        if (abs(agent_xy[0] - cx) < 0.35 * self.half_extent
                and abs(agent_xy[1] - cy) < 0.35 * self.half_extent):
            return
        dc = int(round((agent_xy[0] - cx) / self.resolution))
        dr = int(round((agent_xy[1] - cy) / self.resolution))
        for arr in (self.obstacle, self.explored):
            shifted = np.zeros_like(arr)
            src_r = slice(max(dr, 0), h + min(dr, 0))
            dst_r = slice(max(-dr, 0), h + min(-dr, 0))
            src_c = slice(max(dc, 0), w + min(dc, 0))
            dst_c = slice(max(-dc, 0), w + min(-dc, 0))
            shifted[dst_r, dst_c] = arr[src_r, src_c]
            arr[:, :] = shifted
        self.origin = (self.origin[0] + dc * self.resolution,
                       self.origin[1] + dr * self.resolution)


def update_local_map(lmap: LocalMap, obs: PanoramicObservation,
                     agent_xy: tuple[float, float]) -> LocalMap:
    """Project the panorama into the map: free along each ray, obstacle at the
    endpoint when within range. The agent's own cell is forced free."""
    lmap.recenter(agent_xy)
    kernels.project_rays(lmap.obstacle, lmap.explored, lmap.origin[0], lmap.origin[1],
                         lmap.resolution, agent_xy[0], agent_xy[1],
                         np.ascontiguousarray(obs.depths), lmap.proj_range,
                         lmap.resolution * 0.5)
    r, c = lmap.cell_of(*agent_xy)
    if lmap.in_bounds(r, c):
        lmap.obstacle[r, c] = 0
        lmap.explored[r, c] = 1
    return lmap


# ---------------------------------------------------------------------------
# local point-goal control
# ---------------------------------------------------------------------------

def _plan_window(lmap: LocalMap, start_cell, goal_cell, margin_cells: int):
    h, w = lmap.obstacle.shape
    r0 = max(0, min(start_cell[0], goal_cell[0]) - margin_cells)
    r1 = min(h, max(start_cell[0], goal_cell[0]) + margin_cells + 1)
    c0 = max(0, min(start_cell[1], goal_cell[1]) - margin_cells)
    c1 = min(w, max(start_cell[1], goal_cell[1]) + margin_cells + 1)
    return r0, r1, c0, c1


def plan_local_path(lmap: LocalMap, start_xy, goal_xy) -> list[tuple[float, float]] | None:
    """Grid shortest path on the local map (unexplored cells traversable).

    Returns points in the map frame from start to goal, or None if unreachable.
    """
    sr, sc = lmap.cell_of(*start_xy)
    gr, gc = lmap.cell_of(*goal_xy)
    if not (lmap.in_bounds(sr, sc) and lmap.in_bounds(gr, gc)):
        return None
    if lmap.obstacle[gr, gc] or lmap.obstacle[sr, sc]:
        return None
    if (sr, sc) == (gr, gc):
        return [start_xy, goal_xy]
    margin = int(round(0.75 / lmap.resolution))
    r0, r1, c0, c1 = _plan_window(lmap, (sr, sc), (gr, gc), margin)
    window = lmap.obstacle[r0:r1, c0:c1].astype(np.bool_)
    steps_s = np.empty(window.shape, dtype=np.int32)
    steps_d = np.empty(window.shape, dtype=np.int32)
    # field from the goal so the path follows the distance descent from the agent
    kernels.dist_field_steps(window, gr - r0, gc - c0, sr - r0, sc - c0, steps_s, steps_d)
    dist = kernels.steps_to_meters(steps_s, steps_d, lmap.resolution)
    if not math.isfinite(dist[sr - r0, sc - c0]):
        return None
    path = [(sr - r0, sc - c0)]
    cur = path[0]
    guard = window.size
    while cur != (gr - r0, gc - c0) and guard > 0:
        guard -= 1
        best = None
        best_key = dist[cur]
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1),
                       (-1, -1), (-1, 1), (1, -1), (1, 1)):
            nr, nc = cur[0] + dr, cur[1] + dc
            if 0 <= nr < window.shape[0] and 0 <= nc < window.shape[1]:
                if dist[nr, nc] < best_key:
                    best_key = dist[nr, nc]
                    best = (nr, nc)
        if best is None:
            return None
        path.append(best)
        cur = best
    pts = [lmap.cell_center(r + r0, c + c0) for r, c in path]
    pts[0] = start_xy
    pts[-1] = goal_xy
    return pts


def local_policy_step(lmap: LocalMap, agent_xy: tuple[float, float], heading_est: float,
                      rel_goal: tuple[float, float], allow_stop: bool = False,
                      forward_clearance: float | None = None) -> str:
    """One discrete action toward a relative goal on the local map.

    Turn when the first-waypoint bearing error exceeds the tolerance, else move
    forward; stop when allowed and the remaining distance is inside the stop
    threshold. Falls back to bearing-only steering when the local planner finds
    no path. forward_clearance (sensed free distance along the current heading)
    suppresses forward steps that would hit a wall.
    """
    d = math.hypot(rel_goal[0], rel_goal[1])
    if allow_stop and d <= STOP_THRESHOLD:
        return STOP
    goal_xy = (agent_xy[0] + rel_goal[0], agent_xy[1] + rel_goal[1])
    goal_xy = _clamp_into(lmap, agent_xy, goal_xy)
    path = plan_local_path(lmap, agent_xy, goal_xy)
    if path is None:
        bearing = math.atan2(rel_goal[1], rel_goal[0])
    else:
        wp = _waypoint_at(path, LOOKAHEAD)
        bearing = math.atan2(wp[1] - agent_xy[1], wp[0] - agent_xy[0])
    return _steer(bearing, heading_est, forward_clearance)


def _steer(bearing: float, heading_est: float, forward_clearance: float | None = None) -> str:
    err = wrap_to_pi(bearing - heading_est)
    if err > HEADING_TOL:
        return TURN_LEFT
    if err < -HTOL_NEG:
        return TURN_RIGHT
    if forward_clearance is not None and forward_clearance < 0.3:
        return TURN_LEFT if err >= 0.0 else TURN_RIGHT
    return MOVE_FORWARD


def _waypoint_at(path: list[tuple[float, float]], lookahead: float) -> tuple[float, float]:
    acc = 0.0
    for a, b in zip(path, path[1:]):
        acc += math.hypot(b[0] - a[0], b[1] - a[1])
        if acc >= lookahead:
            return b
    return path[-1]


def _clamp_into(lmap: LocalMap, agent_xy, goal_xy):
    """Pull an out-of-window goal back along the agent-goal line."""
    h, w = lmap.obstacle.shape
    x0, y0 = lmap.origin
    x1 = x0 + w * lmap.resolution
    y1 = y0 + h * lmap.resolution
    gx, gy = goal_xy
    if x0 < gx < x1 and y0 < gy < y1:
        return goal_xy
    dx, dy = gx - agent_xy[0], gy - agent_xy[1]
    t = 1.0
    eps = 2 * lmap.resolution
    if dx > 0:
        t = min(t, (x1 - eps - agent_xy[0]) / dx)
    elif dx < 0:
        t = min(t, (x0 + eps - agent_xy[0]) / dx)
    if dy > 0:
        t = min(t, (y1 - eps - agent_xy[1]) / dy)
    elif dy < 0:
        t = min(t, (y0 + eps - agent_xy[1]) / dy)
    t = max(t, 0.0)
    return (agent_xy[0] + dx * t, agent_xy[1] + dy * t)


# ---------------------------------------------------------------------------
# frontier exploration support
# ---------------------------------------------------------------------------

def frontier_mask(lmap: LocalMap) -> np.ndarray:
    """Explored free cells 4-adjacent to unexplored space."""
    free = (lmap.explored == 1) & (lmap.obstacle == 0)
    unknown = lmap.explored == 0
    adj = np.zeros_like(unknown)
    adj[1:, :] |= unknown[:-1, :]
    adj[:-1, :] |= unknown[1:, :]
    adj[:, 1:] |= unknown[:, :-1]
    adj[:, :-1] |= unknown[:, 1:]
    return free & adj


def nearest_frontier(lmap: LocalMap, agent_xy: tuple[float, float]) -> tuple[float, float] | None:
    """Closest frontier cell by grid geodesic on the local map, scanline ties."""
    mask = frontier_mask(lmap)
    if not mask.any():
        return None
    sr, sc = lmap.cell_of(*agent_xy)
    if not lmap.in_bounds(sr, sc):
        return None
    occ = lmap.obstacle.astype(np.bool_)
    occ[sr, sc] = False
    steps_s = np.empty(occ.shape, dtype=np.int32)
    steps_d = np.empty(occ.shape, dtype=np.int32)
    kernels.dist_field_steps(occ, sr, sc, -1, -1, steps_s, steps_d)
    dist = kernels.steps_to_meters(steps_s, steps_d, lmap.resolution)
    dist = np.where(mask, dist, np.inf)
    best = np.argmin(dist)  # row-major argmin = scanline tie order
    r, c = divmod(int(best), dist.shape[1])
    if not math.isfinite(dist[r, c]):
        return None
    return lmap.cell_center(r, c)
