"""Navigation agents: the full topological agent, its two ablations, and the
frontier-exploration baseline.

All agents see only panorama depths, odometry readings, and their own start
heading; positions are dead-reckoned. Every agent is a deterministic function
of (episode, seeds). Agents emit at most one stop per episode and survive
exploration exhaustion by wandering.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ExplorationExhausted
from .oracles import NODE_RADIUS, bin_center
from .policies import (DECISION_GOAL_IN_NODE, DECISION_STOP, GlobalDecision, LocalMap,
                       STOP_THRESHOLD, frontier_mask, global_policy, local_policy_step,
                       update_local_map)
from .sim import MOVE_FORWARD, STOP, TURN_LEFT, TURN_RIGHT, PanoramicObservation
from .topograph import TopoGraph, graph_update
from .world import Pose, wrap_angle

AGENT_KINDS = ("nts", "nts_no_graph", "nts_no_score", "fbe")

GHOST_CONSUME_RADIUS = 0.4   # chased-ghost retirement ball (lingering only)
GHOST_LINGER_LIMIT = 5       # acts spent inside the ball before retiring
BLOCKED_FORWARD_EPS = 0.02   # odometry displacement below this counts as blocked
BLOCKED_LIMIT = 3


class _MotionGuard:
    """Seeded wander/escape behaviors shared by all agents (never stops)."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.queue: list[str] = []
        self.blocked = 0
        self.last_action: str | None = None

    def note_feedback(self, odom) -> None:
        if (self.last_action == MOVE_FORWARD and odom is not None
                and math.hypot(odom[0], odom[1]) < BLOCKED_FORWARD_EPS):
            self.blocked += 1
        else:
            self.blocked = 0

    def escape_if_stuck(self) -> None:
        if self.blocked >= BLOCKED_LIMIT and not self.queue:
            turn = TURN_LEFT if self.rng.integers(2) else TURN_RIGHT
            self.queue = [turn] * int(self.rng.integers(5, 11))
            self.queue += [MOVE_FORWARD] * int(self.rng.integers(3, 9))
            self.blocked = 0

    def wander(self) -> str:
        if not self.queue:
            turn = TURN_LEFT if self.rng.integers(2) else TURN_RIGHT
            self.queue = [turn] * int(self.rng.integers(3, 13))
            self.queue += [MOVE_FORWARD] * int(self.rng.integers(4, 16))
        return self.queue.pop(0)

    def override(self, action: str) -> str:
        """Replace the policy action with a pending escape action, if any."""
        self.escape_if_stuck()
        if self.queue and action != STOP:
            action = self.queue.pop(0)
        self.last_action = action
        return action


class _DeadReckoner:
    """Pose estimate from composed world-frame odometry readings."""

    def __init__(self, initial_heading: float):
        self.x = 0.0
        self.y = 0.0
        self.heading = wrap_angle(initial_heading)

    def integrate(self, odom) -> None:
        self.x += odom[0]
        self.y += odom[1]
        self.heading = wrap_angle(self.heading + odom[2])

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.heading)

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


class NTSAgent:
    """Topological navigation: graph update, global policy, local policy.

    variant="no_score" replaces semantic ghost selection with a seeded uniform
    pick that persists until the chosen ghost is consumed or pruned.
    """

    def __init__(self, predictors, map_resolution: float, seed: int = 0,
                 variant: str = "full"):
        self.pred = predictors
        self.resolution = map_resolution
        self.variant = variant
        self.seed = seed

    def reset(self, goal_obs: PanoramicObservation, initial_heading: float) -> None:
        self.goal_obs = goal_obs
        self.graph = TopoGraph()
        self.est = _DeadReckoner(initial_heading)
        self.local_map = LocalMap(self.resolution, half_extent=4.0)
        self.guard = _MotionGuard(np.random.default_rng([self.seed & 0x7FFFFFFF, 17]))
        self.score_cache: dict = {}
        self.chosen_ghost: int | None = None
        self.last_decision: GlobalDecision | None = None
        self._chase_id: int | None = None
        self._linger = 0

    def set_goal(self, goal_obs: PanoramicObservation) -> None:
        """Swap the goal (sequential-goal episodes); the graph persists."""
        self.goal_obs = goal_obs
        self.score_cache = {}
        self.chosen_ghost = None
        self.last_decision = None
        self._chase_id = None
        self._linger = 0
        self.guard.queue.clear()

    def _selector(self, scored):
        if self.variant != "no_score":
            from .policies import default_ghost_selector

            return default_ghost_selector(scored)
        ids = [gid for gid, _ in scored]
        if self.chosen_ghost not in ids:
            self.chosen_ghost = ids[int(self.guard.rng.integers(len(ids)))]
        return self.chosen_ghost

    def act(self, obs: PanoramicObservation, odom) -> str:
        if odom is not None:
            self.est.integrate(odom)
        self.guard.note_feedback(odom)
        graph_update(self.graph, obs, self.est.pose, self.pred)
        try:
            dec = global_policy(self.graph, self.goal_obs, obs, self.est.xy, self.pred,
                                ghost_selector=self._selector,
                                score_cache=self.score_cache)
        except ExplorationExhausted:
            self.last_decision = None
            return self.guard.override(self.guard.wander())
        self.last_decision = dec
        if dec.kind == DECISION_STOP:
            return STOP
        self._retire_dead_end_ghost(dec)
        update_local_map(self.local_map, obs, self.est.xy)
        rel = (dec.target_est[0] - self.est.x, dec.target_est[1] - self.est.y)
        action = local_policy_step(self.local_map, self.est.xy, self.est.heading, rel,
                                   allow_stop=dec.kind == DECISION_GOAL_IN_NODE)
        return self.guard.override(action)

    def _retire_dead_end_ghost(self, dec: GlobalDecision) -> None:
        """Drop a chased ghost that leads nowhere: the agent is wall-blocked on
        the way, or lingers at the ghost point without the graph changing.
        (Normally crossing the parent's radius spawns a node that prunes the
        ghost; these are the corrupted-predictor / boundary fallbacks.)"""
        gid = dec.long_term_ghost
        if gid != self._chase_id:
            self._chase_id = gid
            self._linger = 0
        if gid is None or gid not in self.graph.ghosts:
            return
        if self.guard.blocked >= BLOCKED_LIMIT:
            self.graph.remove_ghost(gid)
            self._chase_id = None
            return
        gx, gy = self.graph.ghost_position(gid)
        if math.hypot(gx - self.est.x, gy - self.est.y) <= GHOST_CONSUME_RADIUS:
            self._linger += 1
            if self._linger >= GHOST_LINGER_LIMIT:
                self.graph.remove_ghost(gid)
                self._chase_id = None


class NoGraphAgent:
    """Greedy ablation: steer toward the best-scored direction of the current
    panorama; no graph, no memory beyond the local map."""

    def __init__(self, predictors, map_resolution: float, seed: int = 0):
        self.pred = predictors
        self.resolution = map_resolution
        self.seed = seed

    def reset(self, goal_obs, initial_heading):
        self.goal_obs = goal_obs
        self.est = _DeadReckoner(initial_heading)
        self.local_map = LocalMap(self.resolution, half_extent=4.0)
        self.guard = _MotionGuard(np.random.default_rng([self.seed & 0x7FFFFFFF, 23]))

    def set_goal(self, goal_obs):
        self.goal_obs = goal_obs
        self.guard.queue.clear()

    def act(self, obs, odom) -> str:
        if odom is not None:
            self.est.integrate(odom)
        self.guard.note_feedback(odom)
        allow_stop = False
        if self.pred.localize_pair(obs, self.goal_obs):
            rp = self.pred.relative_pose(obs, self.goal_obs)
            d = rp.implied_distance
            if d <= STOP_THRESHOLD:
                return STOP
            target = (self.est.x + d * math.cos(rp.bearing),
                      self.est.y + d * math.sin(rp.bearing))
            allow_stop = True
        else:
            scores = self.pred.semantic_scores(obs, self.goal_obs)
            b = int(np.argmax(scores))  # first max = lowest bin index
            target = (self.est.x + NODE_RADIUS * math.cos(bin_center(b)),
                      self.est.y + NODE_RADIUS * math.sin(bin_center(b)))
        update_local_map(self.local_map, obs, self.est.xy)
        rel = (target[0] - self.est.x, target[1] - self.est.y)
        action = local_policy_step(self.local_map, self.est.xy, self.est.heading, rel,
                                   allow_stop=allow_stop)
        return self.guard.override(action)


class FBEAgent:
    """Metric-map frontier exploration with the shared localization model and
    local policy for goal detection and approach.

    Keeps a full-environment dead-reckoned map; frontier targets are re-selected
    on arrival, when the target stops being a frontier, or on a fixed cadence.
    Distance-to-frontier uses a 2x-coarsened view of the map for tractability.
    """

    REPLAN_PERIOD = 10
    ARRIVE_RADIUS = 0.3

    def __init__(self, predictors, map_resolution: float, seed: int = 0,
                 world_extent: tuple[float, float] = (20.0, 20.0)):
        self.pred = predictors
        self.resolution = map_resolution
        self.seed = seed
        self.world_extent = world_extent

    def reset(self, goal_obs, initial_heading):
        self.goal_obs = goal_obs
        self.est = _DeadReckoner(initial_heading)
        half = max(self.world_extent) + 3.0
        self.map = LocalMap(self.resolution, half_extent=half, proj_range=5.0)
        self.guard = _MotionGuard(np.random.default_rng([self.seed & 0x7FFFFFFF, 31]))
        self.frontier_target: tuple[float, float] | None = None
        self._since_replan = 0

    def set_goal(self, goal_obs):
        self.goal_obs = goal_obs
        self.guard.queue.clear()

    def act(self, obs, odom) -> str:
        if odom is not None:
            self.est.integrate(odom)
        self.guard.note_feedback(odom)
        update_local_map(self.map, obs, self.est.xy)
        allow_stop = False
        if self.pred.localize_pair(obs, self.goal_obs):
            rp = self.pred.relative_pose(obs, self.goal_obs)
            d = rp.implied_distance
            if d <= STOP_THRESHOLD:
                return STOP
            target = (self.est.x + d * math.cos(rp.bearing),
                      self.est.y + d * math.sin(rp.bearing))
            allow_stop = True
        else:
            target = self._frontier_goal()
            if target is None:
                return self.guard.override(self.guard.wander())
        rel = (target[0] - self.est.x, target[1] - self.est.y)
        action = local_policy_step(self.map, self.est.xy, self.est.heading, rel,
                                   allow_stop=allow_stop)
        return self.guard.override(action)

    # -- frontier bookkeeping --------------------------------------------------

    def _frontier_goal(self) -> tuple[float, float] | None:
        self._since_replan += 1
        if (self.frontier_target is None
                or self._since_replan >= self.REPLAN_PERIOD
                or self._arrived()
                or not self._still_frontier(self.frontier_target)):
            self.frontier_target = self._nearest_frontier_coarse()
            self._since_replan = 0
        return self.frontier_target

    def _arrived(self) -> bool:
        t = self.frontier_target
        return (t is not None
                and math.hypot(t[0] - self.est.x, t[1] - self.est.y) <= self.ARRIVE_RADIUS)

    def _still_frontier(self, target) -> bool:
        r, c = self.map.cell_of(*target)
        if not self.map.in_bounds(r, c):
            return False
        if self.map.obstacle[r, c] or not self.map.explored[r, c]:
            return False
        h, w = self.map.shape
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and not self.map.explored[nr, nc]:
                return True
        return False

    def _nearest_frontier_coarse(self) -> tuple[float, float] | None:
        from . import kernels

        mask = frontier_mask(self.map)
        if not mask.any():
            return None
        h, w = self.map.shape
        h2, w2 = h // 2, w // 2
        occ2 = self.map.obstacle[:h2 * 2, :w2 * 2].reshape(h2, 2, w2, 2).max(axis=(1, 3))
        occ2 = occ2.astype(np.bool_)
        sr, sc = self.map.cell_of(*self.est.xy)
        sr2, sc2 = min(sr // 2, h2 - 1), min(sc // 2, w2 - 1)
        occ2[sr2, sc2] = False
        steps_s = np.empty((h2, w2), dtype=np.int32)
        steps_d = np.empty((h2, w2), dtype=np.int32)
        kernels.dist_field_steps(occ2, sr2, sc2, -1, -1, steps_s, steps_d)
        dist2 = kernels.steps_to_meters(steps_s, steps_d, self.map.resolution * 2)
        rows, cols = np.nonzero(mask)
        d = dist2[np.minimum(rows // 2, h2 - 1), np.minimum(cols // 2, w2 - 1)]
        if not np.isfinite(d).any():
            return None
        # nearest by coarse geodesic; ties resolve by scanline (row-major) order
        best = int(np.lexsort((cols, rows, d))[0])
        return self.map.cell_center(int(rows[best]), int(cols[best]))


def make_agent(kind: str, predictors, map_resolution: float, seed: int = 0,
               world_extent: tuple[float, float] = (20.0, 20.0)):
    if kind == "nts":
        return NTSAgent(predictors, map_resolution, seed)
    if kind == "nts_no_score":
        return NTSAgent(predictors, map_resolution, seed, variant="no_score")
    if kind == "nts_no_graph":
        return NoGraphAgent(predictors, map_resolution, seed)
    if kind == "fbe":
        return FBEAgent(predictors, map_resolution, seed, world_extent)
    raise ValueError(f"unknown agent kind {kind!r}; choose from {AGENT_KINDS}")
