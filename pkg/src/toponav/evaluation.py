"""Episode generation, suite execution, and metrics (success rate, SPL).

Suites are reproducible bit-for-bit from (episodes, configs, seeds): episodes
run in a fixed order, per-episode randomness derives from the episode seed, and
aggregation order is fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .agents import make_agent
from .errors import GenerationError
from .mapgen import parse_map_id
from .oracles import CorruptedPredictors, OraclePredictors, PredictorCorruption
from .sim import (DIFFICULTY_BANDS, Episode, NoiseConfig, Simulator, STOP)
from .world import OccupancyGrid, Pose, distance_field

SEQUENTIAL_BAND = (1.5, 5.0)  # distance band for sequential goal sampling


@dataclass
class Outcome:
    """Per-episode (or per-goal-leg) result."""

    success: bool
    success_no_stop: bool
    l_agent: float
    l_star: float
    steps: int
    stop_taken: bool
    difficulty: str
    trajectory: list[Pose] = dc_field(default_factory=list)
    error: str | None = None


@dataclass(frozen=True)
class ResultRow:
    agent: str
    difficulty: str
    n: int
    success_rate: float
    spl: float


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def spl(outcomes: list[Outcome], mode: str = "standard") -> float:
    """Mean of S_i * l*_i / max(l_i, l*_i) over the outcomes."""
    if not outcomes:
        raise ValueError("spl of an empty outcome list")
    total = 0.0
    for o in outcomes:
        if o.l_star <= 0:
            raise ValueError("outcome with non-positive shortest-path length")
        s = o.success_no_stop if mode == "no_stop" else o.success
        if s:
            total += o.l_star / max(o.l_agent, o.l_star)
    return total / len(outcomes)


def success_rate(outcomes: list[Outcome], mode: str = "standard") -> float:
    flags = [(o.success_no_stop if mode == "no_stop" else o.success) for o in outcomes]
    return sum(flags) / len(flags)


# ---------------------------------------------------------------------------
# episode generation
# ---------------------------------------------------------------------------

def generate_episodes(maps: list[str], difficulty: str, n: int, seed: int,
                      max_steps: int = 500, grids: dict | None = None) -> list[Episode]:
    """Rejection-sample (start, goal) pairs whose grid geodesic lies in the band."""
    if not maps:
        raise GenerationError("no maps supplied")
    band = DIFFICULTY_BANDS.get(difficulty)
    if band is None:
        raise GenerationError(f"unknown difficulty {difficulty!r}")
    rng = np.random.default_rng([seed & 0x7FFFFFFF, 101])
    grids = grids if grids is not None else {}
    episodes = []
    for i in range(n):
        map_id = maps[i % len(maps)]
        if map_id not in grids:
            grids[map_id] = parse_map_id(map_id)
        grid = grids[map_id]
        ep = _sample_episode(grid, map_id, difficulty, band, rng, max_steps)
        if ep is None:
            raise GenerationError(
                f"map {map_id}: no (start, goal) pair with geodesic in {band} "
                f"after bounded attempts")
        episodes.append(ep)
    return episodes


def _sample_episode(grid: OccupancyGrid, map_id: str, difficulty: str, band,
                    rng: np.random.Generator, max_steps: int) -> Episode | None:
    free_r, free_c = np.nonzero(~grid.occupied)
    for _ in range(60):
        k = int(rng.integers(free_r.size))
        sr, sc = int(free_r[k]), int(free_c[k])
        sx, sy = grid.cell_center(sr, sc)
        field = distance_field(grid, (sx, sy))
        in_band = np.isfinite(field) & (field >= band[0]) & (field <= band[1])
        in_band &= ~grid.occupied
        rows, cols = np.nonzero(in_band)
        if rows.size == 0:
            continue
        j = int(rng.integers(rows.size))
        gx, gy = grid.cell_center(int(rows[j]), int(cols[j]))
        heading = float(rng.uniform(0.0, 2.0 * math.pi))
        u, v = rng.random(2)
        start = Pose(grid.origin[0] + (sc + u) * grid.resolution,
                     grid.origin[1] + (sr + v) * grid.resolution, heading)
        ep_seed = int(rng.integers(2 ** 31))
        return Episode(map_id, start, (gx, gy), difficulty, max_steps, ep_seed)
    return None


def sample_goal_from(grid: OccupancyGrid, origin_pt: tuple[float, float],
                     band: tuple[float, float], rng: np.random.Generator
                     ) -> tuple[float, float] | None:
    field = distance_field(grid, origin_pt)
    ok = np.isfinite(field) & (field >= band[0]) & (field <= band[1]) & ~grid.occupied
    rows, cols = np.nonzero(ok)
    if rows.size == 0:
        return None
    j = int(rng.integers(rows.size))
    return grid.cell_center(int(rows[j]), int(cols[j]))


# ---------------------------------------------------------------------------
# suite execution
# ---------------------------------------------------------------------------

def _build_predictors(grid: OccupancyGrid, corruption: PredictorCorruption | None,
                      episode_seed: int):
    oracle = OraclePredictors(grid)
    if corruption is None or corruption.is_zero:
        return oracle
    return CorruptedPredictors(oracle, corruption, stream_seed=episode_seed)


def run_episode(grid: OccupancyGrid, episode: Episode, agent_kind: str,
                noise: NoiseConfig | None = None,
                corruption: PredictorCorruption | None = None,
                agent_seed: int = 0, keep_trajectory: bool = True,
                collect=None) -> Outcome:
    """Run one episode to termination and score it under both success rules."""
    sim = Simulator(grid, noise or NoiseConfig.zero())
    obs = sim.reset(episode)
    predictors = _build_predictors(grid, corruption, episode.seed)
    agent = make_agent(agent_kind, predictors, grid.resolution,
                       seed=agent_seed ^ episode.seed, world_extent=grid.extent)
    agent.reset(sim.goal_observation(), sim.initial_heading())
    odom = None
    done = False
    while not done:
        action = agent.act(obs, odom)
        obs, odom, done = sim.step(action)
    if collect is not None:
        collect(sim, agent)
    return Outcome(
        success=sim.success(), success_no_stop=sim.success("no_stop"),
        l_agent=sim.path_length, l_star=sim.shortest_path_length,
        steps=sim.steps, stop_taken=sim.stop_taken, difficulty=episode.difficulty,
        trajectory=list(sim.trajectory) if keep_trajectory else [])


_DIFF_ORDER = {"easy": 0, "medium": 1, "hard": 2}


def run_suite(agent_kind: str, episodes: list[Episode],
              noise: NoiseConfig | None = None,
              corruption: PredictorCorruption | None = None,
              mode: str = "standard", agent_seed: int = 0,
              grids: dict | None = None, keep_trajectories: bool = False
              ) -> tuple[list[ResultRow], list[Outcome]]:
    """Run episodes in order; per-episode crashes score as failures."""
    grids = grids if grids is not None else {}
    outcomes = []
    for ep in episodes:
        if ep.map_id not in grids:
            grids[ep.map_id] = parse_map_id(ep.map_id)
        grid = grids[ep.map_id]
        try:
            outcomes.append(run_episode(grid, ep, agent_kind, noise, corruption,
                                        agent_seed, keep_trajectory=keep_trajectories))
        except Exception as e:  # crash -> recorded failure, suite continues
            outcomes.append(Outcome(False, False, 0.0, max(ep.max_steps * 0.25, 1e-9),
                                    0, False, ep.difficulty, error=f"{type(e).__name__}: {e}"))
    rows = aggregate(agent_kind, outcomes, mode)
    return rows, outcomes


def aggregate(agent_kind: str, outcomes: list[Outcome], mode: str = "standard"
              ) -> list[ResultRow]:
    by_diff: dict[str, list[Outcome]] = {}
    for o in outcomes:
        by_diff.setdefault(o.difficulty, []).append(o)
    rows = []
    for diff in sorted(by_diff, key=lambda d: (_DIFF_ORDER.get(d, 9), d)):
        outs = by_diff[diff]
        rows.append(ResultRow(agent_kind, diff, len(outs),
                              success_rate(outs, mode), spl(outs, mode)))
    if len(by_diff) > 1:
        rows.append(ResultRow(agent_kind, "overall", len(outcomes),
                              success_rate(outcomes, mode), spl(outcomes, mode)))
    return rows


# ---------------------------------------------------------------------------
# sequential goals
# ---------------------------------------------------------------------------

def sequential_episode(grid: OccupancyGrid, episode: Episode, agent_kind: str,
                       n_goals: int, noise: NoiseConfig | None = None,
                       corruption: PredictorCorruption | None = None,
                       agent_seed: int = 0, step_budget: int = 500
                       ) -> list[Outcome]:
    """One episode with n_goals sequential goals; agent state persists across
    goals, each goal gets its own step budget, and the next goal is sampled
    from the previous goal's location whether or not it was reached."""
    rng = np.random.default_rng([episode.seed & 0x7FFFFFFF, 7])
    goal = sample_goal_from(grid, episode.start.xy, SEQUENTIAL_BAND, rng)
    if goal is None:
        raise GenerationError("no first goal available in the sequential band")
    big_budget = (n_goals + 1) * step_budget + 1
    first = Episode(episode.map_id, episode.start, goal, "seq",
                    max_steps=big_budget, seed=episode.seed)
    sim = Simulator(grid, noise or NoiseConfig.zero())
    obs = sim.reset(first)
    predictors = _build_predictors(grid, corruption, episode.seed)
    agent = make_agent(agent_kind, predictors, grid.resolution,
                       seed=agent_seed ^ episode.seed, world_extent=grid.extent)
    agent.reset(sim.goal_observation(), sim.initial_heading())

    outcomes = []
    odom = None
    for k in range(n_goals):
        leg_start_len = sim.path_length
        leg_steps = 0
        stopped = False
        while leg_steps < step_budget:
            action = agent.act(obs, odom)
            obs, odom, _ = sim.step(action)
            leg_steps += 1
            if action == STOP:
                stopped = True
                break
        outcomes.append(Outcome(
            success=sim.success() if stopped else False,
            success_no_stop=sim.min_goal_distance <= 1.0,
            l_agent=sim.path_length - leg_start_len,
            l_star=max(sim.shortest_path_length, 1e-9),
            steps=leg_steps, stop_taken=stopped, difficulty=f"goal{k + 1}"))
        if k + 1 < n_goals:
            nxt = sample_goal_from(grid, sim.episode.goal, SEQUENTIAL_BAND, rng)
            if nxt is None:
                raise GenerationError(f"no goal {k + 2} available in the sequential band")
            sim.set_goal(nxt)
            agent.set_goal(sim.goal_observation())
    return outcomes


def sequential_suite(agent_kind: str, episodes: list[Episode], n_goals: int,
                     noise: NoiseConfig | None = None,
                     corruption: PredictorCorruption | None = None,
                     agent_seed: int = 0, grids: dict | None = None
                     ) -> tuple[list[ResultRow], list[list[Outcome]]]:
    """Success/SPL per goal index over a suite of sequential-goal episodes.

    Episodes whose goal chain cannot be sampled are skipped with a diagnostic
    row in mind (they simply don't contribute)."""
    grids = grids if grids is not None else {}
    per_episode: list[list[Outcome]] = []
    for ep in episodes:
        if ep.map_id not in grids:
            grids[ep.map_id] = parse_map_id(ep.map_id)
        try:
            per_episode.append(sequential_episode(grids[ep.map_id], ep, agent_kind,
                                                  n_goals, noise, corruption, agent_seed))
        except GenerationError:
            continue
        except Exception as e:
            fail = [Outcome(False, False, 0.0, 1e-9, 0, False, f"goal{k + 1}",
                            error=f"{type(e).__name__}: {e}") for k in range(n_goals)]
            per_episode.append(fail)
    rows = []
    for k in range(n_goals):
        outs = [legs[k] for legs in per_episode if len(legs) > k]
        if outs:
            rows.append(ResultRow(agent_kind, f"goal{k + 1}", len(outs),
                                  success_rate(outs), spl(outs)))
    return rows, per_episode


# ---------------------------------------------------------------------------
# table formatting
# ---------------------------------------------------------------------------

def format_table(rows: list[ResultRow], header_lines: list[str] | None = None) -> str:
    """Aligned text table, stable field order."""
    lines = list(header_lines or [])
    lines.append(f"{'agent':<14} {'difficulty':<10} {'n':>6} {'succ':>7} {'spl':>7}")
    for r in rows:
        lines.append(f"{r.agent:<14} {r.difficulty:<10} {r.n:>6} "
                     f"{r.success_rate:>7.3f} {r.spl:>7.3f}")
    return "\n".join(lines) + "\n"


def format_machine(rows: list[ResultRow], header_lines: list[str] | None = None) -> str:
    """Machine-readable columnar output (tab-separated)."""
    lines = [ln if ln.startswith("#") else "# " + ln for ln in (header_lines or [])]
    lines.append("agent\tdifficulty\tn\tsuccess_rate\tspl")
    for r in rows:
        lines.append(f"{r.agent}\t{r.difficulty}\t{r.n}\t{r.success_rate:.10g}\t{r.spl:.10g}")
    return "\n".join(lines) + "\n"
