"""Episodic simulator: continuous agent state, noisy discrete actions, panoramic depth
observations, and a noisy odometry sensor.

Conventions:
  - Panoramas are world-frame aligned: ray i points at angle i * 2pi / n_rays
    from the world +x axis, independent of agent heading.
  - Odometry readings are world-frame per-step deltas (dx, dy, dheading). The
    sensor model rotates the reported translation by its accumulated heading
    error and adds truncated Gaussian noise, so dead-reckoned position drifts
    superlinearly when heading noise is nonzero.
  - Forward motion is truncated at obstacle contact (stop-at-wall, no sliding).
  - All noise is Gaussian clipped at 3 sigma; a seed fully determines every
    draw. One Simulator instance serves one episode at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DomainError, EpisodeError, MapFormatError
from .world import (OccupancyGrid, Pose, RAYCAST_MAX_RANGE, TWO_PI, distance_field,
                    raycast_panorama, wrap_angle, wrap_to_pi)

FORWARD_STEP = 0.25
TURN_STEP = math.radians(10.0)
MAX_STEPS = 500
SUCCESS_RADIUS = 1.0
N_RAYS = 360
N_BINS = 12

MOVE_FORWARD = "move_forward"
TURN_RIGHT = "turn_right"
TURN_LEFT = "turn_left"
STOP = "stop"
ACTIONS = (MOVE_FORWARD, TURN_RIGHT, TURN_LEFT, STOP)

DIFFICULTY_BANDS = {
    "easy": (1.5, 3.0),
    "medium": (3.0, 5.0),
    "hard": (5.0, 10.0),
}


@dataclass(frozen=True)
class ActuationNoise:
    trans_on_forward: float = 0.02
    rot_on_forward: float = math.radians(0.5)
    trans_on_turn: float = 0.005
    rot_on_turn: float = math.radians(1.0)


@dataclass(frozen=True)
class SensorNoise:
    odom_xy: float = 0.005
    odom_heading: float = math.radians(0.3)


@dataclass(frozen=True)
class NoiseConfig:
    """Actuation + odometry sensor noise; a seed determines all stochasticity."""

    actuation: ActuationNoise = field(default_factory=ActuationNoise)
    sensor: SensorNoise = field(default_factory=SensorNoise)
    seed: int = 0

    def __post_init__(self):
        for v in (self.actuation.trans_on_forward, self.actuation.rot_on_forward,
                  self.actuation.trans_on_turn, self.actuation.rot_on_turn,
                  self.sensor.odom_xy, self.sensor.odom_heading):
            if v < 0:
                raise ValueError(f"noise sigma must be >= 0, got {v}")

    @classmethod
    def zero(cls, seed: int = 0) -> "NoiseConfig":
        return cls(ActuationNoise(0.0, 0.0, 0.0, 0.0), SensorNoise(0.0, 0.0), seed)

    def with_sensor_scale(self, k: float) -> "NoiseConfig":
        s = SensorNoise(self.sensor.odom_xy * k, self.sensor.odom_heading * k)
        return NoiseConfig(self.actuation, s, self.seed)


@dataclass(frozen=True)
class Episode:
    map_id: str
    start: Pose
    goal: tuple[float, float]
    difficulty: str
    max_steps: int = MAX_STEPS
    seed: int = 0


class PanoramicObservation:
    """360-degree depth sweep plus the true pose it was captured at.

    capture_pose is oracle-only: agents must never read it; only the oracle
    predictors and the evaluator may. map_key identifies the grid the sweep
    was captured on so cross-map predictor calls can be rejected.
    """

    __slots__ = ("depths", "capture_pose", "map_key", "__weakref__")

    def __init__(self, depths: np.ndarray, capture_pose: Pose, map_key: str | None = None):
        depths = np.asarray(depths, dtype=np.float64)
        if depths.ndim != 1 or depths.size % N_BINS != 0:
            raise ValueError(f"depth count {depths.size} not divisible by {N_BINS}")
        depths.setflags(write=False)
        self.depths = depths
        self.capture_pose = capture_pose
        self.map_key = map_key

    @property
    def n_rays(self) -> int:
        return self.depths.size


def _clip3(rng: np.random.Generator, sigma: float) -> float:
    """One Gaussian draw truncated (clipped) at 3 sigma."""
    return float(np.clip(rng.normal(0.0, 1.0), -3.0, 3.0)) * sigma


class Simulator:
    """One episode's environment: grid, agent state, noise, observations."""

    def __init__(self, grid: OccupancyGrid, noise: NoiseConfig | None = None,
                 n_rays: int = N_RAYS, max_range: float = RAYCAST_MAX_RANGE):
        self.grid = grid
        self.noise = noise if noise is not None else NoiseConfig.zero()
        self.n_rays = n_rays
        self.max_range = max_range
        self.episode: Episode | None = None
        self._done = True

    # -- episode lifecycle ---------------------------------------------------

    def reset(self, episode: Episode) -> PanoramicObservation:
        self.grid.require_free(episode.start.x, episode.start.y, "episode start")
        self.grid.require_free(episode.goal[0], episode.goal[1], "episode goal")
        goal_field = distance_field(self.grid, episode.goal)
        sr, sc = self.grid.cell_of(episode.start.x, episode.start.y)
        l_star = float(goal_field[sr, sc])
        if not math.isfinite(l_star):
            raise EpisodeError(f"goal {episode.goal} unreachable from start {episode.start.xy}")
        band = DIFFICULTY_BANDS.get(episode.difficulty)
        if band is not None and not (band[0] <= l_star <= band[1]):
            raise EpisodeError(
                f"geodesic {l_star:.3f} m outside {episode.difficulty} band {band}")
        self.episode = episode
        self.shortest_path_length = l_star
        self._rng = np.random.default_rng(
            [self.noise.seed & 0x7FFFFFFF, episode.seed & 0x7FFFFFFF])
        self._pose = episode.start
        self._steps = 0
        self._done = False
        self._stop_taken = False
        self._sensor_heading_err = 0.0
        self._last_reading: np.ndarray | None = None
        self._path_length = 0.0
        self.trajectory: list[Pose] = [episode.start]
        self._min_goal_dist = self._goal_distance()
        self._goal_obs: PanoramicObservation | None = None
        return self._observe()

    def goal_observation(self) -> PanoramicObservation:
        """Panorama captured at the goal point (heading 0); cached per episode."""
        if self.episode is None:
            raise EpisodeError("no active episode")
        if self._goal_obs is None:
            gx, gy = self.episode.goal
            depths = raycast_panorama(self.grid, gx, gy, self.n_rays, self.max_range)
            self._goal_obs = PanoramicObservation(depths, Pose(gx, gy, 0.0),
                                                  self.grid.fingerprint)
        return self._goal_obs

    def initial_heading(self) -> float:
        """Start heading, exposed as agent proprioception (see odometry conventions)."""
        if self.episode is None:
            raise EpisodeError("no active episode")
        return self.episode.start.heading

    def set_goal(self, goal: tuple[float, float]) -> float:
        """Swap the goal mid-episode (sequential-goal evaluation).

        Reopens a stopped episode, clears per-goal success state, and returns
        the shortest-path length from the current true pose to the new goal.
        Noise streams and sensor drift continue uninterrupted.
        """
        if self.episode is None:
            raise EpisodeError("no active episode")
        import dataclasses

        self.grid.require_free(goal[0], goal[1], "goal")
        field = distance_field(self.grid, goal)
        r, c = self.grid.cell_of(self._pose.x, self._pose.y)
        l_star = float(field[r, c])
        if not math.isfinite(l_star):
            raise EpisodeError(f"new goal {goal} unreachable from current pose")
        self.episode = dataclasses.replace(self.episode, goal=goal)
        self.shortest_path_length = l_star
        self._done = False
        self._stop_taken = False
        self._goal_obs = None
        self._min_goal_dist = self._goal_distance()
        return l_star

    # -- stepping -------------------------------------------------------------

    def step(self, action: str) -> tuple[PanoramicObservation, np.ndarray, bool]:
        if self._done:
            raise EpisodeError("step() called after episode end")
        if action not in ACTIONS:
            raise DomainError(f"unknown action {action!r}")
        old = self._pose
        if action == STOP:
            self._stop_taken = True
            self._done = True
            self._steps += 1
            self._last_reading = np.zeros(3)
            return self._observe(), self._last_reading, True

        act = self.noise.actuation
        if action == MOVE_FORWARD:
            dist = FORWARD_STEP + _clip3(self._rng, act.trans_on_forward)
            rot = _clip3(self._rng, act.rot_on_forward)
            self._translate(max(0.0, dist), old.heading)
            new_heading = old.heading + rot
        else:
            sign = 1.0 if action == TURN_LEFT else -1.0
            rot = sign * TURN_STEP + _clip3(self._rng, act.rot_on_turn)
            slip = _clip3(self._rng, act.trans_on_turn)
            direction = old.heading if slip >= 0 else old.heading + math.pi
            self._translate(abs(slip), direction)
            new_heading = old.heading + rot
        self._pose = Pose(self._pose.x, self._pose.y, new_heading)

        self._steps += 1
        if self._steps >= self.episode.max_steps:
            self._done = True
        self.trajectory.append(self._pose)
        moved = math.hypot(self._pose.x - old.x, self._pose.y - old.y)
        self._path_length += moved
        self._min_goal_dist = min(self._min_goal_dist, self._goal_distance())
        self._last_reading = self._sense(old, self._pose)
        return self._observe(), self._last_reading, self._done

    def _translate(self, dist: float, direction: float) -> None:
        """Move up to dist along direction, stopping at obstacle contact."""
        if dist <= 0.0:
            return
        g = self.grid
        ux, uy = math.cos(direction), math.sin(direction)
        step = g.resolution * 0.1
        moved = kernels.march_free(g.occupied, g.origin[0], g.origin[1], g.resolution,
                                   self._pose.x, self._pose.y, ux, uy, dist, step)
        self._pose = Pose(self._pose.x + ux * moved, self._pose.y + uy * moved,
                          self._pose.heading)

    def _sense(self, old: Pose, new: Pose) -> np.ndarray:
        """World-frame odometry delta with sensor noise (see module docstring)."""
        sn = self.noise.sensor
        dx, dy = new.x - old.x, new.y - old.y
        dth = wrap_to_pi(new.heading - old.heading)
        rot = self._sensor_heading_err
        c, s = math.cos(rot), math.sin(rot)
        rx = c * dx - s * dy + _clip3(self._rng, sn.odom_xy)
        ry = s * dx + c * dy + _clip3(self._rng, sn.odom_xy)
        eps_th = _clip3(self._rng, sn.odom_heading)
        self._sensor_heading_err += eps_th
        return np.array([rx, ry, dth + eps_th])

    def odometry_reading(self) -> np.ndarray:
        if self._last_reading is None:
            raise EpisodeError("odometry requires at least one step")
        return self._last_reading

    def _observe(self) -> PanoramicObservation:
        depths = raycast_panorama(self.grid, self._pose.x, self._pose.y,
                                  self.n_rays, self.max_range)
        return PanoramicObservation(depths, self._pose, self.grid.fingerprint)

    def _goal_distance(self) -> float:
        gx, gy = self.episode.goal
        return math.hypot(self._pose.x - gx, self._pose.y - gy)

    # -- outcome --------------------------------------------------------------

    @property
    def true_pose(self) -> Pose:
        return self._pose

    @property
    def steps(self) -> int:
        return self._steps

    @property
    def done(self) -> bool:
        return self._done

    @property
    def stop_taken(self) -> bool:
        return self._stop_taken

    @property
    def path_length(self) -> float:
        return self._path_length

    @property
    def min_goal_distance(self) -> float:
        return self._min_goal_dist

    def success(self, mode: str = "standard") -> bool:
        """Standard: stop taken within 1 m of goal. no_stop: any visited pose within 1 m."""
        if not self._done:
            raise EpisodeError("success() before episode end")
        if mode == "no_stop":
            return self._min_goal_dist <= SUCCESS_RADIUS
        return self._stop_taken and self._goal_distance() <= SUCCESS_RADIUS


def episode_success(goal: tuple[float, float], stop_pose: Pose, stop_taken: bool) -> bool:
    """Standard success rule on explicit values (for direct tests)."""
    return stop_taken and math.hypot(stop_pose.x - goal[0], stop_pose.y - goal[1]) <= SUCCESS_RADIUS


# ---------------------------------------------------------------------------
# Episode and noise-config files
# ---------------------------------------------------------------------------

def write_episodes(path: str | Path, episodes: list[Episode], header: dict | None = None) -> None:
    lines = ["# toponav episodes v1"]
    for k, v in (header or {}).items():
        lines.append(f"# {k}={v}")
    for ep in episodes:
        lines.append(
            "episode map={} start={:.10g},{:.10g},{:.10g} goal={:.10g},{:.10g} "
            "difficulty={} max_steps={} seed={}".format(
                ep.map_id, ep.start.x, ep.start.y, ep.start.heading,
                ep.goal[0], ep.goal[1], ep.difficulty, ep.max_steps, ep.seed))
    Path(path).write_text("\n".join(lines) + "\n")


def read_episodes(path: str | Path) -> list[Episode]:
    episodes = []
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if not line.startswith("episode "):
            raise MapFormatError(f"{path}:{i}: expected 'episode ...' record")
        kv = {}
        for tok in line.split()[1:]:
            k, _, v = tok.partition("=")
            kv[k] = v
        try:
            sx, sy, sh = (float(t) for t in kv["start"].split(","))
            gx, gy = (float(t) for t in kv["goal"].split(","))
            episodes.append(Episode(
                map_id=kv["map"], start=Pose(sx, sy, sh), goal=(gx, gy),
                difficulty=kv["difficulty"], max_steps=int(kv.get("max_steps", MAX_STEPS)),
                seed=int(kv.get("seed", 0))))
        except (KeyError, ValueError) as e:
            raise MapFormatError(f"{path}:{i}: bad episode record: {e}") from e
    return episodes


_NOISE_KEYS = {
    "actuation.trans_on_forward", "actuation.rot_on_forward",
    "actuation.trans_on_turn", "actuation.rot_on_turn",
    "sensor.odom_xy", "sensor.odom_heading", "seed",
}


def write_noise_config(path: str | Path, cfg: NoiseConfig) -> None:
    a, s = cfg.actuation, cfg.sensor
    text = (
        "# toponav noise config (sigmas in meters/radians; Gaussian clipped at 3 sigma)\n"
        "# forward motion is truncated at obstacle contact (stop-at-wall)\n"
        f"actuation.trans_on_forward={a.trans_on_forward:.10g}\n"
        f"actuation.rot_on_forward={a.rot_on_forward:.10g}\n"
        f"actuation.trans_on_turn={a.trans_on_turn:.10g}\n"
        f"actuation.rot_on_turn={a.rot_on_turn:.10g}\n"
        f"sensor.odom_xy={s.odom_xy:.10g}\n"
        f"sensor.odom_heading={s.odom_heading:.10g}\n"
        f"seed={cfg.seed}\n")
    Path(path).write_text(text)


def read_noise_config(path: str | Path) -> NoiseConfig:
    kv = {}
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, sep, v = line.partition("=")
        k = k.strip()
        if not sep or k not in _NOISE_KEYS:
            raise MapFormatError(f"{path}:{i}: unknown noise key {k!r}")
        kv[k] = v.strip()
    act = ActuationNoise(
        trans_on_forward=float(kv.get("actuation.trans_on_forward", ActuationNoise.trans_on_forward)),
        rot_on_forward=float(kv.get("actuation.rot_on_forward", ActuationNoise.rot_on_forward)),
        trans_on_turn=float(kv.get("actuation.trans_on_turn", ActuationNoise.trans_on_turn)),
        rot_on_turn=float(kv.get("actuation.rot_on_turn", ActuationNoise.rot_on_turn)))
    sen = SensorNoise(odom_xy=float(kv.get("sensor.odom_xy", SensorNoise.odom_xy)),
                      odom_heading=float(kv.get("sensor.odom_heading", SensorNoise.odom_heading)))
    return NoiseConfig(act, sen, seed=int(kv.get("seed", 0)))
