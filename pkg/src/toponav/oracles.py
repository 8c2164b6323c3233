"""Exact geometric stand-ins for the four learned predictor functions.

Each predictor follows the automated labeling rules on ground-truth geometry:

  - localize_pair:   same-node test via a 5-degree depth patch toward the goal
                     location plus a 3 m distance gate.
  - explorable_directions: 12 booleans from a local obstacle map projected from
                     the source panorama (obstacles beyond 3 m ignored); a
                     direction counts as explorable when the local grid path to
                     a probe point 3 m out is within 5% of the unobstructed
                     grid distance to that probe.
  - semantic_scores: 12 scores max(1 - d_i/20, 0) where d_i is the true-map
                     geodesic from the farthest visible traversable point along
                     each direction to the goal.
  - relative_pose:   nearest-integer 30-degree direction bin and score
                     max(1 - d/3, 0) from the true offset.

Inputs to the predictors are only what an agent could sense (panorama depths),
except where the labeling rules explicitly use ground truth (distance gates,
geodesics to the goal). A corruption wrapper emulates imperfect learning.
"""

from __future__ import annotations

import gzip
import math
import weakref
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ContractViolation, DomainError, GenerationError
from .sim import N_BINS, PanoramicObservation
from .world import OccupancyGrid, Pose, TWO_PI, raycast_panorama, wrap_angle

NODE_RADIUS = 3.0          # same-node / ghost placement radius (meters)
SCORE_MAX_DIST = 20.0      # semantic score zero point (meters)
EXPLORE_SLACK = 1.05       # explorable if local path < slack * unobstructed path
PATCH_DEGREES = 5.0        # depth patch width for the connection test
BIN_WIDTH = TWO_PI / N_BINS


def bin_of_angle(theta: float) -> int:
    """Nearest-integer 30-degree bin of a world-frame angle, wrapping 12 -> 0."""
    return int(np.rint(wrap_angle(theta) / TWO_PI * N_BINS)) % N_BINS


def bin_center(b: int) -> float:
    return b * BIN_WIDTH


@dataclass(frozen=True)
class RelPosePrediction:
    """Direction bin plus score; distance is implied as r * (1 - score)."""

    direction_bin: int
    score: float

    @property
    def implied_distance(self) -> float:
        return NODE_RADIUS * (1.0 - self.score)

    @property
    def bearing(self) -> float:
        return bin_center(self.direction_bin)


@dataclass(frozen=True)
class PredictorCorruption:
    """Parameters for emulating imperfect learned predictors."""

    p_flip_connection: float = 0.0
    sigma_score: float = 0.0
    p_flip_direction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for p in (self.p_flip_connection, self.p_flip_direction):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"flip probability must be in [0, 1], got {p}")
        if self.sigma_score < 0.0:
            raise ValueError(f"sigma_score must be >= 0, got {self.sigma_score}")

    @property
    def is_zero(self) -> bool:
        return (self.p_flip_connection == 0.0 and self.sigma_score == 0.0
                and self.p_flip_direction == 0.0)


def _mark_segment(occ: np.ndarray, r0: int, c0: int, r1: int, c1: int) -> None:
    """Bresenham fill between two cells (both inclusive)."""
    dc = abs(c1 - c0)
    dr = -abs(r1 - r0)
    sc = 1 if c0 < c1 else -1
    sr = 1 if r0 < r1 else -1
    err = dc + dr
    r, c = r0, c0
    while True:
        occ[r, c] = True
        if r == r1 and c == c1:
            return
        e2 = 2 * err
        if e2 >= dr:
            err += dr
            c += sc
        if e2 <= dc:
            err += dc
            r += sr


class _LocalProjection:
    """Obstacle raster projected from one panorama, with derived per-bin data."""

    __slots__ = ("dist", "baseline", "probe_cells", "farthest_points")

    def __init__(self, dist, baseline, probe_cells, farthest_points):
        self.dist = dist
        self.baseline = baseline
        self.probe_cells = probe_cells
        self.farthest_points = farthest_points


class OraclePredictors:
    """Predictors computed exactly from one map's ground-truth geometry.

    Pure functions over immutable observations; per-goal geodesic fields are
    cached. Safe for concurrent use within one episode runner.
    """

    def __init__(self, grid: OccupancyGrid):
        self.grid = grid
        self._goal_fields: dict[tuple[int, int], np.ndarray] = {}
        self._projections: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()

    # -- connection ----------------------------------------------------------

    def localize_pair(self, source: PanoramicObservation, goal: PanoramicObservation) -> bool:
        """True iff the goal location is within 3 m and visible in the source's
        depth patch toward it."""
        self._check_same_map(source, goal)
        sp, gp = source.capture_pose, goal.capture_pose
        d = math.hypot(gp.x - sp.x, gp.y - sp.y)
        if d > NODE_RADIUS:
            return False
        if d == 0.0:
            return True
        bearing = math.atan2(gp.y - sp.y, gp.x - sp.x)
        return self._patch_max_depth(source, bearing) >= d

    def _patch_max_depth(self, obs: PanoramicObservation, bearing: float) -> float:
        n = obs.n_rays
        center = int(np.rint(wrap_angle(bearing) / TWO_PI * n)) % n
        n_patch = max(1, int(round(n * PATCH_DEGREES / 360.0)))
        half = n_patch // 2
        idx = (np.arange(center - half, center - half + n_patch)) % n
        return float(obs.depths[idx].max())

    # -- explorable directions -----------------------------------------------

    def explorable_directions(self, source: PanoramicObservation) -> np.ndarray:
        """Boolean per 30-degree bin: local path to a probe 3 m out stays within
        the 5% slack over the unobstructed grid distance."""
        proj = self._projection(source)
        out = np.zeros(N_BINS, dtype=np.bool_)
        for b in range(N_BINS):
            pr, pc = proj.probe_cells[b]
            out[b] = proj.dist[pr, pc] < EXPLORE_SLACK * proj.baseline[b]
        return out

    # -- semantic scores -----------------------------------------------------

    def semantic_scores(self, source: PanoramicObservation,
                        goal: PanoramicObservation) -> np.ndarray:
        """Score per bin from the true-map geodesic between the bin's farthest
        visible traversable point and the goal."""
        self._check_same_map(source, goal)
        proj = self._projection(source)
        field = self._goal_field(goal)
        out = np.zeros(N_BINS, dtype=np.float64)
        for b in range(N_BINS):
            r, c = proj.farthest_points[b]
            d = field[r, c]
            if math.isfinite(d):
                out[b] = max(1.0 - d / SCORE_MAX_DIST, 0.0)
        return out

    # -- relative pose -------------------------------------------------------

    def relative_pose(self, source: PanoramicObservation,
                      goal: PanoramicObservation) -> RelPosePrediction:
        if not self.localize_pair(source, goal):
            raise ContractViolation("relative_pose called on a non-connected pair")
        return self._relative_pose_unchecked(source, goal)

    def _relative_pose_unchecked(self, source: PanoramicObservation,
                                 goal: PanoramicObservation) -> RelPosePrediction:
        sp, gp = source.capture_pose, goal.capture_pose
        d = math.hypot(gp.x - sp.x, gp.y - sp.y)
        theta = math.atan2(gp.y - sp.y, gp.x - sp.x) if d > 0.0 else 0.0
        return RelPosePrediction(bin_of_angle(theta), max(1.0 - d / NODE_RADIUS, 0.0))

    # -- internals -------------------------------------------------------------

    def _check_same_map(self, a: PanoramicObservation, b: PanoramicObservation) -> None:
        for obs in (a, b):
            if obs.map_key is not None and obs.map_key != self.grid.fingerprint:
                raise DomainError("observation pair spans different maps")
            p = obs.capture_pose
            r, c = self.grid.cell_of(p.x, p.y)
            if not self.grid.in_bounds(r, c) or self.grid.occupied[r, c]:
                raise DomainError("observation does not belong to this map "
                                  f"(capture pose ({p.x:.2f}, {p.y:.2f}) not on free space)")

    def _goal_field(self, goal: PanoramicObservation) -> np.ndarray:
        from .world import distance_field_from_cell

        p = goal.capture_pose
        cell = self.grid.cell_of(p.x, p.y)
        field = self._goal_fields.get(cell)
        if field is None:
            field = distance_field_from_cell(self.grid, cell[0], cell[1])
            self._goal_fields[cell] = field
        return field

    def _projection(self, source: PanoramicObservation) -> _LocalProjection:
        proj = self._projections.get(source)
        if proj is None:
            proj = self._build_projection(source)
            self._projections[source] = proj
        return proj

    def _build_projection(self, source: PanoramicObservation) -> _LocalProjection:
        res = self.grid.resolution
        sp = source.capture_pose
        half = int(math.ceil((NODE_RADIUS + 0.3) / res))
        size = 2 * half + 1
        occ = np.zeros((size, size), dtype=np.bool_)
        n = source.n_rays
        depths = source.depths
        angles = np.arange(n) * (TWO_PI / n)
        near = depths <= NODE_RADIUS  # obstacles beyond the node radius are ignored
        ex = np.cos(angles) * (depths + 0.5 * res)
        ey = np.sin(angles) * (depths + 0.5 * res)
        cr = (np.floor(ey / res) + half).astype(np.int64)
        cc = (np.floor(ex / res) + half).astype(np.int64)
        ok = near & (cr >= 0) & (cr < size) & (cc >= 0) & (cc < size)
        occ[cr[ok], cc[ok]] = True
        # Close lateral gaps between adjacent hits on the same surface; beyond
        # ~2.9 m the 1-degree ray spacing exceeds the cell size otherwise.
        for i in range(n):
            j = (i + 1) % n
            if not (near[i] and near[j] and ok[i] and ok[j]):
                continue
            if abs(depths[i] - depths[j]) > 0.25:
                continue
            _mark_segment(occ, cr[i], cc[i], cr[j], cc[j])
        occ[half, half] = False

        steps_s = np.empty((size, size), dtype=np.int32)
        steps_d = np.empty((size, size), dtype=np.int32)
        kernels.dist_field_steps(occ, half, half, -1, -1, steps_s, steps_d)
        dist = kernels.steps_to_meters(steps_s, steps_d, res)

        probe_cells = []
        baseline = np.zeros(N_BINS)
        farthest = []
        for b in range(N_BINS):
            a = bin_center(b)
            ux, uy = math.cos(a), math.sin(a)
            pr = int(math.floor(uy * NODE_RADIUS / res)) + half
            pc = int(math.floor(ux * NODE_RADIUS / res)) + half
            probe_cells.append((pr, pc))
            dr, dc = abs(pr - half), abs(pc - half)
            baseline[b] = ((max(dr, dc) - min(dr, dc)) + kernels.SQRT2 * min(dr, dc)) * res

            center_ray = int(round(a / (TWO_PI / n))) % n
            t = min(depths[center_ray] - 0.5 * res, NODE_RADIUS)
            cell = None
            while t > 0.0:
                x, y = sp.x + ux * t, sp.y + uy * t
                r, c = self.grid.cell_of(x, y)
                lr = int(math.floor(uy * t / res)) + half
                lc = int(math.floor(ux * t / res)) + half
                local_ok = 0 <= lr < size and 0 <= lc < size and math.isfinite(dist[lr, lc])
                if (self.grid.in_bounds(r, c) and not self.grid.occupied[r, c] and local_ok):
                    cell = (r, c)
                    break
                t -= 0.5 * res
            if cell is None:
                cell = self.grid.cell_of(sp.x, sp.y)
            farthest.append(cell)
        return _LocalProjection(dist, baseline, probe_cells, farthest)


# ---------------------------------------------------------------------------
# Corruption
# ---------------------------------------------------------------------------

def corrupt(prediction, cfg: PredictorCorruption, rng: np.random.Generator | None = None):
    """Corrupt a predictor output: flip booleans, blur scores (clamped to [0, 1]).

    Dispatch: bool -> connection flip; boolean array -> per-bin direction flips;
    float array -> score noise; RelPosePrediction -> score noise.
    Deterministic per cfg.seed when no generator is supplied.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if isinstance(prediction, (bool, np.bool_)):
        flip = rng.random() < cfg.p_flip_connection
        return bool(prediction) ^ flip
    if isinstance(prediction, RelPosePrediction):
        return RelPosePrediction(prediction.direction_bin,
                                 _blur_score(prediction.score, cfg.sigma_score, rng))
    arr = np.asarray(prediction)
    if arr.dtype == np.bool_:
        flips = rng.random(arr.shape) < cfg.p_flip_direction
        return arr ^ flips
    noise = np.clip(rng.normal(0.0, 1.0, arr.shape), -3.0, 3.0) * cfg.sigma_score
    return np.clip(arr + noise, 0.0, 1.0)


def _blur_score(score: float, sigma: float, rng: np.random.Generator) -> float:
    eps = float(np.clip(rng.normal(0.0, 1.0), -3.0, 3.0)) * sigma
    return float(np.clip(score + eps, 0.0, 1.0))


class CorruptedPredictors:
    """OraclePredictors wrapper injecting seeded prediction errors.

    Carries its own generator; outputs are deterministic given (cfg, call
    sequence). relative_pose is computed leniently so that a flipped
    connection decision still yields a usable pose estimate.
    """

    def __init__(self, oracle: OraclePredictors, cfg: PredictorCorruption,
                 stream_seed: int | None = None):
        self.oracle = oracle
        self.cfg = cfg
        self._rng = np.random.default_rng(
            cfg.seed if stream_seed is None else [cfg.seed, stream_seed & 0x7FFFFFFF])

    @property
    def grid(self):
        return self.oracle.grid

    def localize_pair(self, source, goal) -> bool:
        return corrupt(self.oracle.localize_pair(source, goal), self.cfg, self._rng)

    def explorable_directions(self, source) -> np.ndarray:
        return corrupt(self.oracle.explorable_directions(source), self.cfg, self._rng)

    def semantic_scores(self, source, goal) -> np.ndarray:
        return corrupt(self.oracle.semantic_scores(source, goal), self.cfg, self._rng)

    def relative_pose(self, source, goal) -> RelPosePrediction:
        return corrupt(self.oracle._relative_pose_unchecked(source, goal),
                       self.cfg, self._rng)


# ---------------------------------------------------------------------------
# Dataset export
# ---------------------------------------------------------------------------

LABEL_COLUMNS = (["src", "dst", "src_x", "src_y", "dst_x", "dst_y", "conn",
                  "intra_bin", "intra_score"]
                 + [f"exp{i}" for i in range(N_BINS)]
                 + [f"sem{i}" for i in range(N_BINS)])


def sample_free_points(grid: OccupancyGrid, n: int, rng: np.random.Generator) -> list[tuple[float, float]]:
    free_r, free_c = np.nonzero(~grid.occupied)
    if free_r.size < n:
        raise GenerationError(f"map has only {free_r.size} free cells, need {n}")
    idx = rng.choice(free_r.size, size=n, replace=False)
    pts = []
    ox, oy = grid.origin
    for k in idx:
        r, c = int(free_r[k]), int(free_c[k])
        u, v = rng.random(2)
        pts.append((ox + (c + u) * grid.resolution, oy + (r + v) * grid.resolution))
    return pts


def export_labels(grid: OccupancyGrid, n_samples: int, seed: int,
                  out_path: str | Path, map_id: str = "?",
                  n_rays: int = 360, max_range: float = 10.0) -> int:
    """Write labels for every ordered pair of n_samples sampled poses.

    Returns the record count, n_samples * (n_samples - 1). Deterministic per
    seed; gzip when the path ends in .gz.
    """
    if n_samples < 2:
        raise GenerationError("need at least 2 samples for ordered pairs")
    rng = np.random.default_rng(seed)
    points = sample_free_points(grid, n_samples, rng)
    oracle = OraclePredictors(grid)
    observations = [
        PanoramicObservation(raycast_panorama(grid, x, y, n_rays, max_range),
                             Pose(x, y, 0.0), grid.fingerprint)
        for x, y in points
    ]
    lines = [
        "# toponav labels v1",
        f"# map={map_id} n={n_samples} seed={seed} r={NODE_RADIUS:g} "
        f"dmax={SCORE_MAX_DIST:g} bins={N_BINS} n_rays={n_rays}",
        "# " + " ".join(LABEL_COLUMNS),
    ]
    na12 = " ".join(["NA"] * N_BINS)
    for i, src in enumerate(observations):
        exp_str = None
        for j, dst in enumerate(observations):
            if i == j:
                continue
            px = "{} {} {:.17g} {:.17g} {:.17g} {:.17g}".format(
                i, j, points[i][0], points[i][1], points[j][0], points[j][1])
            if oracle.localize_pair(src, dst):
                rp = oracle.relative_pose(src, dst)
                lines.append(f"{px} 1 {rp.direction_bin} {rp.score:.10g} {na12} {na12}")
            else:
                if exp_str is None:
                    exp = oracle.explorable_directions(src)
                    exp_str = " ".join("1" if v else "0" for v in exp)
                sem = oracle.semantic_scores(src, dst)
                sem_str = " ".join(f"{v:.10g}" for v in sem)
                lines.append(f"{px} 0 NA NA {exp_str} {sem_str}")
    data = ("\n".join(lines) + "\n").encode()
    out_path = Path(out_path)
    if out_path.suffix == ".gz":
        with open(out_path, "wb") as raw:
            # fixed mtime and empty filename keep the archive byte-stable
            with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as f:
                f.write(data)
    else:
        out_path.write_bytes(data)
    return n_samples * (n_samples - 1)


def read_labels(path: str | Path) -> list[dict]:
    """Parse a label file back into dict records (strings preserved for NA)."""
    p = Path(path)
    if p.suffix == ".gz":
        with gzip.open(p, "rt") as f:
            raw = f.read()
    else:
        raw = p.read_text()
    records = []
    for line in raw.splitlines():
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        rec = dict(zip(LABEL_COLUMNS, toks))
        records.append(rec)
    return records
