"""Ground-truth geometric substrate: occupancy grids, raycasting, visibility, geodesics.

Grids are immutable after construction and safe to share across concurrent
episode runners; every operation here is a pure function of its inputs.

Conventions:
  - occupied[row, col]; cell (r, c) spans x in [ox + c*res, ox + (c+1)*res),
    y in [oy + r*res, oy + (r+1)*res).
  - Geodesics are 8-connected with diagonal cost sqrt(2)*resolution; a diagonal
    move only requires the destination cell to be free. Distances are tracked
    as (straight, diagonal) integer step pairs and converted to meters with one
    canonical expression, so all backends agree bitwise.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DomainError, MapFormatError, MapValidationError

DEFAULT_RESOLUTION = 0.05
RAYCAST_MAX_RANGE = 10.0
TWO_PI = 2.0 * math.pi

# Sampling pitch for segment marching (collision / visibility), in cells.
MARCH_STEP_CELLS = 0.1


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [0, 2*pi)."""
    theta = math.fmod(theta, TWO_PI)
    if theta < 0.0:
        theta += TWO_PI
    return theta


def wrap_to_pi(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    theta = math.fmod(theta, TWO_PI)
    if theta > math.pi:
        theta -= TWO_PI
    elif theta <= -math.pi:
        theta += TWO_PI
    return theta


@dataclass(frozen=True)
class Pose:
    """Agent pose: position in meters, heading in [0, 2*pi)."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class GeodesicResult:
    """Outcome of a grid shortest-path query; distance is +inf when unreachable."""

    distance: float
    path: list[tuple[int, int]] | None = None

    @property
    def reachable(self) -> bool:
        return math.isfinite(self.distance)


class OccupancyGrid:
    """Immutable traversability raster with metric resolution.

    The boundary ring must be fully occupied (the world is closed); violating
    rasters are rejected at construction.
    """

    def __init__(self, occupied: np.ndarray, resolution: float, origin: tuple[float, float] = (0.0, 0.0)):
        occupied = np.ascontiguousarray(occupied, dtype=np.bool_)
        if occupied.ndim != 2 or occupied.size == 0:
            raise MapValidationError("occupancy raster must be a non-empty 2D array")
        if not resolution > 0.0:
            raise MapValidationError(f"resolution must be positive, got {resolution}")
        if not (occupied[0, :].all() and occupied[-1, :].all()
                and occupied[:, 0].all() and occupied[:, -1].all()):
            raise MapValidationError("open boundary: all border cells must be obstacles")
        occupied.setflags(write=False)
        self.occupied = occupied
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))
        self._fingerprint: str | None = None

    @property
    def fingerprint(self) -> str:
        """Stable content hash, used to reject cross-map observation pairs."""
        if self._fingerprint is None:
            import hashlib

            h = hashlib.sha1()
            h.update(np.float64([self.resolution, *self.origin]).tobytes())
            h.update(self.occupied.tobytes())
            self._fingerprint = h.hexdigest()[:16]
        return self._fingerprint

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupied.shape

    @property
    def extent(self) -> tuple[float, float]:
        """(width, height) in meters."""
        h, w = self.occupied.shape
        return (w * self.resolution, h * self.resolution)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ox, oy = self.origin
        return (int(math.floor((y - oy) / self.resolution)),
                int(math.floor((x - ox) / self.resolution)))

    def cell_center(self, r: int, c: int) -> tuple[float, float]:
        ox, oy = self.origin
        return (ox + (c + 0.5) * self.resolution, oy + (r + 0.5) * self.resolution)

    def in_bounds(self, r: int, c: int) -> bool:
        h, w = self.occupied.shape
        return 0 <= r < h and 0 <= c < w

    def is_free(self, x: float, y: float) -> bool:
        r, c = self.cell_of(x, y)
        return self.in_bounds(r, c) and not self.occupied[r, c]

    def require_free(self, x: float, y: float, what: str = "point") -> tuple[int, int]:
        r, c = self.cell_of(x, y)
        if not self.in_bounds(r, c):
            raise DomainError(f"{what} ({x:.3f}, {y:.3f}) is off-grid")
        if self.occupied[r, c]:
            raise DomainError(f"{what} ({x:.3f}, {y:.3f}) lies on an obstacle cell ({r}, {c})")
        return (r, c)

    def tobytes(self) -> bytes:
        return self.occupied.tobytes()


# ---------------------------------------------------------------------------
# Map file IO
# ---------------------------------------------------------------------------

_IMAGE_SUFFIXES = {".png", ".pgm", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg"}


def load_map(source: str | Path, resolution: float | None = None) -> OccupancyGrid:
    """Load an occupancy grid from a text raster or an 8-bit grayscale image.

    Text format: a ``resolution=<meters>`` header line followed by equal-length
    rows of '#' (obstacle) and '.' (free); the first row is the top of the map
    (largest y). Images use 0=obstacle / 255=free (threshold 128) and require
    the ``resolution`` argument. The boundary ring is forced to obstacle on
    load (closure rule).
    """
    path = Path(source)
    if path.suffix.lower() in _IMAGE_SUFFIXES:
        return _load_image_map(path, resolution)
    return _load_text_map(path, resolution)


def _load_text_map(path: Path, resolution: float | None) -> OccupancyGrid:
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise MapFormatError(f"{path}: cannot read map file: {e}") from e
    if not lines:
        raise MapFormatError(f"{path}: empty map file")
    header = lines[0].strip()
    if not header.startswith("resolution="):
        raise MapFormatError(f"{path}:1: expected 'resolution=<meters>' header, got {header!r}")
    try:
        file_res = float(header.split("=", 1)[1])
    except ValueError as e:
        raise MapFormatError(f"{path}:1: bad resolution value in {header!r}") from e
    res = resolution if resolution is not None else file_res
    rows = [ln for ln in lines[1:] if ln.strip() != ""]
    if not rows:
        raise MapFormatError(f"{path}: no raster rows after header")
    width = len(rows[0])
    grid = np.zeros((len(rows), width), dtype=np.bool_)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise MapFormatError(f"{path}:{i + 2}: row length {len(row)} != {width}")
        for j, ch in enumerate(row):
            if ch == "#":
                grid[i, j] = True
            elif ch != ".":
                raise MapFormatError(f"{path}:{i + 2}: cell {j}: invalid character {ch!r}")
    grid = grid[::-1]  # text row 0 is the top of the map
    _close_boundary(grid)
    return OccupancyGrid(grid, res)


def _load_image_map(path: Path, resolution: float | None) -> OccupancyGrid:
    if resolution is None:
        raise MapFormatError(f"{path}: image maps require an explicit resolution")
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    grid = arr < 128  # 0 = obstacle, 255 = free
    grid = grid[::-1].copy()
    _close_boundary(grid)
    return OccupancyGrid(grid, resolution)


def _close_boundary(grid: np.ndarray) -> None:
    grid[0, :] = True
    grid[-1, :] = True
    grid[:, 0] = True
    grid[:, -1] = True


def save_map_text(grid: OccupancyGrid, path: str | Path) -> None:
    rows = []
    for r in range(grid.occupied.shape[0] - 1, -1, -1):
        rows.append("".join("#" if v else "." for v in grid.occupied[r]))
    Path(path).write_text(f"resolution={grid.resolution:g}\n" + "\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# Raycasting and visibility
# ---------------------------------------------------------------------------

def raycast(grid: OccupancyGrid, origin: Pose | tuple[float, float], angle: float,
            max_range: float = RAYCAST_MAX_RANGE) -> float:
    """Distance from origin to the boundary of the first obstacle cell along the ray.

    Capped at max_range. The origin must lie on a free cell.
    """
    x, y = (origin.x, origin.y) if isinstance(origin, Pose) else origin
    grid.require_free(x, y, "raycast origin")
    out = np.empty(1, dtype=np.float64)
    kernels.raycast_batch(grid.occupied, grid.origin[0], grid.origin[1], grid.resolution,
                          x, y, np.array([angle], dtype=np.float64), max_range, out)
    return float(out[0])


def raycast_panorama(grid: OccupancyGrid, x: float, y: float, n_rays: int,
                     max_range: float = RAYCAST_MAX_RANGE) -> np.ndarray:
    """Depths for n_rays world-frame rays at uniform angles (ray 0 along +x)."""
    grid.require_free(x, y, "panorama origin")
    angles = np.arange(n_rays, dtype=np.float64) * (TWO_PI / n_rays)
    out = np.empty(n_rays, dtype=np.float64)
    kernels.raycast_batch(grid.occupied, grid.origin[0], grid.origin[1], grid.resolution,
                          x, y, angles, max_range, out)
    return out


def visible(grid: OccupancyGrid, a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True iff the straight segment a->b crosses no obstacle cell.

    Implemented by fine sampling (0.1 cell pitch), independently of the DDA
    raycaster, so the two can cross-check each other.
    """
    grid.require_free(a[0], a[1], "segment start")
    grid.require_free(b[0], b[1], "segment end")
    dx = b[0] - a[0]
    dy = b[1] - a[1]
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return True
    ux, uy = dx / dist, dy / dist
    step = grid.resolution * MARCH_STEP_CELLS
    reached = kernels.march_free(grid.occupied, grid.origin[0], grid.origin[1],
                                 grid.resolution, a[0], a[1], ux, uy, dist, step)
    return reached >= dist


# ---------------------------------------------------------------------------
# Geodesics
# ---------------------------------------------------------------------------

_NEIGH8 = ((-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0),
           (-1, -1, 1), (-1, 1, 1), (1, -1, 1), (1, 1, 1))


def geodesic(grid: OccupancyGrid, a: tuple[float, float], b: tuple[float, float]) -> GeodesicResult:
    """Grid shortest path between the cells containing a and b.

    Pure-Python Dijkstra over (straight, diagonal) step pairs; exact and
    bit-identical to the compiled distance-field backend.
    """
    src = grid.require_free(a[0], a[1], "geodesic start")
    dst = grid.require_free(b[0], b[1], "geodesic end")
    if src == dst:
        return GeodesicResult(0.0, [src])
    occ = grid.occupied
    h, w = occ.shape
    best: dict[tuple[int, int], float] = {src: 0.0}
    prev: dict[tuple[int, int], tuple[int, int]] = {}
    heap = [(0.0, 0, 0, src)]
    settled: set[tuple[int, int]] = set()
    while heap:
        key, s, d, cell = heapq.heappop(heap)
        if cell in settled:
            continue
        settled.add(cell)
        if cell == dst:
            path = [cell]
            while cell != src:
                cell = prev[cell]
                path.append(cell)
            path.reverse()
            return GeodesicResult((s + kernels.SQRT2 * d) * grid.resolution, path)
        r, c = cell
        for dr, dc, diag in _NEIGH8:
            nr, nc = r + dr, c + dc
            if nr < 0 or nr >= h or nc < 0 or nc >= w or occ[nr, nc]:
                continue
            ns, nd = s + 1 - diag, d + diag
            nkey = ns + kernels.SQRT2 * nd
            ncell = (nr, nc)
            if nkey < best.get(ncell, math.inf):
                best[ncell] = nkey
                prev[ncell] = cell
                heapq.heappush(heap, (nkey, ns, nd, ncell))
    return GeodesicResult(math.inf, None)


def distance_field(grid: OccupancyGrid, source: tuple[float, float]) -> np.ndarray:
    """Metric geodesic distance from source to every cell (+inf where unreachable)."""
    sr, sc = grid.require_free(source[0], source[1], "field source")
    return distance_field_from_cell(grid, sr, sc)


def distance_field_from_cell(grid: OccupancyGrid, sr: int, sc: int) -> np.ndarray:
    h, w = grid.occupied.shape
    steps_s = np.empty((h, w), dtype=np.int32)
    steps_d = np.empty((h, w), dtype=np.int32)
    kernels.dist_field_steps(grid.occupied, sr, sc, -1, -1, steps_s, steps_d)
    return kernels.steps_to_meters(steps_s, steps_d, grid.resolution)


def free_components(grid: OccupancyGrid) -> tuple[int, np.ndarray]:
    """Label 8-connected free components; returns (count, labels) with -1 on obstacles."""
    occ = grid.occupied
    h, w = occ.shape
    labels = np.full((h, w), -1, dtype=np.int32)
    count = 0
    for r0 in range(h):
        for c0 in range(w):
            if occ[r0, c0] or labels[r0, c0] != -1:
                continue
            stack = [(r0, c0)]
            labels[r0, c0] = count
            while stack:
                r, c = stack.pop()
                for dr, dc, _ in _NEIGH8:
                    nr, nc = r + dr, c + dc
                    if 0 <= nr < h and 0 <= nc < w and not occ[nr, nc] and labels[nr, nc] == -1:
                        labels[nr, nc] = count
                        stack.append((nr, nc))
            count += 1
    return count, labels
