"""Procedural multi-room floorplan generator.

Layouts are a central hallway with rooms split off on both sides, each opening
onto the hallway through a door; some rooms also connect to a neighbor. This
gives the doorway/corridor structure that makes direction prediction and
semantic scoring non-trivial. Fully deterministic per seed.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import GenerationError
from .world import DEFAULT_RESOLUTION, OccupancyGrid, distance_field


def generate_floorplan(seed: int,
                       width: float = 20.0,
                       height: float = 20.0,
                       resolution: float = DEFAULT_RESOLUTION,
                       hall_width: float = 1.8,
                       room_min: float = 3.0,
                       door_width: float = 0.9,
                       wall_thickness: float = 0.1,
                       extra_door_prob: float = 0.35) -> OccupancyGrid:
    """Generate a seeded multi-room floorplan grid."""
    rng = np.random.default_rng(seed)
    w_cells = int(round(width / resolution))
    h_cells = int(round(height / resolution))
    if w_cells < 40 or h_cells < 40:
        raise GenerationError(f"map too small: {width}x{height} m at {resolution} m/cell")
    occ = np.zeros((h_cells, w_cells), dtype=np.bool_)
    wall = max(2, int(round(wall_thickness / resolution)))
    door = max(4, int(round(door_width / resolution)))
    hall = int(round(hall_width / resolution))
    room = int(round(room_min / resolution))

    # Outer shell.
    occ[:wall, :] = True
    occ[-wall:, :] = True
    occ[:, :wall] = True
    occ[:, -wall:] = True

    horizontal = bool(rng.integers(2))
    if not horizontal:
        occ = occ.T  # generate as horizontal, transpose back at the end
        h_cells, w_cells = w_cells, h_cells

    # Hallway band across the full width, roughly central.
    jitter = int(0.15 * h_cells)
    hall_lo = (h_cells - hall) // 2 + int(rng.integers(-jitter, jitter + 1))
    hall_lo = min(max(hall_lo, wall + room), h_cells - wall - room - hall)
    hall_hi = hall_lo + hall

    # Walls bounding the hallway.
    occ[hall_lo - wall:hall_lo, :] = True
    occ[hall_hi:hall_hi + wall, :] = True

    for side_lo, side_hi, wall_rows in (
            (wall, hall_lo - wall, range(hall_lo - wall, hall_lo)),
            (hall_hi + wall, h_cells - wall, range(hall_hi, hall_hi + wall))):
        splits = _split_strip(rng, wall, w_cells - wall, room, wall)
        rooms = list(zip([wall] + [s + wall for s in splits], splits + [w_cells - wall]))
        for s in splits:
            occ[side_lo:side_hi, s:s + wall] = True
        for c0, c1 in rooms:
            if c1 - c0 < door + 2:
                continue
            # Door onto the hallway.
            d0 = int(rng.integers(c0 + 1, c1 - door))
            for r in wall_rows:
                occ[r, d0:d0 + door] = False
        # Occasional door between adjacent rooms.
        for s in splits:
            if rng.random() < extra_door_prob and side_hi - side_lo > door + 2:
                d0 = int(rng.integers(side_lo + 1, side_hi - door))
                occ[d0:d0 + door, s:s + wall] = False

    if not horizontal:
        occ = occ.T
    occ = np.ascontiguousarray(occ)
    grid = OccupancyGrid(occ, resolution)
    _check_connected(grid, seed)
    return grid


def _split_strip(rng, lo: int, hi: int, room: int, wall: int) -> list[int]:
    """Wall positions partitioning [lo, hi) into segments of at least `room` cells."""
    splits = []
    c = lo
    while hi - c >= 2 * room + wall:
        step = int(rng.integers(room, max(room + 1, min(2 * room, hi - c - room - wall)) + 1))
        c += step
        splits.append(c)
        c += wall
    return splits


def _check_connected(grid: OccupancyGrid, seed: int) -> None:
    free = ~grid.occupied
    n_free = int(free.sum())
    rs, cs = np.nonzero(free)
    dist = distance_field(grid, grid.cell_center(int(rs[0]), int(cs[0])))
    reached = int(np.isfinite(dist[free]).sum())
    if reached != n_free:
        raise GenerationError(f"floorplan seed {seed}: free space is disconnected "
                              f"({reached}/{n_free} cells reachable)")


def empty_room(width: float, height: float, resolution: float = DEFAULT_RESOLUTION) -> OccupancyGrid:
    """A single closed rectangular room (walls only on the boundary)."""
    w = int(round(width / resolution))
    h = int(round(height / resolution))
    occ = np.zeros((h, w), dtype=np.bool_)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    return OccupancyGrid(occ, resolution)


def parse_map_id(map_id: str, resolution: float | None = None) -> OccupancyGrid:
    """Resolve a map id: either a file path or a 'mapgen:key=val,...' spec.

    Spec keys: seed (required), width, height, resolution.
    """
    if map_id.startswith("mapgen:"):
        kv = {}
        for part in map_id[len("mapgen:"):].split(","):
            if part.strip() == "":
                continue
            k, _, v = part.partition("=")
            kv[k.strip()] = v.strip()
        if "seed" not in kv:
            raise GenerationError(f"map spec {map_id!r} missing seed")
        return generate_floorplan(
            seed=int(kv["seed"]),
            width=float(kv.get("width", 20.0)),
            height=float(kv.get("height", 20.0)),
            resolution=float(kv.get("resolution", resolution or DEFAULT_RESOLUTION)),
        )
    from .world import load_map

    return load_map(map_id, resolution)
