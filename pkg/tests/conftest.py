import numpy as np
import pytest
from hypothesis import settings

from toponav.world import OccupancyGrid

settings.register_profile("suite", deadline=None, max_examples=25)
settings.load_profile("suite")


def grid_from_text(text: str, resolution: float = 0.05) -> OccupancyGrid:
    """Build a grid from an ASCII raster ('#' obstacle, '.' free); first row is the top."""
    rows = [ln for ln in text.strip().splitlines()]
    occ = np.array([[ch == "#" for ch in row] for row in rows], dtype=np.bool_)
    return OccupancyGrid(occ[::-1].copy(), resolution)


def random_grid(rng: np.random.Generator, h: int, w: int, p_obstacle: float = 0.25) -> OccupancyGrid:
    occ = rng.random((h, w)) < p_obstacle
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    return OccupancyGrid(occ, 0.05)


@pytest.fixture
def open_room_10m() -> OccupancyGrid:
    from toponav.mapgen import empty_room

    return empty_room(10.0, 10.0)
