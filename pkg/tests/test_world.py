import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from toponav import mapgen, world
from toponav.errors import DomainError, MapFormatError, MapValidationError
from toponav.kernels import SQRT2
from toponav.world import OccupancyGrid, Pose, geodesic, raycast, visible

from conftest import grid_from_text, random_grid
from helpers import bf_field_on_array, raymarch_depth


def bellman_ford_field(grid, sr, sc):
    return bf_field_on_array(grid.occupied, sr, sc, grid.resolution)


# ---------------------------------------------------------------------------
# load_map
# ---------------------------------------------------------------------------

def test_load_all_free_map_closes_boundary(tmp_path):
    p = tmp_path / "m.map"
    p.write_text("resolution=0.5\n" + "\n".join(["." * 10] * 10) + "\n")
    g = world.load_map(p)
    assert g.shape == (10, 10)
    assert (~g.occupied).sum() == 64  # 8x8 free interior
    assert g.occupied[0].all() and g.occupied[-1].all()


def test_load_wall_row_two_components(tmp_path):
    rows = ["#" * 12, "#..........#", "#..........#", "#" * 12,
            "#..........#", "#..........#", "#" * 12]
    p = tmp_path / "m.map"
    p.write_text("resolution=0.25\n" + "\n".join(rows) + "\n")
    g = world.load_map(p)
    count, _ = world.free_components(g)
    assert count == 2


def test_load_map_errors(tmp_path):
    p = tmp_path / "bad1.map"
    p.write_text("no header\n####\n####\n")
    with pytest.raises(MapFormatError, match="resolution"):
        world.load_map(p)
    p2 = tmp_path / "bad2.map"
    p2.write_text("resolution=0.5\n####\n#..#\n#.x#\n####\n")
    with pytest.raises(MapFormatError, match="cell 2"):
        world.load_map(p2)
    p3 = tmp_path / "bad3.map"
    p3.write_text("resolution=0.5\n####\n##\n####\n")
    with pytest.raises(MapFormatError, match="row length"):
        world.load_map(p3)


def test_open_boundary_rejected_at_construction():
    occ = np.zeros((5, 5), dtype=bool)
    with pytest.raises(MapValidationError, match="open boundary"):
        OccupancyGrid(occ, 0.1)


def test_image_map_roundtrip(tmp_path):
    from PIL import Image

    arr = np.full((12, 12), 255, dtype=np.uint8)
    arr[0, :] = arr[-1, :] = arr[:, 0] = arr[:, -1] = 0
    arr[6, 2:10] = 0
    p = tmp_path / "m.png"
    Image.fromarray(arr, mode="L").save(p)
    g = world.load_map(p, resolution=0.1)
    assert g.shape == (12, 12)
    assert g.occupied.sum() == 4 * 12 - 4 + 8
    with pytest.raises(MapFormatError, match="resolution"):
        world.load_map(p)


def test_text_map_save_load_roundtrip(tmp_path):
    g = mapgen.generate_floorplan(7, width=8.0, height=6.0)
    p = tmp_path / "m.map"
    world.save_map_text(g, p)
    g2 = world.load_map(p)
    assert g.tobytes() == g2.tobytes()
    assert g.resolution == g2.resolution


def test_mapgen_deterministic_bytes():
    a = mapgen.generate_floorplan(42)
    b = mapgen.generate_floorplan(42)
    assert a.tobytes() == b.tobytes()
    c = mapgen.generate_floorplan(43)
    assert a.tobytes() != c.tobytes()


def test_mapgen_connected_and_structured():
    for seed in range(1, 6):
        g = mapgen.generate_floorplan(seed, width=16.0, height=16.0)
        count, _ = world.free_components(g)
        assert count == 1
        # interior walls exist beyond the boundary ring
        assert g.occupied[3:-3, 3:-3].sum() > 0


# ---------------------------------------------------------------------------
# raycast
# ---------------------------------------------------------------------------

def test_raycast_corridor_axis(open_room_10m):
    g = open_room_10m
    d = raycast(g, (0.5, 5.0), 0.0)
    # wall starts at x = 9.95 (one cell); distance from 0.5
    assert abs(d - (9.95 - 0.5)) < g.resolution


def test_raycast_into_adjacent_wall(open_room_10m):
    g = open_room_10m
    d = raycast(g, (9.92, 5.0), 0.0)
    assert 0.0 < d <= g.resolution


def test_raycast_from_obstacle_is_domain_error(open_room_10m):
    with pytest.raises(DomainError):
        raycast(open_room_10m, (0.01, 0.01), 0.0)


def test_raycast_matches_fine_marching():
    rng = np.random.default_rng(5)
    g = mapgen.generate_floorplan(3, width=10.0, height=10.0)
    free_r, free_c = np.nonzero(~g.occupied)
    checked = 0
    k = 0
    while checked < 100:
        i = int(rng.integers(free_r.size))
        x, y = g.cell_center(int(free_r[i]), int(free_c[i]))
        angle = float(rng.uniform(0, 2 * math.pi))
        got = raycast(g, (x, y), angle)
        want = raymarch_depth(g, x, y, angle)
        assert abs(got - want) <= g.resolution, (x, y, angle)
        checked += 1
        k += 1


def test_raycast_monotone_under_obstacle_insertion():
    rng = np.random.default_rng(11)
    base = random_grid(rng, 30, 30, p_obstacle=0.1)
    denser = base.occupied.copy()
    extra = rng.random(denser.shape) < 0.1
    denser |= extra
    g2 = OccupancyGrid(denser, base.resolution)
    free = ~g2.occupied  # free on both grids
    rs, cs = np.nonzero(free)
    for k in range(50):
        i = int(rng.integers(rs.size))
        x, y = base.cell_center(int(rs[i]), int(cs[i]))
        a = float(rng.uniform(0, 2 * math.pi))
        assert raycast(g2, (x, y), a) <= raycast(base, (x, y), a) + 1e-12


# ---------------------------------------------------------------------------
# geodesic
# ---------------------------------------------------------------------------

def test_geodesic_identity(open_room_10m):
    g = open_room_10m
    res = geodesic(g, (3.0, 3.0), (3.0, 3.0))
    assert res.distance == 0.0
    assert res.path == [g.cell_of(3.0, 3.0)]


def test_geodesic_straight_corridor():
    g = grid_from_text("#" * 120 + "\n#" + "." * 118 + "#\n" + "#" * 120, resolution=0.05)
    a = (0.5 * 0.05 + 0.05, 1.5 * 0.05)
    b = (a[0] + 5.0, a[1])
    res = geodesic(g, a, b)
    assert abs(res.distance - 5.0) <= g.resolution


def test_geodesic_unreachable_components(tmp_path):
    g = grid_from_text("""
######
#.##.#
#.##.#
######
""", resolution=0.1)
    res = geodesic(g, (0.15, 0.15), (0.45, 0.15))
    assert not res.reachable
    assert res.path is None


def test_geodesic_off_grid_domain_error(open_room_10m):
    with pytest.raises(DomainError):
        geodesic(open_room_10m, (-1.0, 2.0), (3.0, 3.0))


def test_geodesic_matches_bellman_ford_exactly():
    rng = np.random.default_rng(31)
    pairs_checked = 0
    while pairs_checked < 40:
        g = random_grid(rng, 50, 50, p_obstacle=0.25)
        free_r, free_c = np.nonzero(~g.occupied)
        if free_r.size < 2:
            continue
        i = int(rng.integers(free_r.size))
        field = bellman_ford_field(g, int(free_r[i]), int(free_c[i]))
        src = g.cell_center(int(free_r[i]), int(free_c[i]))
        for _ in range(5):
            j = int(rng.integers(free_r.size))
            dst = g.cell_center(int(free_r[j]), int(free_c[j]))
            got = geodesic(g, src, dst).distance
            want = float(field[int(free_r[j]), int(free_c[j])])
            assert got == want or (math.isinf(got) and math.isinf(want))
            pairs_checked += 1


def test_distance_field_matches_pairwise_geodesic():
    rng = np.random.default_rng(13)
    g = random_grid(rng, 40, 40, p_obstacle=0.2)
    free_r, free_c = np.nonzero(~g.occupied)
    i = int(rng.integers(free_r.size))
    src = g.cell_center(int(free_r[i]), int(free_c[i]))
    field = world.distance_field(g, src)
    for _ in range(25):
        j = int(rng.integers(free_r.size))
        dst = g.cell_center(int(free_r[j]), int(free_c[j]))
        got = geodesic(g, src, dst).distance
        want = float(field[int(free_r[j]), int(free_c[j])])
        assert got == want or (math.isinf(got) and math.isinf(want))


# ---------------------------------------------------------------------------
# visible
# ---------------------------------------------------------------------------

def test_visible_adjacent_and_through_wall():
    g = grid_from_text("""
#######
#..#..#
#..#..#
#.....#
#######
""", resolution=0.1)
    assert visible(g, (0.15, 0.15), (0.25, 0.15))
    assert not visible(g, (0.15, 0.35), (0.55, 0.35))  # wall between
    assert visible(g, (0.15, 0.15), (0.55, 0.15))  # open row below the wall


def test_visible_agrees_with_raycast():
    rng = np.random.default_rng(77)
    g = mapgen.generate_floorplan(4, width=10.0, height=10.0)
    free_r, free_c = np.nonzero(~g.occupied)
    agree = 0
    total = 0
    for _ in range(1000):
        i, j = rng.integers(free_r.size, size=2)
        a = g.cell_center(int(free_r[i]), int(free_c[i]))
        b = g.cell_center(int(free_r[j]), int(free_c[j]))
        d = math.hypot(b[0] - a[0], b[1] - a[1])
        if d == 0.0 or d > 9.5:
            continue
        angle = math.atan2(b[1] - a[1], b[0] - a[0])
        ray_says = raycast(g, a, angle) >= d
        assert visible(g, a, b) == ray_says
        total += 1
    assert total > 500


# ---------------------------------------------------------------------------
# metric properties
# ---------------------------------------------------------------------------

@given(st.integers(0, 10_000))
def test_geodesic_symmetry_and_triangle(seed):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, 18, 18, p_obstacle=0.2)
    free_r, free_c = np.nonzero(~g.occupied)
    if free_r.size < 3:
        return
    pts = []
    for _ in range(3):
        i = int(rng.integers(free_r.size))
        pts.append(g.cell_center(int(free_r[i]), int(free_c[i])))
    a, b, c = pts
    dab = geodesic(g, a, b).distance
    assert dab == geodesic(g, b, a).distance
    dac = geodesic(g, a, c).distance
    dbc = geodesic(g, b, c).distance
    if math.isfinite(dab) and math.isfinite(dbc):
        assert dac <= dab + dbc + 2 * g.resolution
    euclid = math.hypot(b[0] - a[0], b[1] - a[1])
    if math.isfinite(dab):
        assert dab >= euclid - 2 * g.resolution * SQRT2  # cell-center metric slack


@given(st.integers(0, 10_000))
def test_visible_implies_geodesic_bound(seed):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, 20, 20, p_obstacle=0.18)
    free_r, free_c = np.nonzero(~g.occupied)
    if free_r.size < 2:
        return
    i, j = rng.integers(free_r.size, size=2)
    a = g.cell_center(int(free_r[i]), int(free_c[i]))
    b = g.cell_center(int(free_r[j]), int(free_c[j]))
    if visible(g, a, b):
        d = geodesic(g, a, b).distance
        euclid = math.hypot(b[0] - a[0], b[1] - a[1])
        assert d <= euclid + 2 * g.resolution * SQRT2


def test_pose_heading_normalized():
    assert Pose(0, 0, -math.pi / 2).heading == pytest.approx(3 * math.pi / 2)
    assert Pose(0, 0, 2 * math.pi).heading == pytest.approx(0.0)
