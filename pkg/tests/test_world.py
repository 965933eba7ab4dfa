import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image
from shapely.geometry import Polygon, box
from shapely.ops import unary_union

from mpcguide.errors import InvalidQuery, NoPath
from mpcguide.world import (
    OccupancyGrid,
    PolygonalWorld,
    Pose2,
    VisibilityGraph,
    build_visibility_graph,
    grid_to_polygons,
    path_cost,
    read_pgm,
    shortest_heading_path,
)

from oracles import brute_force_edges, exhaustive_best_cost, free_pose, random_convex_world

SQUARE = np.array([[4.0, 4.0], [6.0, 4.0], [6.0, 6.0], [4.0, 6.0]])


def test_pose_heading_is_wrapped():
    assert Pose2(0, 0, 3 * math.pi).heading == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        Pose2(float("nan"), 0.0)


def test_world_validation():
    with pytest.raises(ValueError):
        PolygonalWorld((np.array([[0, 0], [1, 1], [1, 0], [0, 1]], float),), (-5, -5, 5, 5))  # bow tie
    with pytest.raises(ValueError):
        PolygonalWorld((np.array([[0, 0], [1, 0]], float),), (-5, -5, 5, 5))
    with pytest.raises(ValueError):
        PolygonalWorld((SQUARE,), (0, 0, 5, 5))  # leaves the bounds
    w = PolygonalWorld((SQUARE[::-1].copy(),), (0, 0, 10, 10))
    assert Polygon(w.obstacles[0]).exterior.is_ccw


def test_read_pgm_plain_and_binary(tmp_path):
    img = np.full((4, 6), 255, dtype=np.uint8)
    img[0, 0] = 0  # top-left pixel -> highest row of the map
    p2 = tmp_path / "a.pgm"
    p2.write_text("P2\n6 4\n255\n" + "\n".join(" ".join(map(str, r)) for r in img) + "\n")
    p5 = tmp_path / "b.pgm"
    Image.fromarray(img).save(p5)
    for path in (p2, p5):
        grid = read_pgm(path, Pose2(1.0, 2.0, 0.0), resolution=0.5)
        assert grid.cells.shape == (4, 6)
        assert grid.cells[3, 0] and grid.cells.sum() == 1
        world = grid_to_polygons(grid)
        assert len(world.obstacles) == 1
        assert Polygon(world.obstacles[0]).equals(box(1.0, 3.5, 1.5, 4.0))


def _cells_union(cells, res=1.0):
    h, w = cells.shape
    return unary_union([box(c * res, r * res, (c + 1) * res, (r + 1) * res)
                        for r in range(h) for c in range(w) if cells[r, c]])


@given(arrays(bool, (6, 7)))
def test_grid_polygons_cover_occupied_cells(cells):
    grid = OccupancyGrid(Pose2(0, 0, 0), 1.0, 7, 6, cells)
    world = grid_to_polygons(grid)
    ours = unary_union([Polygon(p) for p in world.obstacles]) if world.obstacles else Polygon()
    ref = _cells_union(cells)
    # holes are filled, so compare against the union with its holes filled
    parts = [ref] if ref.geom_type == "Polygon" else list(getattr(ref, "geoms", []))
    filled = unary_union([Polygon(p.exterior) for p in parts if not p.is_empty])
    assert ours.symmetric_difference(filled).area == pytest.approx(0.0, abs=1e-9)
    for poly in world.obstacles:
        assert Polygon(poly).is_valid


def test_diagonal_cells_give_two_polygons():
    cells = np.array([[1, 0], [0, 1]], dtype=bool)
    world = grid_to_polygons(OccupancyGrid(Pose2(0, 0, 0), 1.0, 2, 2, cells))
    assert len(world.obstacles) == 2


def test_min_area_drops_small_regions():
    cells = np.zeros((5, 5), dtype=bool)
    cells[0, 0] = True
    cells[2:5, 2:5] = True
    world = grid_to_polygons(OccupancyGrid(Pose2(0, 0, 0), 1.0, 5, 5, cells), min_area=2.0)
    assert len(world.obstacles) == 1


def test_blocking_square_removes_direct_edge():
    w = PolygonalWorld((SQUARE,), (0, 0, 10, 10))
    g = build_visibility_graph(w, Pose2(1, 5, 0), Pose2(9, 5, 0))
    pairs = {(i, j) for i, j, _ in g.edges}
    assert (0, 1) not in pairs
    path = shortest_heading_path(g, Pose2(1, 5, 0), Pose2(9, 5, 0))
    assert path.cost == pytest.approx(2 * math.hypot(3, 1) + 2)


@pytest.mark.parametrize("seed", range(10))
def test_visibility_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    world = random_convex_world(rng, int(rng.integers(1, 7)))
    inflation = 0.2
    start, goal = free_pose(rng, world, inflation), free_pose(rng, world, inflation)
    g = build_visibility_graph(world, start, goal, inflation)
    assert {(i, j) for i, j, _ in g.edges} == brute_force_edges(g.nodes, g.world)


def test_start_inside_obstacle_is_invalid():
    w = PolygonalWorld((SQUARE,), (0, 0, 10, 10))
    with pytest.raises(InvalidQuery):
        build_visibility_graph(w, Pose2(5, 5, 0), Pose2(9, 9, 0))
    with pytest.raises(InvalidQuery):
        build_visibility_graph(w, Pose2(1, 1, 0), Pose2(6.1, 5, 0), inflation=0.3)


def test_enclosed_goal_has_no_path():
    ring = [np.array([[3, 3], [7, 3], [7, 3.5], [3, 3.5]], float),
            np.array([[3, 6.5], [7, 6.5], [7, 7], [3, 7]], float),
            np.array([[3, 3.5], [3.5, 3.5], [3.5, 6.5], [3, 6.5]], float),
            np.array([[6.5, 3.5], [7, 3.5], [7, 6.5], [6.5, 6.5]], float)]
    w = PolygonalWorld(tuple(ring), (0, 0, 10, 10))
    # the walls only touch; inflation makes them overlap so no seam is left between them
    g = build_visibility_graph(w, Pose2(1, 1, 0), Pose2(5, 5, 0), inflation=0.1)
    with pytest.raises(NoPath):
        shortest_heading_path(g, Pose2(1, 1, 0), Pose2(5, 5, 0))


def test_heading_penalty_selects_side():
    w = PolygonalWorld((SQUARE,), (0, 0, 10, 10))
    for heading, expect_above in ((0.6, True), (-0.6, False)):
        start, goal = Pose2(1, 5, heading), Pose2(9, 5, 0)
        g = build_visibility_graph(w, start, goal)
        path = shortest_heading_path(g, start, goal, w_start=2.0)
        assert (path.points[1][1] > 5) == expect_above


@st.composite
def small_graphs(draw):
    n = draw(st.integers(2, 8))
    pts = draw(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=n, max_size=n, unique=True))
    nodes = np.asarray(pts, dtype=float)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    edges = tuple((i, j, float(math.hypot(*(nodes[j] - nodes[i])))) for i, j in sorted(chosen))
    hs = draw(st.floats(-math.pi, math.pi)), draw(st.floats(-math.pi, math.pi))
    ws = draw(st.floats(0, 5)), draw(st.floats(0, 5))
    return VisibilityGraph(nodes, edges, PolygonalWorld((), (-1, -1, 10, 10))), hs, ws


@given(small_graphs())
def test_astar_matches_exhaustive_enumeration(case):
    g, (h0, h1), (w0, w1) = case
    start, goal = Pose2(*g.nodes[0], h0), Pose2(*g.nodes[1], h1)
    best = exhaustive_best_cost(g, start, goal, w0, w1)
    if math.isinf(best):
        with pytest.raises(NoPath):
            shortest_heading_path(g, start, goal, w0, w1)
        return
    path = shortest_heading_path(g, start, goal, w0, w1)
    assert path.cost == pytest.approx(best, abs=1e-9)
    assert path_cost(g, path.nodes, start, goal, w0, w1) == pytest.approx(path.cost, abs=1e-9)
