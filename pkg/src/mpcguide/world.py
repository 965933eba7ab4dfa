"""Static polygonal world, occupancy-grid ingestion and visibility-graph search."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InvalidQuery, NoPath
from .geometry import (
    as_polygon,
    drop_collinear,
    ensure_ccw,
    inflate_polygon,
    is_simple,
    point_in_polygon,
    segment_crosses_interior,
    signed_area,
    wrap_angle,
)


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValueError("Pose2 components must be finite")
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class PolygonalWorld:
    """Obstacles as CCW simple polygons plus an axis-aligned planning box.

    ``legal_lines`` are polylines the vehicle must not cross under normal
    conditions (solid lane markings). They never enter the visibility graph;
    guidance uses them only for corridor clamping.
    """

    obstacles: tuple = ()
    bounds: tuple[float, float, float, float] = (-50.0, -50.0, 50.0, 50.0)
    legal_lines: tuple = ()

    def __post_init__(self):
        polys = []
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("bounds must be a non-empty rectangle")
        for raw in self.obstacles:
            poly = as_polygon(raw)
            if len(poly) < 3 or not is_simple(poly):
                raise ValueError("obstacle polygons must be simple with >= 3 vertices")
            if poly[:, 0].min() < xmin or poly[:, 0].max() > xmax or \
                    poly[:, 1].min() < ymin or poly[:, 1].max() > ymax:
                raise ValueError("obstacle vertex outside world bounds")
            poly = ensure_ccw(poly)
            poly.setflags(write=False)
            polys.append(poly)
        object.__setattr__(self, "obstacles", tuple(polys))
        lines = []
        for raw in self.legal_lines:
            line = np.asarray(raw, dtype=float).reshape(-1, 2)
            line.setflags(write=False)
            lines.append(line)
        object.__setattr__(self, "legal_lines", tuple(lines))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))

    def inflated(self, distance: float) -> "PolygonalWorld":
        xmin, ymin, xmax, ymax = self.bounds
        grown = [inflate_polygon(p, distance) for p in self.obstacles]
        pad = max(distance, 0.0)
        return PolygonalWorld(tuple(grown), (xmin - pad, ymin - pad, xmax + pad, ymax + pad), self.legal_lines)

    def contains_point(self, p) -> bool:
        """True if ``p`` lies strictly inside some obstacle."""
        return any(point_in_polygon(p, poly) for poly in self.obstacles)


@dataclass(frozen=True)
class OccupancyGrid:
    """Row-major boolean occupancy; cell (col, row) spans
    ``[col, col+1] x [row, row+1]`` cells in the frame of ``origin``."""

    origin: Pose2
    resolution: float
    width: int
    height: int
    cells: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        cells = np.asarray(self.cells, dtype=bool)
        if cells.size != self.width * self.height:
            raise ValueError("cells length must equal width * height")
        cells = cells.reshape(self.height, self.width).copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def to_world(self, pts: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.origin.heading), math.sin(self.origin.heading)
        rot = np.array([[c, -s], [s, c]])
        return np.asarray(pts, float) * self.resolution @ rot.T + self.origin.xy

    def cell_centers(self) -> np.ndarray:
        rows, cols = np.nonzero(self.cells)
        return self.to_world(np.column_stack([cols + 0.5, rows + 0.5]))


def read_pgm(path, origin: Pose2 = Pose2(0.0, 0.0, 0.0), resolution: float = 0.05,
             threshold: int = 128) -> OccupancyGrid:
    """Load a P2/P5 graymap; pixels darker than ``threshold`` are occupied.

    The first image row is the top of the map, i.e. grid row ``height - 1``.
    """
    from PIL import Image

    with Image.open(Path(path)) as im:
        pixels = np.asarray(im.convert("L"), dtype=np.int64)
    occupied = pixels < threshold
    h, w = occupied.shape
    return OccupancyGrid(origin, resolution, w, h, occupied[::-1].ravel())


_DIRS = {(1, 0): 0, (0, 1): 1, (-1, 0): 2, (0, -1): 3}
_TURN_ORDER = {1: 0, 0: 1, 3: 2, 2: 3}  # left, straight, right, back


def _trace_loops(mask: np.ndarray) -> list[np.ndarray]:
    """Closed CCW vertex loops around the occupied cells of a hole-free mask."""
    h, w = mask.shape
    padded = np.pad(mask, 1)
    out_edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(a, b):
        out_edges.setdefault(a, []).append(b)

    rows, cols = np.nonzero(mask)
    for r, c in zip(rows.tolist(), cols.tolist()):
        pr, pc = r + 1, c + 1
        if not padded[pr - 1, pc]:
            add((c, r), (c + 1, r))
        if not padded[pr, pc + 1]:
            add((c + 1, r), (c + 1, r + 1))
        if not padded[pr + 1, pc]:
            add((c + 1, r + 1), (c, r + 1))
        if not padded[pr, pc - 1]:
            add((c, r + 1), (c, r))

    loops = []
    while out_edges:
        start = min(out_edges)
        loop = [start]
        prev, cur = start, out_edges[start][0]
        out_edges[start].remove(cur)
        if not out_edges[start]:
            del out_edges[start]
        while cur != start:
            loop.append(cur)
            incoming = (cur[0] - prev[0], cur[1] - prev[1])
            choices = out_edges[cur]
            if len(choices) > 1:
                # pinch vertex: keep hugging the current cell (left turn first)
                d_in = _DIRS[incoming]
                choices.sort(key=lambda nxt: _TURN_ORDER[(_DIRS[(nxt[0] - cur[0], nxt[1] - cur[1])] - d_in) % 4])
            nxt = choices.pop(0)
            if not choices:
                del out_edges[cur]
            prev, cur = cur, nxt
        loops.append(np.asarray(loop, dtype=float))
    return loops


def grid_to_polygons(grid: OccupancyGrid, min_area: float = 0.0,
                     bounds: tuple[float, float, float, float] | None = None) -> PolygonalWorld:
    """Trace 4-connected occupied regions into axis-aligned polygons (holes filled)."""
    labels, count = ndimage.label(grid.cells)
    polys = []
    for i in range(1, count + 1):
        region = ndimage.binary_fill_holes(labels == i)
        for loop in _trace_loops(region):
            loop = drop_collinear(loop)
            world_pts = grid.to_world(loop)
            area = signed_area(world_pts)
            if area <= 0.0 or area < min_area:
                continue
            polys.append(world_pts)
    if bounds is None:
        corners = grid.to_world(np.array([[0, 0], [grid.width, 0], [grid.width, grid.height], [0, grid.height]]))
        bounds = (corners[:, 0].min(), corners[:, 1].min(), corners[:, 0].max(), corners[:, 1].max())
    return PolygonalWorld(tuple(polys), bounds)


def segment_intersects_world(p0, p1, world: PolygonalWorld) -> bool:
    """True iff the open segment (p0, p1) meets the interior of any obstacle."""
    return any(segment_crosses_interior(p0, p1, poly) for poly in world.obstacles)


@dataclass(frozen=True)
class VisibilityGraph:
    """Undirected graph; node 0 is the start point and node 1 the goal point."""

    nodes: np.ndarray
    edges: tuple[tuple[int, int, float], ...]
    world: PolygonalWorld
    adjacency: dict = field(repr=False, compare=False, default_factory=dict)

    start_index = 0
    goal_index = 1

    def __post_init__(self):
        if not self.adjacency:
            adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(len(self.nodes))}
            for i, j, w in self.edges:
                adj[i].append((j, w))
                adj[j].append((i, w))
            for lst in adj.values():
                lst.sort()
            object.__setattr__(self, "adjacency", adj)


def build_visibility_graph(world: PolygonalWorld, start: Pose2, goal: Pose2,
                           inflation: float = 0.0) -> VisibilityGraph:
    grown = world.inflated(inflation) if inflation > 0 else world
    for name, pose in (("start", start), ("goal", goal)):
        if grown.contains_point(pose.xy):
            raise InvalidQuery(f"{name} lies inside an inflated obstacle")
    pts = [start.xy, goal.xy]
    for poly in grown.obstacles:
        pts.extend(poly)
    nodes = np.asarray(pts, dtype=float)
    nodes.setflags(write=False)
    edges = []
    n = len(nodes)
    for i in range(n):
        for j in range(i + 1, n):
            if not segment_intersects_world(nodes[i], nodes[j], grown):
                edges.append((i, j, float(math.hypot(*(nodes[j] - nodes[i])))))
    return VisibilityGraph(nodes, tuple(edges), grown)


def heading_offset(direction_angle: float, heading: float) -> float:
    """|angle between a direction and a heading|, in [0, pi]."""
    return abs(wrap_angle(direction_angle - heading))


def edge_cost(graph: VisibilityGraph, u: int, v: int, length: float, start: Pose2, goal: Pose2,
              w_start: float, w_end: float) -> float:
    cost = length
    if length > 0.0 and (u == graph.start_index or v == graph.goal_index):
        d = graph.nodes[v] - graph.nodes[u]
        ang = math.atan2(d[1], d[0])
        if u == graph.start_index:
            cost += w_start * heading_offset(ang, start.heading)
        if v == graph.goal_index:
            cost += w_end * heading_offset(ang, goal.heading)
    return cost


def path_cost(graph: VisibilityGraph, node_path, start: Pose2, goal: Pose2, w_start: float, w_end: float) -> float:
    total = 0.0
    for u, v in zip(node_path[:-1], node_path[1:]):
        length = float(math.hypot(*(graph.nodes[v] - graph.nodes[u])))
        total += edge_cost(graph, u, v, length, start, goal, w_start, w_end)
    return total


@dataclass(frozen=True)
class HeadingPath:
    nodes: tuple[int, ...]
    points: np.ndarray
    cost: float


def shortest_heading_path(graph: VisibilityGraph, start: Pose2, goal: Pose2,
                          w_start: float = 0.0, w_end: float = 0.0) -> HeadingPath:
    """A* with start/goal heading penalties on the first and last edge.

    Ties are broken on (cost, hop count, node index).
    """
    s, t = graph.start_index, graph.goal_index
    goal_xy = graph.nodes[t]

    def h(i):
        return float(math.hypot(*(goal_xy - graph.nodes[i])))

    g = {s: 0.0}
    hops = {s: 0}
    parent = {s: None}
    heap = [(h(s), 0, s)]
    closed = set()
    while heap:
        f, nh, u = heapq.heappop(heap)
        if u in closed or (f, nh) != (g[u] + h(u), hops[u]):
            continue
        if u == t:
            break
        closed.add(u)
        for v, length in graph.adjacency[u]:
            if v in closed or v == s:
                continue
            cand = (g[u] + edge_cost(graph, u, v, length, start, goal, w_start, w_end), hops[u] + 1)
            if v not in g or cand < (g[v], hops[v]):
                g[v], hops[v] = cand
                parent[v] = u
                heapq.heappush(heap, (cand[0] + h(v), cand[1], v))
    if t not in g:
        raise NoPath("goal not reachable in the visibility graph")
    seq = [t]
    while parent[seq[-1]] is not None:
        seq.append(parent[seq[-1]])
    seq.reverse()
    pts = graph.nodes[seq].copy()
    return HeadingPath(tuple(seq), pts, g[t])
