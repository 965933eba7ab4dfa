"""Independent reference implementations used as test oracles."""
from __future__ import annotations

import itertools
import math

import numpy as np
import sympy as sp
from shapely.geometry import LineString, Polygon

from mpcguide.world import PolygonalWorld, Pose2, path_cost


def random_convex_world(rng: np.random.Generator, n_polys: int, size: float = 10.0) -> PolygonalWorld:
    polys = []
    for _ in range(n_polys):
        c = rng.uniform(1.5, size - 1.5, 2)
        pts = c + rng.uniform(-1.0, 1.0, (rng.integers(3, 7), 2))
        hull = Polygon(pts).convex_hull
        if hull.geom_type != "Polygon" or hull.area < 0.05:
            continue
        polys.append(np.asarray(hull.exterior.coords)[:-1])
    return PolygonalWorld(tuple(polys), (0.0, 0.0, size, size))


def free_pose(rng, world: PolygonalWorld, inflation: float, size: float = 10.0) -> Pose2:
    grown = [Polygon(p).buffer(inflation + 1e-6) for p in world.obstacles]
    while True:
        x, y = rng.uniform(0.2, size - 0.2, 2)
        if not any(g.contains(LineString([(x, y), (x, y)]).centroid) for g in grown):
            return Pose2(float(x), float(y), float(rng.uniform(-math.pi, math.pi)))


def brute_force_edges(nodes: np.ndarray, grown: PolygonalWorld) -> set[tuple[int, int]]:
    """Mutual visibility by the DE-9IM interior/interior test of shapely."""
    shp = [Polygon(p) for p in grown.obstacles]
    out = set()
    for i, j in itertools.combinations(range(len(nodes)), 2):
        seg = LineString([nodes[i], nodes[j]]) if not np.allclose(nodes[i], nodes[j]) else None
        if seg is None or all(seg.relate(p)[0] == "F" for p in shp):
            out.add((i, j))
    return out


def exhaustive_best_cost(graph, start: Pose2, goal: Pose2, w_start: float, w_end: float) -> float:
    """Minimum heading-penalised cost over every simple start-goal path."""
    best = math.inf
    s, t = graph.start_index, graph.goal_index

    def dfs(u, path, seen):
        nonlocal best
        if u == t:
            best = min(best, path_cost(graph, path, start, goal, w_start, w_end))
            return
        for v, _ in graph.adjacency[u]:
            if v not in seen:
                seen.add(v)
                path.append(v)
                dfs(v, path, seen)
                path.pop()
                seen.discard(v)

    dfs(s, [s], {s})
    return best


def raycast_bounds(origin, heading, polygons, far: float = 100.0):
    """Free interval along the left normal around the origin, found with shapely."""
    o = np.asarray(origin, dtype=float)
    n = np.array([-math.sin(heading), math.cos(heading)])
    hi, lo = math.inf, -math.inf
    for poly in polygons:
        shp = Polygon(poly)
        for sign in (1.0, -1.0):
            ray = LineString([o, o + sign * far * n])
            inter = ray.intersection(shp)
            if inter.is_empty:
                continue
            d = inter.distance(LineString([o, o]).centroid)
            if sign > 0:
                hi = min(hi, d)
            else:
                lo = max(lo, -d)
    return lo, hi


def active_set_qp(H, g, G, h, tol: float = 1e-9):
    """Global optimum of a convex QP by enumerating candidate active sets."""
    n, m = len(g), len(h)
    best = (math.inf, None)
    for k in range(0, min(n, m) + 1):
        for S in itertools.combinations(range(m), k):
            S = list(S)
            K = np.zeros((n + k, n + k))
            K[:n, :n] = H
            K[:n, n:] = G[S].T
            K[n:, :n] = G[S]
            rhs = np.concatenate([-g, h[S]])
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            z, lam = sol[:n], sol[n:]
            if np.max(np.abs(K @ sol - rhs)) > 1e-7:
                continue
            if np.any(G @ z - h > tol * (1 + np.abs(h))) or np.any(lam < -tol):
                continue
            obj = 0.5 * z @ H @ z + g @ z
            if obj < best[0]:
                best = (obj, z)
    return best


def symbolic_single_track():
    """Single-track matrices derived from the force and moment balance with sympy."""
    m, jz, lf, lr, cf, cr, v = sp.symbols("m J_z l_f l_r c_f c_r v", positive=True)
    beta, r, dpsi, e, df, dr, rref = sp.symbols("beta r dpsi e delta_f delta_r r_ref")
    fyf = cf * (df - beta - lf * r / v)
    fyr = cr * (dr - beta + lr * r / v)
    f = sp.Matrix([
        (fyf + fyr) / (m * v) - r,        # beta' from m v (beta' + r) = Fyf + Fyr
        (lf * fyf - lr * fyr) / jz,       # r' from Jz r' = lf Fyf - lr Fyr
        r - rref,                          # heading error relative to the reference
        v * (beta + dpsi),                 # small-angle lateral motion
    ])
    x = sp.Matrix([beta, r, dpsi, e])
    u = sp.Matrix([df, dr, rref])
    return (m, jz, lf, lr, cf, cr, v), f.jacobian(x), f.jacobian(u)


def random_qp(rng, n: int, m: int, psd: bool = False):
    """Feasible, bounded random QP; with ``psd`` H is rank deficient and a box keeps it bounded."""
    R = rng.normal(size=(n, n))
    H = R @ R.T + 0.1 * np.eye(n)
    if psd:
        Q = rng.normal(size=(n, n - 1))
        H = Q @ Q.T
    g = rng.normal(size=n) * 3
    G = rng.normal(size=(m, n))
    z0 = rng.normal(size=n)
    h = G @ z0 + rng.uniform(0.0, 1.0, m)
    if psd:
        G = np.vstack([G, np.eye(n), -np.eye(n)])
        h = np.concatenate([h, np.abs(z0) + 2.0, np.abs(z0) + 2.0])
    return H, g, G, h
