"""Planar geometry helpers shared by the world, guidance and vehicle modules.

Polygons are ``(n, 2)`` float arrays of vertices without a repeated closing
vertex. Interior tests treat the boundary as *outside*: a segment that only
grazes a vertex or runs along an edge does not intersect the interior.
"""
from __future__ import annotations

import math

import numpy as np
import shapely
from shapely.geometry import Polygon as _ShapelyPolygon

EPS = 1e-12


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def as_polygon(vertices) -> np.ndarray:
    poly = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if len(poly) > 1 and np.allclose(poly[0], poly[-1]):
        poly = poly[:-1]
    return poly


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def ensure_ccw(poly: np.ndarray) -> np.ndarray:
    return poly if signed_area(poly) >= 0.0 else poly[::-1].copy()


def is_simple(poly: np.ndarray) -> bool:
    if len(poly) < 3:
        return False
    return bool(_ShapelyPolygon(poly).is_valid) and abs(signed_area(poly)) > EPS


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def point_on_boundary(p, poly: np.ndarray, tol: float = 1e-10) -> bool:
    a = poly
    b = np.roll(poly, -1, axis=0)
    d = b - a
    L2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", np.asarray(p) - a, d) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    q = a + t[:, None] * d
    return bool(np.min(np.hypot(q[:, 0] - p[0], q[:, 1] - p[1])) <= tol)


def point_in_polygon(p, poly: np.ndarray, tol: float = 1e-10) -> bool:
    """Strict interior test (points on the boundary return False)."""
    if point_on_boundary(p, poly, tol):
        return False
    x, y = float(p[0]), float(p[1])
    xa, ya = poly[:, 0], poly[:, 1]
    xb, yb = np.roll(xa, -1), np.roll(ya, -1)
    straddle = (ya > y) != (yb > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = xa + (y - ya) * (xb - xa) / (yb - ya)
    return bool(np.count_nonzero(straddle & (x < xint)) % 2 == 1)


def segment_crosses_interior(p0, p1, poly: np.ndarray, tol: float = 1e-10) -> bool:
    """True iff the open segment (p0, p1) meets the interior of ``poly``."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    seg_len = math.hypot(d[0], d[1])
    if seg_len <= tol:
        return False
    lo = np.minimum(p0, p1)
    hi = np.maximum(p0, p1)
    if np.any(poly.min(axis=0) > hi + tol) or np.any(poly.max(axis=0) < lo - tol):
        return False

    a = poly
    b = np.roll(poly, -1, axis=0)
    e = b - a
    # orientation of polygon vertices w.r.t. the segment line, normalised to distances
    oa = _cross(d[0], d[1], a[:, 0] - p0[0], a[:, 1] - p0[1]) / seg_len
    ob = _cross(d[0], d[1], b[:, 0] - p0[0], b[:, 1] - p0[1]) / seg_len
    elen = np.hypot(e[:, 0], e[:, 1])
    elen = np.where(elen > 0, elen, 1.0)
    o0 = _cross(e[:, 0], e[:, 1], p0[0] - a[:, 0], p0[1] - a[:, 1]) / elen
    o1 = _cross(e[:, 0], e[:, 1], p1[0] - a[:, 0], p1[1] - a[:, 1]) / elen
    proper = (
        (((oa > tol) & (ob < -tol)) | ((oa < -tol) & (ob > tol)))
        & (((o0 > tol) & (o1 < -tol)) | ((o0 < -tol) & (o1 > tol)))
    )
    if np.any(proper):
        return True

    # boundary contact parameters along the segment; between consecutive
    # contacts the open piece lies entirely inside or entirely outside
    ts = [0.0, 1.0]
    on_line = np.abs(oa) <= tol
    if np.any(on_line):
        tv = ((a[on_line] - p0) @ d) / (seg_len * seg_len)
        ts.extend(float(t) for t in tv if tol / seg_len < t < 1.0 - tol / seg_len)
    ts.sort()
    for t0, t1 in zip(ts[:-1], ts[1:]):
        if t1 - t0 <= tol / seg_len:
            continue
        mid = p0 + 0.5 * (t0 + t1) * d
        if point_in_polygon(mid, poly, tol):
            return True
    return False


def line_polygon_intervals(origin, direction, poly: np.ndarray, tol: float = 1e-10) -> list[tuple[float, float]]:
    """Parameter intervals ``[t_in, t_out]`` where ``origin + t*direction`` lies in ``poly``.

    ``direction`` must be a unit vector. The line is unbounded in both directions.
    """
    o = np.asarray(origin, dtype=float)
    n = np.asarray(direction, dtype=float)
    a = poly
    b = np.roll(poly, -1, axis=0)
    sa = _cross(n[0], n[1], a[:, 0] - o[0], a[:, 1] - o[1])
    if np.all(sa > tol) or np.all(sa < -tol):
        return []  # polygon entirely on one side of the line
    sb = _cross(n[0], n[1], b[:, 0] - o[0], b[:, 1] - o[1])
    ts = []
    hit = (sa * sb <= 0.0) & ~((np.abs(sa) <= tol) & (np.abs(sb) <= tol))
    for i in np.flatnonzero(hit):
        denom = sa[i] - sb[i]
        w = sa[i] / denom if denom != 0.0 else 0.0
        q = a[i] + w * (b[i] - a[i])
        ts.append(float(np.dot(q - o, n)))
    # collinear edges contribute their endpoints
    for i in np.flatnonzero((np.abs(sa) <= tol) & (np.abs(sb) <= tol)):
        ts.append(float(np.dot(a[i] - o, n)))
        ts.append(float(np.dot(b[i] - o, n)))
    if len(ts) < 2:
        return []
    ts = sorted(set(ts))
    out: list[tuple[float, float]] = []
    for t0, t1 in zip(ts[:-1], ts[1:]):
        if t1 - t0 <= tol:
            continue
        if point_in_polygon(o + 0.5 * (t0 + t1) * n, poly, tol):
            if out and abs(out[-1][1] - t0) <= tol:
                out[-1] = (out[-1][0], t1)
            else:
                out.append((t0, t1))
    return out


def merge_intervals(intervals) -> list[tuple[float, float]]:
    merged: list[tuple[float, float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def free_gap(occupied: list[tuple[float, float]]) -> tuple[float, float]:
    """Free interval of a 1-D line around t = 0 given merged occupied intervals.

    If t = 0 is occupied the nearest gap is returned, ties going to the
    positive side.
    """
    edges = [-math.inf]
    for lo, hi in occupied:
        edges.extend((lo, hi))
    edges.append(math.inf)
    gaps = [(edges[i], edges[i + 1]) for i in range(0, len(edges), 2)]
    best = None
    best_key = None
    for lo, hi in gaps:
        if lo < 0.0 < hi:
            return lo, hi
        dist = lo if lo >= 0.0 else -hi
        key = (dist, 0 if lo >= 0.0 else 1)
        if best_key is None or key < best_key:
            best, best_key = (lo, hi), key
    return best


def inflate_polygon(poly: np.ndarray, distance: float) -> np.ndarray:
    """Outward offset with mitred corners (keeps the vertex count small)."""
    if distance <= 0.0:
        return ensure_ccw(poly.copy())
    grown = _ShapelyPolygon(poly).buffer(distance, join_style="mitre", mitre_limit=2.0)
    if grown.geom_type != "Polygon":
        grown = shapely.convex_hull(grown)
    ring = np.asarray(grown.exterior.coords)[:-1]
    return ensure_ccw(drop_collinear(ring))


def drop_collinear(poly: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    keep = []
    n = len(poly)
    for i in range(n):
        a, b, c = poly[i - 1], poly[i], poly[(i + 1) % n]
        if abs(_cross(b[0] - a[0], b[1] - a[1], c[0] - b[0], c[1] - b[1])) > tol:
            keep.append(b)
    return np.asarray(keep) if len(keep) >= 3 else poly


def segments_intersect(p0, p1, q0, q1) -> bool:
    """Closed segment intersection (touching counts)."""
    def orient(a, b, c):
        v = _cross(b[0] - a[0], b[1] - a[1], c[0] - a[0], c[1] - a[1])
        return 0 if abs(v) <= EPS else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return min(a[0], b[0]) - EPS <= c[0] <= max(a[0], b[0]) + EPS and \
            min(a[1], b[1]) - EPS <= c[1] <= max(a[1], b[1]) + EPS

    o1, o2 = orient(p0, p1, q0), orient(p0, p1, q1)
    o3, o4 = orient(q0, q1, p0), orient(q0, q1, p1)
    if o1 != o2 and o3 != o4:
        return True
    return (o1 == 0 and on_seg(p0, p1, q0)) or (o2 == 0 and on_seg(p0, p1, q1)) or \
        (o3 == 0 and on_seg(q0, q1, p0)) or (o4 == 0 and on_seg(q0, q1, p1))
