"""Reference path, Frenet projection, corridor bounds and tactical parameters."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import AlreadyRelaxed, CorridorInfeasible, InvalidPath
from .geometry import free_gap, line_polygon_intervals, merge_intervals, wrap_angle
from .world import PolygonalWorld


@dataclass(frozen=True)
class ReferencePath:
    vertices: np.ndarray
    cumulative_arc_length: np.ndarray
    segment_headings: np.ndarray

    @property
    def length(self) -> float:
        return float(self.cumulative_arc_length[-1])

    def segment_index(self, s: float) -> int:
        i = int(np.searchsorted(self.cumulative_arc_length, s, side="right")) - 1
        return min(max(i, 0), len(self.segment_headings) - 1)

    def heading_at(self, s: float) -> float:
        return float(self.segment_headings[self.segment_index(s)])

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        i = self.segment_index(s)
        a, b = self.vertices[i], self.vertices[i + 1]
        seg = self.cumulative_arc_length[i + 1] - self.cumulative_arc_length[i]
        return a + (s - self.cumulative_arc_length[i]) / seg * (b - a)

    def to_cartesian(self, s: float, e: float) -> np.ndarray:
        h = self.heading_at(s)
        return self.point_at(s) + e * np.array([-math.sin(h), math.cos(h)])


def build_reference(points) -> ReferencePath:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    keep = [pts[0]] if len(pts) else []
    for p in pts[1:]:
        if np.hypot(*(p - keep[-1])) > 1e-9:
            keep.append(p)
    if len(keep) < 2:
        raise InvalidPath("reference needs at least two distinct points")
    verts = np.asarray(keep)
    d = np.diff(verts, axis=0)
    seg = np.hypot(d[:, 0], d[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    heads = np.arctan2(d[:, 1], d[:, 0])
    for arr in (verts, cum, heads):
        arr.setflags(write=False)
    return ReferencePath(verts, cum, heads)


@dataclass(frozen=True)
class FrenetSample:
    s: float
    e: float
    heading_ref: float


def project_to_frenet(path: ReferencePath, p) -> FrenetSample:
    p = np.asarray(p, dtype=float)
    a = path.vertices[:-1]
    d = np.diff(path.vertices, axis=0)
    L2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", p - a, d) / L2, 0.0, 1.0)
    q = a + t[:, None] * d
    dist = np.hypot(q[:, 0] - p[0], q[:, 1] - p[1])
    i = int(np.argmin(dist))  # first minimum: ties go to the earlier segment
    off = p - q[i]
    cross = d[i, 0] * off[1] - d[i, 1] * off[0]
    e = math.copysign(float(dist[i]), cross) if dist[i] > 0 else 0.0
    s = float(path.cumulative_arc_length[i] + t[i] * math.sqrt(L2[i]))
    return FrenetSample(s, e, float(path.segment_headings[i]))


class RelaxationLevel(str, Enum):
    NORMAL = "Normal"
    EMERGENCY = "Emergency"


@dataclass(frozen=True)
class Corridor:
    """Per-step lateral bounds for the CoG (e), front (eF) and rear (eR) stations.

    ``lower``/``upper`` have shape ``(K, 3)`` with columns (e, eF, eR). The
    physical (obstacle-derived, margin applied) and legal (defaults clipped by
    legal lines) components are kept so relaxation can lift only the legal part.
    ``hard`` marks steps whose spatial rows must not be softened.
    """

    s: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    phys_lower: np.ndarray
    phys_upper: np.ndarray
    legal_lower: np.ndarray
    legal_upper: np.ndarray
    level: RelaxationLevel = RelaxationLevel.NORMAL
    hard: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.hard is None:
            object.__setattr__(self, "hard", np.zeros(len(self.s), dtype=bool))

    def __len__(self) -> int:
        return len(self.s)

    e_min = property(lambda self: self.lower[:, 0])
    e_max = property(lambda self: self.upper[:, 0])
    ef_min = property(lambda self: self.lower[:, 1])
    ef_max = property(lambda self: self.upper[:, 1])
    er_min = property(lambda self: self.lower[:, 2])
    er_max = property(lambda self: self.upper[:, 2])

    @property
    def legal_binding(self) -> tuple[np.ndarray, np.ndarray]:
        """Masks where the legal (not the physical) limit is the active bound."""
        return self.legal_lower > self.phys_lower, self.legal_upper < self.phys_upper

    def collapsed_steps(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.lower >= self.upper, axis=1))

    def with_hard_collapse(self, step: int) -> "Corridor":
        """Copy with an empty hard band at ``step`` (forced infeasibility)."""
        lower, upper, hard = self.lower.copy(), self.upper.copy(), self.hard.copy()
        mid = 0.5 * (np.clip(lower[step, 0], -1e3, 1e3) + np.clip(upper[step, 0], -1e3, 1e3))
        lower[step, 0], upper[step, 0] = mid + 0.5, mid - 0.5
        hard[step] = True
        return replace(self, lower=lower, upper=upper, hard=hard)


def _legal_crossings(origin, normal, lines) -> tuple[float, float]:
    up, down = math.inf, -math.inf
    for line in lines:
        a, b = line[:-1], line[1:]
        sa = normal[0] * (a[:, 1] - origin[1]) - normal[1] * (a[:, 0] - origin[0])
        sb = normal[0] * (b[:, 1] - origin[1]) - normal[1] * (b[:, 0] - origin[0])
        for i in np.flatnonzero(sa * sb <= 0.0):
            denom = sa[i] - sb[i]
            w = sa[i] / denom if denom != 0.0 else 0.0
            q = a[i] + w * (b[i] - a[i])
            t = float(np.dot(q - origin, normal))
            if t > 0.0:
                up = min(up, t)
            elif t < 0.0:
                down = max(down, t)
    return down, up


def lateral_bounds(path: ReferencePath, world: PolygonalWorld, s: float) -> tuple[float, float, float, float]:
    """Raw (obstacle gap, legal crossing) extents along the normal at ``s``."""
    s = min(max(s, 0.0), path.length)
    o = path.point_at(s)
    h = path.heading_at(s)
    n = np.array([-math.sin(h), math.cos(h)])
    occupied = []
    for poly in world.obstacles:
        occupied.extend(line_polygon_intervals(o, n, poly))
    lo, hi = free_gap(merge_intervals(occupied))
    legal_lo, legal_hi = _legal_crossings(o, n, world.legal_lines)
    return lo, hi, legal_lo, legal_hi


def build_corridor(path: ReferencePath, world: PolygonalWorld, e_default_min: float, e_default_max: float,
                   samples, l_f: float, l_r: float, margin: float = 0.1, legal_margin: float = 0.0,
                   strict: bool = True) -> Corridor:
    """Superimpose default deviation limits with orthogonal obstacle distances.

    With ``strict=False`` a collapsed step is returned with ``hard`` set
    instead of raising, so the optimizer certifies the infeasibility.
    """
    samples = np.asarray(samples, dtype=float)
    K = len(samples)
    phys_lo = np.empty((K, 3))
    phys_hi = np.empty((K, 3))
    leg_lo = np.empty((K, 3))
    leg_hi = np.empty((K, 3))
    for k, sk in enumerate(samples):
        for j, station in enumerate((sk, sk + l_f, sk - l_r)):
            lo, hi, llo, lhi = lateral_bounds(path, world, station)
            phys_lo[k, j] = lo + margin
            phys_hi[k, j] = hi - margin
            leg_lo[k, j] = max(e_default_min, llo + legal_margin)
            leg_hi[k, j] = min(e_default_max, lhi - legal_margin)
    lower = np.maximum(phys_lo, leg_lo)
    upper = np.minimum(phys_hi, leg_hi)
    corridor = Corridor(samples.copy(), lower, upper, phys_lo, phys_hi, leg_lo, leg_hi)
    bad = corridor.collapsed_steps()
    if len(bad):
        if strict:
            raise CorridorInfeasible(int(bad[0]))
        hard = np.zeros(K, dtype=bool)
        hard[bad] = True
        corridor = replace(corridor, hard=hard)
    return corridor


def relax_corridor(c: Corridor, legal_bounds) -> Corridor:
    """Widen legally clamped bounds to ``legal_bounds = (lower, upper)``.

    Each side may be a scalar, a per-step array or a ``(K, 3)`` array.
    Obstacle-derived bounds never move.
    """
    if c.level is RelaxationLevel.EMERGENCY:
        raise AlreadyRelaxed("corridor is already at emergency level")
    K = len(c)
    rel_lo = np.broadcast_to(np.asarray(legal_bounds[0], float).reshape(-1, 1) if np.ndim(legal_bounds[0]) == 1
                             else np.asarray(legal_bounds[0], float), (K, 3))
    rel_hi = np.broadcast_to(np.asarray(legal_bounds[1], float).reshape(-1, 1) if np.ndim(legal_bounds[1]) == 1
                             else np.asarray(legal_bounds[1], float), (K, 3))
    leg_lo = np.minimum(c.legal_lower, rel_lo)
    leg_hi = np.maximum(c.legal_upper, rel_hi)
    lower = np.minimum(c.lower, np.maximum(c.phys_lower, leg_lo))
    upper = np.maximum(c.upper, np.minimum(c.phys_upper, leg_hi))
    hard = c.hard & np.any(lower >= upper, axis=1)
    return replace(c, lower=lower, upper=upper, legal_lower=leg_lo, legal_upper=leg_hi,
                   level=RelaxationLevel.EMERGENCY, hard=hard)


def reference_disturbance(path: ReferencePath, samples) -> np.ndarray:
    """Heading change of the reference between consecutive samples (first entry 0)."""
    heads = np.array([path.heading_at(s) for s in samples])
    out = np.zeros(len(heads))
    for k in range(1, len(heads)):
        out[k] = wrap_angle(heads[k] - heads[k - 1])
    return out


def write_corridor_csv(c: Corridor, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "s", "eMin", "eMax", "eFMin", "eFMax", "eRMin", "eRMax", "level"])
        for k in range(len(c)):
            row = [c.s[k], c.e_min[k], c.e_max[k], c.ef_min[k], c.ef_max[k], c.er_min[k], c.er_max[k]]
            w.writerow([k] + [format(float(v), ".17g") for v in row] + [c.level.value])


class ComfortProfile(str, Enum):
    PASSENGER = "Passenger"
    EMPTY = "Empty"


class Actuator(str, Enum):
    FRONT_STEER = "FrontSteer"
    REAR_STEER = "RearSteer"


class ReportSource(str, Enum):
    GUIDANCE = "Guidance"
    STABILIZATION = "Stabilization"


@dataclass(frozen=True)
class DegradationReport:
    affected_actuator: Actuator
    angle_scale: float = 1.0
    rate_scale: float = 1.0
    source: ReportSource = ReportSource.GUIDANCE

    def __post_init__(self):
        object.__setattr__(self, "affected_actuator", Actuator(self.affected_actuator))
        object.__setattr__(self, "source", ReportSource(self.source))
        if not (0.0 <= self.angle_scale <= 1.0 and 0.0 <= self.rate_scale <= 1.0):
            raise ValueError("degradation scales must lie in [0, 1]")


_BOUND_PAIRS = (("beta_min", "beta_max"), ("yaw_rate_min", "yaw_rate_max"),
                ("delta_f_min", "delta_f_max"), ("delta_r_min", "delta_r_max"),
                ("rate_f_min", "rate_f_max"), ("rate_r_min", "rate_r_max"))
_WEIGHTS = ("w_beta", "w_yaw_rate", "w_dpsi", "w_e", "w_delta_f", "w_delta_r", "w_rate_f", "w_rate_r")


@dataclass(frozen=True)
class TacticalParameters:
    """Weights and bounds handed from guidance to the optimizer.

    Bounds are scalars (held over the horizon) or per-step arrays. Angles in
    radians, rates in rad/s.
    """

    w_beta: float = 1.0
    w_yaw_rate: float = 0.5
    w_dpsi: float = 2.0
    w_e: float = 3.0
    w_delta_f: float = 0.5
    w_delta_r: float = 0.5
    w_rate_f: float = 2.0
    w_rate_r: float = 2.0
    beta_min: float = -0.35
    beta_max: float = 0.35
    yaw_rate_min: float = -1.5
    yaw_rate_max: float = 1.5
    delta_f_min: float = -0.5
    delta_f_max: float = 0.5
    delta_r_min: float = -0.5
    delta_r_max: float = 0.5
    rate_f_min: float = -1.0
    rate_f_max: float = 1.0
    rate_r_min: float = -1.0
    rate_r_max: float = 1.0
    comfort_profile: ComfortProfile = ComfortProfile.EMPTY
    comfort_factor: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "comfort_profile", ComfortProfile(self.comfort_profile))
        for name in _WEIGHTS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for lo, hi in _BOUND_PAIRS:
            if np.any(np.asarray(getattr(self, lo)) > np.asarray(getattr(self, hi))):
                raise ValueError(f"{lo} exceeds {hi}")
        if self.comfort_factor <= 1.0:
            raise ValueError("comfort_factor must exceed 1")

    def bound(self, name: str, p: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (p,))


def _effective_reports(degradations) -> dict[Actuator, DegradationReport]:
    chosen: dict[Actuator, DegradationReport] = {}
    for rep in degradations:
        cur = chosen.get(rep.affected_actuator)
        if cur is None:
            chosen[rep.affected_actuator] = rep
            continue
        if cur.source != rep.source:
            if rep.source is ReportSource.STABILIZATION:
                chosen[rep.affected_actuator] = rep
            continue
        # same source twice: keep the more restrictive scales
        chosen[rep.affected_actuator] = replace(cur, angle_scale=min(cur.angle_scale, rep.angle_scale),
                                                rate_scale=min(cur.rate_scale, rep.rate_scale))
    return chosen


def assemble_tactical(profile, degradations, base: TacticalParameters) -> TacticalParameters:
    profile = ComfortProfile(profile)
    changes: dict = {"comfort_profile": profile}
    for act, rep in _effective_reports(degradations).items():
        ang, rate = ("delta_f", "rate_f") if act is Actuator.FRONT_STEER else ("delta_r", "rate_r")
        for name, scale in ((ang, rep.angle_scale), (rate, rep.rate_scale)):
            for side in ("_min", "_max"):
                changes[name + side] = np.asarray(getattr(base, name + side)) * scale
                if np.ndim(changes[name + side]) == 0:
                    changes[name + side] = float(changes[name + side])
    if profile is ComfortProfile.PASSENGER:
        f = base.comfort_factor
        changes.update(w_yaw_rate=base.w_yaw_rate * f, w_rate_f=base.w_rate_f * f, w_rate_r=base.w_rate_r * f)
    return replace(base, **changes)
