"""Single-track LPV prediction model, discretization and a double-track plant."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .geometry import point_in_polygon, point_on_boundary
from .world import PolygonalWorld

log = logging.getLogger(__name__)

GRAVITY = 9.81
V_FLOOR = 0.5  # the single-track model is singular at standstill


@dataclass(frozen=True)
class VehicleParams:
    m: float
    jz: float
    l_f: float
    l_r: float
    c_alpha_f: float
    c_alpha_r: float
    track_width: float
    half_width: float
    overhang_f: float = 0.0
    overhang_r: float = 0.0
    wheel_radius: float = 0.3
    mu: float = 1.0
    steer_tau: float = 0.05
    steer_rate_max: float = 2.0
    steer_max: float = 0.6

    def __post_init__(self):
        for name in ("m", "jz", "l_f", "l_r", "c_alpha_f", "c_alpha_r", "track_width", "half_width",
                     "wheel_radius", "mu", "steer_tau", "steer_rate_max", "steer_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r


# artifact defaults, not measured data
PRESETS = {
    "MAX": VehicleParams(m=25.0, jz=2.0, l_f=0.30, l_r=0.32, c_alpha_f=1000.0, c_alpha_r=1000.0,
                         track_width=0.38, half_width=0.22, overhang_f=0.13, overhang_r=0.13,
                         wheel_radius=0.08, steer_rate_max=2.0, steer_max=0.6),
    "MOBILE": VehicleParams(m=1900.0, jz=3000.0, l_f=1.35, l_r=1.35, c_alpha_f=90000.0, c_alpha_r=90000.0,
                            track_width=1.6, half_width=0.95, overhang_f=0.75, overhang_r=0.75,
                            wheel_radius=0.33, steer_rate_max=1.0, steer_max=0.6),
}


class LpvMatrices(NamedTuple):
    A: np.ndarray
    B: np.ndarray
    v: float
    clamped: bool


def lpv_matrices(p: VehicleParams, v: float, v_floor: float = V_FLOOR) -> LpvMatrices:
    """Continuous single-track matrices for x = [beta, yaw_rate, dpsi, e], u = [df, dr, yaw_rate_ref].

    The third input is the reference yaw rate; over one sample it integrates
    to the heading change of the reference.
    """
    clamped = v < v_floor
    if clamped:
        log.debug("speed %.3f below floor, clamped to %.3f", v, v_floor)
        v = v_floor
    m, jz, lf, lr, cf, cr = p.m, p.jz, p.l_f, p.l_r, p.c_alpha_f, p.c_alpha_r
    A = np.array([
        [-(cf + cr) / (m * v), (cr * lr - cf * lf) / (m * v * v) - 1.0, 0.0, 0.0],
        [-(cf * lf - cr * lr) / jz, -(cf * lf * lf + cr * lr * lr) / (jz * v), 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [v, 0.0, v, 0.0],
    ])
    B = np.array([
        [cf / (m * v), cr / (m * v), 0.0],
        [cf * lf / jz, -cr * lr / jz, 0.0],
        [0.0, 0.0, -1.0],
        [0.0, 0.0, 0.0],
    ])
    return LpvMatrices(A, B, float(v), bool(clamped))


def output_matrix(p: VehicleParams) -> np.ndarray:
    """Outputs (beta, yaw_rate, dpsi, e, e_front, e_rear) with linearised contour offsets."""
    C = np.zeros((6, 4))
    C[:4, :4] = np.eye(4)
    C[4] = [0.0, 0.0, p.l_f, 1.0]
    C[5] = [0.0, 0.0, -p.l_r, 1.0]
    return C


def expm_series(M: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """Matrix exponential by scaling and squaring around a truncated Taylor series."""
    norm = np.linalg.norm(M, 1)
    squarings = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    X = M / (2.0 ** squarings)
    n = M.shape[0]
    total = np.eye(n)
    term = np.eye(n)
    for k in range(1, 60):
        term = term @ X / k
        total = total + term
        if np.linalg.norm(term, 1) < tol:
            break
    for _ in range(squarings):
        total = total @ total
    return total


def discretize(A: np.ndarray, B: np.ndarray, Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order hold via the exponential of ``[[A, B], [0, 0]] * Ts``."""
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = expm_series(M * Ts)
    return E[:n, :n].copy(), E[:n, n:].copy()


@dataclass(frozen=True)
class PlantState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    yaw_rate: float = 0.0
    wheel_angles: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    @property
    def side_slip(self) -> float:
        return math.atan2(self.vy, self.vx) if self.speed > 1e-9 else 0.0


_V_EPS = 0.1


def _wheels(p: VehicleParams):
    a, b, w = p.l_f, p.l_r, 0.5 * p.track_width
    fz_f = p.m * GRAVITY * b / (a + b) / 2.0
    fz_r = p.m * GRAVITY * a / (a + b) / 2.0
    cf, cr = p.c_alpha_f / 2.0, p.c_alpha_r / 2.0
    # (x, y, front?, cornering stiffness, normal load)
    return ((a, w, True, cf, fz_f), (a, -w, True, cf, fz_f), (-b, w, False, cr, fz_r), (-b, -w, False, cr, fz_r))


def _rhs(X, p: VehicleParams, wheels, torques, cmd_f, cmd_r, rate_f, rate_r):
    _, _, psi, vx, vy, r, df, dr = X
    fx_tot = fy_tot = mz = 0.0
    for (xi, yi, front, c, fz), torque in zip(wheels, torques):
        d = df if front else dr
        vxw = vx - r * yi
        vyw = vy + r * xi
        cd, sd = math.cos(d), math.sin(d)
        vl = vxw * cd + vyw * sd
        vt = -vxw * sd + vyw * cd
        alpha = -math.atan2(vt, max(vl, _V_EPS))
        cap = p.mu * fz
        fy = min(max(c * alpha, -cap), cap)
        fx = min(max(torque / p.wheel_radius, -cap), cap)
        FX = fx * cd - fy * sd
        FY = fx * sd + fy * cd
        fx_tot += FX
        fy_tot += FY
        mz += xi * FY - yi * FX
    cps, sps = math.cos(psi), math.sin(psi)
    ddf = min(max((cmd_f - df) / p.steer_tau, -rate_f), rate_f)
    ddr = min(max((cmd_r - dr) / p.steer_tau, -rate_r), rate_r)
    return (
        vx * cps - vy * sps,
        vx * sps + vy * cps,
        r,
        fx_tot / p.m + r * vy,
        fy_tot / p.m - r * vx,
        mz / p.jz,
        ddf,
        ddr,
    )


def plant_step(state: PlantState, cmd, dt: float, p: VehicleParams, rate_limits=None) -> PlantState:
    """Advance the double-track plant by ``dt`` with classical RK4.

    ``cmd`` is ``(delta_f, delta_r, wheel_torques)``; torques are ordered
    FL, FR, RL, RR. Steering follows a rate-limited first-order lag.
    """
    if not 0.0 < dt <= 2e-3 + 1e-15:
        raise ValueError("plant dt must lie in (0, 2 ms]")
    cmd_f, cmd_r, torques = cmd
    cmd_f = min(max(cmd_f, -p.steer_max), p.steer_max)
    cmd_r = min(max(cmd_r, -p.steer_max), p.steer_max)
    torques = tuple(float(t) for t in torques) if torques is not None else (0.0,) * 4
    if rate_limits is None:
        rate_f = rate_r = p.steer_rate_max
    else:
        rate_f = min(p.steer_rate_max, rate_limits[0])
        rate_r = min(p.steer_rate_max, rate_limits[1])
    wheels = _wheels(p)
    X0 = (state.x, state.y, state.psi, state.vx, state.vy, state.yaw_rate,
          state.wheel_angles[0], state.wheel_angles[2])

    def f(X):
        return _rhs(X, p, wheels, torques, cmd_f, cmd_r, rate_f, rate_r)

    k1 = f(X0)
    k2 = f(tuple(a + 0.5 * dt * b for a, b in zip(X0, k1)))
    k3 = f(tuple(a + 0.5 * dt * b for a, b in zip(X0, k2)))
    k4 = f(tuple(a + dt * b for a, b in zip(X0, k3)))
    X = tuple(a + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(X0, k1, k2, k3, k4))
    df = min(max(X[6], -p.steer_max), p.steer_max)
    dr = min(max(X[7], -p.steer_max), p.steer_max)
    return PlantState(X[0], X[1], X[2], X[3], X[4], X[5], (df, df, dr, dr))


def vehicle_rectangle(x: float, y: float, psi: float, p: VehicleParams) -> np.ndarray:
    front = p.l_f + p.overhang_f
    rear = -(p.l_r + p.overhang_r)
    w = p.half_width
    local = np.array([[rear, -w], [front, -w], [front, w], [rear, w]])
    c, s = math.cos(psi), math.sin(psi)
    return local @ np.array([[c, s], [-s, c]]) + np.array([x, y])


def _edges_cross(P: np.ndarray, Q: np.ndarray) -> bool:
    """Any closed-segment intersection between the edge sets of two polygons."""
    a = P[:, None, :]
    b = np.roll(P, -1, axis=0)[:, None, :]
    c = Q[None, :, :]
    d = np.roll(Q, -1, axis=0)[None, :, :]

    def orient(u, v, w):
        return (v[..., 0] - u[..., 0]) * (w[..., 1] - u[..., 1]) - (v[..., 1] - u[..., 1]) * (w[..., 0] - u[..., 0])

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    collinear = (o1 == 0) & (o2 == 0)
    boxes = np.all((np.maximum(np.minimum(a, b), np.minimum(c, d))
                    <= np.minimum(np.maximum(a, b), np.maximum(c, d))), axis=-1)
    general = (o1 * o2 <= 0) & (o3 * o4 <= 0) & ~collinear
    return bool(np.any(general | (collinear & boxes)))


def contour_collides(state: PlantState, p: VehicleParams, world: PolygonalWorld) -> bool:
    """True iff the vehicle rectangle touches any (un-inflated) obstacle."""
    rect = vehicle_rectangle(state.x, state.y, state.psi, p)
    rmin, rmax = rect.min(axis=0), rect.max(axis=0)
    for poly in world.obstacles:
        if np.any(poly.min(axis=0) > rmax) or np.any(poly.max(axis=0) < rmin):
            continue
        if _edges_cross(rect, poly):
            return True
        if point_in_polygon(rect[0], poly) or point_on_boundary(rect[0], poly):
            return True
        if point_in_polygon(poly[0], rect):
            return True
    return False


def with_stiffness(p: VehicleParams, scale: float) -> VehicleParams:
    return replace(p, c_alpha_f=p.c_alpha_f * scale, c_alpha_r=p.c_alpha_r * scale)
