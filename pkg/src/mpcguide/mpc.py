"""Receding-horizon lateral planner: condensed QP, fallback buffer, relaxation requests."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoFallbackAvailable
from .guidance import Corridor, RelaxationLevel, TacticalParameters
from .qp import SolveReport, SolveStatus, solve_qp
from .vehicle import V_FLOOR, VehicleParams, discretize, lpv_matrices, output_matrix

NX, NU, NY = 4, 2, 6
# output rows: beta, yaw_rate, dpsi, e, e_front, e_rear
SPATIAL_OUTPUTS = (3, 4, 5)


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 20
    Ts: float = 0.1
    tactical: TacticalParameters = field(default_factory=TacticalParameters)
    slack_weight: float = 1e4
    max_solve_iterations: int = 100
    kkt_tolerance: float = 1e-6
    v_floor: float = V_FLOOR

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        if self.Ts <= 0 or self.kkt_tolerance <= 0 or self.slack_weight < 0:
            raise ValueError("invalid MPC configuration")


@dataclass(frozen=True)
class Prediction:
    """Stacked operators: ``Y = phi @ x0 + gamma @ U + gamma_d @ D``.

    ``Y`` stacks the six outputs for steps 1..p; the ``*_x`` operators give the
    stacked states x_1..x_p in the same way.
    """

    phi: np.ndarray
    gamma: np.ndarray
    gamma_d: np.ndarray
    phi_x: np.ndarray
    gamma_x: np.ndarray
    gamma_dx: np.ndarray
    x0: np.ndarray
    horizon: int

    def outputs(self, U, D=None) -> np.ndarray:
        D = np.zeros(self.horizon) if D is None else D
        return self.phi @ self.x0 + self.gamma @ U + self.gamma_d @ D

    def states(self, U, D=None) -> np.ndarray:
        D = np.zeros(self.horizon) if D is None else D
        return self.phi_x @ self.x0 + self.gamma_x @ U + self.gamma_dx @ D


def build_prediction(Ad, Bd, C, x0, p: int) -> Prediction:
    Bu, Bw = Bd[:, :NU], Bd[:, NU:NU + 1]
    powers = [np.eye(NX)]
    for _ in range(p):
        powers.append(Ad @ powers[-1])
    phi_x = np.vstack(powers[1:])
    gamma_x = np.zeros((NX * p, NU * p))
    gamma_dx = np.zeros((NX * p, p))
    for i in range(p):
        for j in range(i + 1):
            blk = powers[i - j]
            gamma_x[NX * i:NX * (i + 1), NU * j:NU * (j + 1)] = blk @ Bu
            gamma_dx[NX * i:NX * (i + 1), j:j + 1] = blk @ Bw
    Cbig = np.kron(np.eye(p), C)
    x0 = np.asarray(x0, dtype=float)
    return Prediction(Cbig @ phi_x, Cbig @ gamma_x, Cbig @ gamma_dx, phi_x, gamma_x, gamma_dx, x0, p)


def _weights(t: TacticalParameters):
    wy = np.array([t.w_beta, t.w_yaw_rate, t.w_dpsi, t.w_e, 0.0, 0.0])
    wu = np.array([t.w_delta_f, t.w_delta_r])
    wdu = np.array([t.w_rate_f, t.w_rate_r])
    return wy, wu, wdu


def _difference_operator(p: int) -> np.ndarray:
    """Stacked first differences u_i - u_{i-1} for i = 0..p-1 (u_{-1} enters the offset)."""
    Dm = np.eye(NU * p)
    Dm[NU:, :-NU] -= np.eye(NU * (p - 1))
    return Dm


def build_cost(pred: Prediction, refs, tactical: TacticalParameters, u_prev, slack_weight: float,
               disturbance=None) -> tuple[np.ndarray, np.ndarray, float]:
    """Quadratic form of J = J_y + J_u + J_du (+ slack penalty).

    Returns ``(H, g, const)`` with ``J(z) = 0.5 z'Hz + g'z + const`` over
    ``z = [U, slack]``; the input target series is zero.
    """
    p = pred.horizon
    nU = NU * p
    refs = np.zeros((p, NY)) if refs is None else np.asarray(refs, dtype=float).reshape(p, NY)
    D = np.zeros(p) if disturbance is None else np.asarray(disturbance, dtype=float)
    wy, wu, wdu = _weights(tactical)
    qy = np.tile(wy ** 2, p)
    qu = np.tile(wu ** 2, p)
    qdu = np.tile(wdu ** 2, p)

    c = refs.ravel() - pred.phi @ pred.x0 - pred.gamma_d @ D  # tracking residual at U = 0
    Dm = _difference_operator(p)
    d0 = np.zeros(nU)
    d0[:NU] = np.asarray(u_prev, dtype=float)

    Hu = pred.gamma.T @ (qy[:, None] * pred.gamma) + np.diag(qu) + Dm.T @ (qdu[:, None] * Dm)
    gu = -pred.gamma.T @ (qy * c) - Dm.T @ (qdu * d0)
    const = float(c @ (qy * c) + d0 @ (qdu * d0))

    H = np.zeros((nU + p, nU + p))
    H[:nU, :nU] = 2.0 * Hu
    H[nU:, nU:] = 2.0 * slack_weight * np.eye(p)
    g = np.zeros(nU + p)
    g[:nU] = 2.0 * gu
    return H, g, const


def evaluate_cost(Y, U, slack, refs, tactical: TacticalParameters, u_prev, slack_weight: float) -> float:
    """Direct term-by-term sum of the tracking, input and input-change costs."""
    p = len(U) // NU
    Y = np.asarray(Y).reshape(p, NY)
    U = np.asarray(U).reshape(p, NU)
    refs = np.zeros((p, NY)) if refs is None else np.asarray(refs).reshape(p, NY)
    wy, wu, wdu = _weights(tactical)
    total = 0.0
    for i in range(p):
        prev = np.asarray(u_prev) if i == 0 else U[i - 1]
        for j in range(NY):
            total += (wy[j] * (refs[i, j] - Y[i, j])) ** 2
        for j in range(NU):
            total += (wu[j] * U[i, j]) ** 2
            total += (wdu[j] * (U[i, j] - prev[j])) ** 2
    return total + slack_weight * float(np.sum(np.asarray(slack) ** 2))


def _spatial_rows(corridor: Corridor, p: int):
    if len(corridor) >= p + 1:
        idx = np.arange(1, p + 1)
    elif len(corridor) == p:
        idx = np.arange(p)
    else:
        raise ValueError("corridor shorter than the horizon")
    return corridor.lower[idx], corridor.upper[idx], corridor.hard[idx]


def build_constraints(pred: Prediction, corridor: Corridor | None, tactical: TacticalParameters, u_prev,
                      Ts: float, disturbance=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inequalities ``G z <= h`` over ``z = [U, slack]`` and the soft-row mask.

    Output rows (beta, yaw rate, e, e_front, e_rear) share one slack per
    step unless the corridor marks the step hard; input and rate rows are hard.
    """
    p = pred.horizon
    nU = NU * p
    nz = nU + p
    D = np.zeros(p) if disturbance is None else np.asarray(disturbance, dtype=float)
    y_free = pred.phi @ pred.x0 + pred.gamma_d @ D

    if corridor is None:
        sp_lo = np.full((p, 3), -np.inf)
        sp_hi = np.full((p, 3), np.inf)
        sp_hard = np.zeros(p, dtype=bool)
    else:
        sp_lo, sp_hi, sp_hard = _spatial_rows(corridor, p)

    out_lo = np.full((p, NY), -np.inf)
    out_hi = np.full((p, NY), np.inf)
    out_lo[:, 0], out_hi[:, 0] = tactical.bound("beta_min", p), tactical.bound("beta_max", p)
    out_lo[:, 1], out_hi[:, 1] = tactical.bound("yaw_rate_min", p), tactical.bound("yaw_rate_max", p)
    out_lo[:, 3:6], out_hi[:, 3:6] = sp_lo, sp_hi

    rows, rhs, soft = [], [], []
    for i in range(p):
        for j in (0, 1, 3, 4, 5):
            r = i * NY + j
            hard = bool(sp_hard[i]) and j in SPATIAL_OUTPUTS
            for sign, bound in ((1.0, out_hi[i, j]), (-1.0, out_lo[i, j])):
                if not np.isfinite(bound):
                    continue
                row = np.zeros(nz)
                row[:nU] = sign * pred.gamma[r]
                if not hard:
                    row[nU + i] = -1.0
                rows.append(row)
                rhs.append(sign * bound - sign * y_free[r])
                soft.append(not hard)

    names = (("delta_f_min", "delta_f_max"), ("delta_r_min", "delta_r_max"))
    rate_names = (("rate_f_min", "rate_f_max"), ("rate_r_min", "rate_r_max"))
    u_prev = np.asarray(u_prev, dtype=float)
    for a in range(NU):
        lo, hi = tactical.bound(names[a][0], p), tactical.bound(names[a][1], p)
        rlo, rhi = tactical.bound(rate_names[a][0], p), tactical.bound(rate_names[a][1], p)
        for i in range(p):
            col = NU * i + a
            for sign, bound in ((1.0, hi[i]), (-1.0, lo[i])):
                if np.isfinite(bound):
                    row = np.zeros(nz)
                    row[col] = sign
                    rows.append(row)
                    rhs.append(sign * bound)
                    soft.append(False)
            for sign, bound in ((1.0, rhi[i]), (-1.0, rlo[i])):
                if not np.isfinite(bound):
                    continue
                row = np.zeros(nz)
                row[col] = sign / Ts
                offset = 0.0
                if i == 0:
                    offset = sign * u_prev[a] / Ts
                else:
                    row[col - NU] = -sign / Ts
                rows.append(row)
                rhs.append(sign * bound + offset)
                soft.append(False)

    for i in range(p):
        row = np.zeros(nz)
        row[nU + i] = -1.0
        rows.append(row)
        rhs.append(0.0)
        soft.append(False)
    return np.asarray(rows), np.asarray(rhs), np.asarray(soft, dtype=bool)


@dataclass(frozen=True)
class PlannedTrajectory:
    t0: float
    states: np.ndarray  # (p+1, 4): beta, yaw_rate, dpsi, e
    inputs: np.ndarray  # (p, 2): delta_f, delta_r
    feasible: bool
    objective: float
    valid_until: float
    Ts: float
    slack_max: float = 0.0
    emergency_stop: bool = False

    def __post_init__(self):
        if len(self.states) != len(self.inputs) + 1:
            raise ValueError("states must have one more entry than inputs")

    @property
    def first_input(self) -> np.ndarray | None:
        return self.inputs[0] if len(self.inputs) else None


def plan_step(x0, corridor: Corridor | None, tactical: TacticalParameters, refs, u_prev, v: float,
              cfg: MpcConfig, params: VehicleParams, disturbance=None,
              t0: float = 0.0) -> tuple[PlannedTrajectory, SolveReport]:
    """One receding-horizon solve at frozen speed ``v``.

    ``disturbance`` holds the per-step reference heading changes (p+1 samples,
    first entry unused, or p entries); it is applied as a known input.
    """
    p, Ts = cfg.horizon, cfg.Ts
    lpv = lpv_matrices(params, v, cfg.v_floor)
    Ad, Bd = discretize(lpv.A, lpv.B, Ts)
    C = output_matrix(params)
    x0 = np.asarray(x0, dtype=float)
    pred = build_prediction(Ad, Bd, C, x0, p)
    if disturbance is None:
        D = np.zeros(p)
    else:
        dist = np.asarray(disturbance, dtype=float)
        D = (dist[1:p + 1] if len(dist) >= p + 1 else dist[:p]) / Ts
    H, g, const = build_cost(pred, refs, tactical, u_prev, cfg.slack_weight, D)
    G, h, _ = build_constraints(pred, corridor, tactical, u_prev, Ts, D)
    z, report = solve_qp(H, g, G, h, cfg.kkt_tolerance, cfg.max_solve_iterations)
    U = z[:NU * p]
    X = pred.states(U, D).reshape(p, NX)
    states = np.vstack([x0, X])
    traj = PlannedTrajectory(
        t0=t0,
        states=states,
        inputs=U.reshape(p, NU),
        feasible=report.status is SolveStatus.OPTIMAL,
        objective=report.objective + const,
        valid_until=t0 + p * Ts,
        Ts=Ts,
        slack_max=float(np.max(z[NU * p:])) if p else 0.0,
    )
    return traj, report


def shift_trajectory(buffer: PlannedTrajectory, now: float) -> PlannedTrajectory:
    """Time-shifted tail of a stored plan, or an emergency stop past its validity."""
    i = int(round((now - buffer.t0) / buffer.Ts))
    p = len(buffer.inputs)
    if i >= p:
        # at validUntil the last input is still held; past it the plan has expired
        last = buffer.inputs[-1:].copy()
        return replace(buffer, t0=now, states=buffer.states[-1:].repeat(2, axis=0), inputs=last,
                       emergency_stop=i > p)
    return replace(buffer, t0=now, states=buffer.states[i:], inputs=buffer.inputs[i:])


def fallback_select(report: SolveReport, candidate: PlannedTrajectory, buffer: PlannedTrajectory | None,
                    now: float) -> tuple[PlannedTrajectory, PlannedTrajectory | None]:
    """Return ``(active, new_buffer)`` following the fallback protocol."""
    if report.status is SolveStatus.OPTIMAL:
        stored = replace(candidate, t0=now, valid_until=now + len(candidate.inputs) * candidate.Ts)
        return stored, stored
    if buffer is None or not buffer.feasible:
        raise NoFallbackAvailable("no feasible trajectory has been stored yet")
    return shift_trajectory(buffer, now), buffer


class FallbackBuffer:
    """Single-writer store of the last feasible plan."""

    def __init__(self):
        self.trajectory: PlannedTrajectory | None = None

    def select(self, report: SolveReport, candidate: PlannedTrajectory, now: float) -> PlannedTrajectory:
        active, self.trajectory = fallback_select(report, candidate, self.trajectory, now)
        return active


@dataclass(frozen=True)
class RelaxationRequest:
    time: float
    collapsed_steps: tuple[int, ...] = ()


def request_relaxation(report: SolveReport, corridor: Corridor, already_escalated: bool = False,
                       now: float = 0.0) -> RelaxationRequest | None:
    if report.status is not SolveStatus.INFEASIBLE:
        return None
    if corridor.level is not RelaxationLevel.NORMAL or already_escalated:
        return None
    return RelaxationRequest(now, tuple(int(k) for k in corridor.collapsed_steps()))


class RelaxationMonitor:
    """Emits at most one relaxation request per infeasibility episode."""

    def __init__(self):
        self.escalated = False

    def observe(self, report: SolveReport, corridor: Corridor, now: float = 0.0) -> RelaxationRequest | None:
        if report.status is SolveStatus.OPTIMAL:
            self.escalated = False
            return None
        req = request_relaxation(report, corridor, self.escalated, now)
        if req is not None:
            self.escalated = True
        return req
