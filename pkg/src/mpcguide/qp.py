"""Dense convex QP solver: primal-dual interior point with Mehrotra steps.

Solves ``min 0.5 z'Hz + g'z  s.t.  Gz <= h`` for PSD ``H``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lstsq


class SolveStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"


class KktResiduals(NamedTuple):
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self)


@dataclass(frozen=True)
class SolveReport:
    status: SolveStatus
    kkt_residuals: KktResiduals
    iterations: int
    solve_time: float
    objective: float = float("nan")
    multipliers: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


def kkt_residuals(H, g, G, h, z, lam) -> KktResiduals:
    stat = H @ z + g
    if G.shape[0]:
        stat = stat + G.T @ lam
        slack = h - G @ z
        primal = float(np.max(np.maximum(-slack, 0.0)))
        dual = float(np.max(np.maximum(-lam, 0.0)))
        comp = float(np.max(np.abs(lam * slack)))
    else:
        primal = dual = comp = 0.0
    return KktResiduals(float(np.max(np.abs(stat))) if len(stat) else 0.0, primal, dual, comp)


def _factor(K: np.ndarray):
    try:
        return cho_factor(K, lower=True, check_finite=False)
    except LinAlgError:
        reg = 1e-10 * (1.0 + float(np.max(np.abs(np.diag(K)))))
        return cho_factor(K + reg * np.eye(len(K)), lower=True, check_finite=False)


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    """Largest alpha keeping ``v + alpha*dv >= 0`` (unbounded -> inf)."""
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _polish(H, g, G, h, z, lam, s, tol):
    """Re-solve the equality KKT system on the detected active set."""
    active = lam > s
    Ga = G[active]
    n = len(z)
    na = int(active.sum())
    K = np.zeros((n + na, n + na))
    K[:n, :n] = H
    K[:n, n:] = Ga.T
    K[n:, :n] = Ga
    rhs = np.concatenate([-g, h[active]])
    sol = lstsq(K, rhs, check_finite=False)[0]
    zp = sol[:n]
    lp = np.zeros_like(lam)
    lp[active] = sol[n:]
    if np.any(lp < -tol) or np.any(G @ zp - h > tol):
        return None
    return zp, np.maximum(lp, 0.0)


def solve_qp(H, g, G=None, h=None, kkt_tolerance: float = 1e-6, max_iterations: int = 100,
             infeasibility_tolerance: float = 1e-9) -> tuple[np.ndarray, SolveReport]:
    t_start = time.perf_counter()
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = len(g)
    G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float).reshape(-1, n)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float)
    m = G.shape[0]

    def finish(status, z, lam, it):
        res = kkt_residuals(H, g, G, h, z, lam)
        obj = float(0.5 * z @ H @ z + g @ z)
        return z, SolveReport(status, res, it, time.perf_counter() - t_start, obj, lam)

    if m == 0:
        z = -cho_solve(_factor(H), g, check_finite=False)
        return finish(SolveStatus.OPTIMAL, z, np.zeros(0), 0)

    scale = 1.0 + max(float(np.max(np.abs(g))), float(np.max(np.abs(h))))
    eps = min(1e-9 * scale, 0.01 * kkt_tolerance)

    # start: least-squares point, slacks/multipliers pushed into the interior
    z = cho_solve(_factor(H + G.T @ G), -g + G.T @ h, check_finite=False)
    r = h - G @ z
    s = np.maximum(r, 1.0)
    lam = np.ones(m)
    best = None

    for it in range(1, max_iterations + 1):
        rd = H @ z + g + G.T @ lam
        rp = G @ z + s - h
        mu = float(s @ lam) / m
        if np.max(np.abs(rd)) <= eps and np.max(np.abs(rp)) <= eps and np.max(s * lam) <= eps:
            pol = _polish(H, g, G, h, z, lam, s, eps)
            if pol is not None and kkt_residuals(H, g, G, h, *pol).max() <= kkt_residuals(H, g, G, h, z, lam).max():
                z, lam = pol
            if kkt_residuals(H, g, G, h, z, lam).max() <= kkt_tolerance:
                return finish(SolveStatus.OPTIMAL, z, lam, it)

        # Farkas certificate of primal infeasibility: lam >= 0, G'lam ~ 0, h'lam < 0
        htl = float(h @ lam)
        if htl < 0.0 and float(np.max(np.abs(G.T @ lam))) <= infeasibility_tolerance * (-htl):
            return finish(SolveStatus.INFEASIBLE, z, lam, it)

        w = lam / s
        fac = _factor(H + G.T @ (w[:, None] * G))

        def direction(rc):
            dz = cho_solve(fac, -rd - G.T @ (w * rp - rc / s), check_finite=False)
            dlam = w * (rp + G @ dz) - rc / s
            return dz, -rp - G @ dz, dlam

        # predictor (affine scaling), then Mehrotra corrector
        dz, ds, dlam = direction(s * lam)
        a_aff = min(1.0, _max_step(s, ds), _max_step(lam, dlam))
        mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dlam)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dz, ds, dlam = direction(s * lam + ds * dlam - sigma * mu)
        alpha = min(1.0, 0.99 * min(_max_step(s, ds), _max_step(lam, dlam)))
        z = z + alpha * dz
        s = np.maximum(s + alpha * ds, 1e-300)
        lam = np.maximum(lam + alpha * dlam, 1e-300)

        score = float(np.max(np.abs(G @ z + s - h))) + mu
        if best is None or score < best[0]:
            best = (score, z.copy(), lam.copy())

    _, z, lam = best
    return finish(SolveStatus.ITERATION_LIMIT, z, lam, max_iterations)
