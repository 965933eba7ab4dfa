import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcguide.errors import NoFallbackAvailable
from mpcguide.guidance import Corridor, RelaxationLevel, TacticalParameters, relax_corridor
from mpcguide.mpc import (
    NU,
    NX,
    NY,
    FallbackBuffer,
    MpcConfig,
    PlannedTrajectory,
    RelaxationMonitor,
    build_constraints,
    build_cost,
    build_prediction,
    evaluate_cost,
    fallback_select,
    plan_step,
    shift_trajectory,
)
from mpcguide.qp import KktResiduals, SolveReport, SolveStatus
from mpcguide.vehicle import PRESETS, discretize, lpv_matrices, output_matrix

MAX = PRESETS["MAX"]
CFG = MpcConfig(horizon=12, Ts=0.1)


def corridor(p, lo=-1.0, hi=1.0, hard=None, level=RelaxationLevel.NORMAL):
    K = p + 1
    lower = np.broadcast_to(np.asarray(lo, float).reshape(-1, 1) if np.ndim(lo) else lo, (K, 3)).astype(float)
    upper = np.broadcast_to(np.asarray(hi, float).reshape(-1, 1) if np.ndim(hi) else hi, (K, 3)).astype(float)
    far = np.full((K, 3), 10.0)
    hard = np.zeros(K, bool) if hard is None else np.asarray(hard, bool)
    return Corridor(np.arange(K) * 0.1, lower, upper, -far, far, lower.copy(), upper.copy(), level, hard)


def random_tactical(rng):
    names = ("w_beta", "w_yaw_rate", "w_dpsi", "w_e", "w_delta_f", "w_delta_r", "w_rate_f", "w_rate_r")
    return TacticalParameters(**{n: float(rng.uniform(0.0, 5.0)) for n in names})


def report(status):
    return SolveReport(status, KktResiduals(0, 0, 0, 0), 1, 0.0)


def linear_model(v, Ts=CFG.Ts):
    lpv = lpv_matrices(MAX, v)
    return discretize(lpv.A, lpv.B, Ts)


@given(seed=st.integers(0, 100_000))
def test_condensed_cost_equals_direct_sum(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 15))
    Ad, Bd = linear_model(float(rng.uniform(0.3, 6.0)))
    x0 = rng.normal(size=NX) * 0.2
    pred = build_prediction(Ad, Bd, output_matrix(MAX), x0, p)
    tac = random_tactical(rng)
    refs = rng.normal(size=(p, NY)) * 0.3
    u_prev = rng.normal(size=NU) * 0.1
    D = rng.normal(size=p) * 0.5
    U = rng.normal(size=NU * p) * 0.2
    slack = np.abs(rng.normal(size=p))
    H, g, const = build_cost(pred, refs, tac, u_prev, 100.0, D)
    z = np.concatenate([U, slack])
    condensed = 0.5 * z @ H @ z + g @ z + const
    direct = evaluate_cost(pred.outputs(U, D), U, slack, refs, tac, u_prev, 100.0)
    assert condensed == pytest.approx(direct, rel=1e-9, abs=1e-9)


@given(seed=st.integers(0, 100_000))
def test_prediction_matches_step_by_step_simulation(seed):
    rng = np.random.default_rng(seed)
    p = 8
    Ad, Bd = linear_model(float(rng.uniform(0.5, 4.0)))
    C = output_matrix(MAX)
    x0 = rng.normal(size=NX)
    U = rng.normal(size=(p, NU))
    D = rng.normal(size=p)
    pred = build_prediction(Ad, Bd, C, x0, p)
    x = x0
    for i in range(p):
        x = Ad @ x + Bd @ np.array([U[i, 0], U[i, 1], D[i]])
        np.testing.assert_allclose(pred.states(U.ravel(), D)[NX * i:NX * (i + 1)], x, atol=1e-10)
        np.testing.assert_allclose(pred.outputs(U.ravel(), D)[NY * i:NY * (i + 1)], C @ x, atol=1e-10)


def test_at_rest_on_reference_the_plan_is_zero():
    traj, rep = plan_step(np.zeros(NX), corridor(CFG.horizon), TacticalParameters(), None, np.zeros(2),
                          1.0, CFG, MAX)
    assert rep.optimal and traj.feasible
    np.testing.assert_allclose(traj.inputs, 0.0, atol=1e-7)
    assert traj.objective == pytest.approx(0.0, abs=1e-8)
    assert traj.valid_until == pytest.approx(CFG.horizon * CFG.Ts)


@settings(max_examples=40)
@given(seed=st.integers(0, 100_000))
def test_solution_respects_hard_rows_and_soft_rows_within_slack(seed):
    rng = np.random.default_rng(seed)
    p = CFG.horizon
    tac = TacticalParameters(delta_r_min=-0.2, delta_r_max=0.2, rate_f_min=-0.8, rate_f_max=0.8)
    x0 = np.array([0.0, 0.0, rng.uniform(-0.3, 0.3), rng.uniform(-0.4, 0.4)])
    u_prev = rng.uniform(-0.1, 0.1, NU)
    hard = rng.random(p + 1) < 0.3
    c = corridor(p, -0.6, 0.6, hard)
    traj, rep = plan_step(x0, c, tac, None, u_prev, 1.0, CFG, MAX)
    if not rep.optimal:
        assert rep.status is SolveStatus.INFEASIBLE
        return
    U = traj.inputs
    tol = 1e-6
    assert np.all(np.abs(U[:, 0]) <= 0.5 + tol) and np.all(np.abs(U[:, 1]) <= 0.2 + tol)
    rates = np.diff(np.vstack([u_prev, U]), axis=0) / CFG.Ts
    assert np.all(np.abs(rates[:, 0]) <= 0.8 + tol) and np.all(np.abs(rates[:, 1]) <= 1.0 + tol)
    C = output_matrix(MAX)
    Y = traj.states[1:] @ C.T
    for i in range(p):
        spatial = Y[i, 3:6]
        if hard[i + 1]:
            assert np.all(np.abs(spatial) <= 0.6 + tol)
        else:
            assert np.all(np.abs(spatial) <= 0.6 + traj.slack_max + tol)


def test_collapsed_hard_step_is_infeasible_and_soft_step_is_not():
    p = CFG.horizon
    hard = np.zeros(p + 1, bool)
    hard[5] = True
    lo = np.full(p + 1, -1.0)
    hi = np.full(p + 1, 1.0)
    lo[5], hi[5] = 0.2, 0.1
    _, rep = plan_step(np.zeros(NX), corridor(p, lo, hi, hard), TacticalParameters(), None, np.zeros(2),
                       1.0, CFG, MAX)
    assert rep.status is SolveStatus.INFEASIBLE
    traj, rep = plan_step(np.zeros(NX), corridor(p, lo, hi), TacticalParameters(), None, np.zeros(2),
                          1.0, CFG, MAX)
    assert rep.optimal and traj.slack_max > 0.05


def test_constraint_count_and_soft_mask():
    p = 5
    Ad, Bd = linear_model(1.0)
    pred = build_prediction(Ad, Bd, output_matrix(MAX), np.zeros(NX), p)
    G, h, soft = build_constraints(pred, corridor(p), TacticalParameters(), np.zeros(2), 0.1)
    # 5 output rows x 2 sides, 2 inputs x (2 bounds + 2 rates), one slack sign row, per step
    assert G.shape == (p * (10 + 8 + 1), NU * p + p)
    assert soft.sum() == 10 * p


def test_receding_horizon_tracks_a_lateral_offset():
    Ad, Bd = linear_model(1.0)
    x = np.array([0.0, 0.0, 0.0, 0.3])
    u_prev = np.zeros(2)
    for _ in range(60):
        traj, rep = plan_step(x, corridor(CFG.horizon), TacticalParameters(), None, u_prev, 1.0, CFG, MAX)
        assert rep.optimal
        u_prev = traj.inputs[0]
        x = Ad @ x + Bd @ np.array([u_prev[0], u_prev[1], 0.0])
        np.testing.assert_allclose(traj.states[1], x, atol=1e-9)
    assert abs(x[3]) < 0.02 and abs(x[2]) < 0.02


def test_plan_step_is_deterministic():
    args = (np.array([0.01, 0.1, 0.05, 0.2]), corridor(CFG.horizon), TacticalParameters(), None,
            np.array([0.01, 0.0]), 1.3, CFG, MAX)
    a, _ = plan_step(*args, disturbance=np.linspace(0, 0.05, CFG.horizon + 1))
    b, _ = plan_step(*args, disturbance=np.linspace(0, 0.05, CFG.horizon + 1))
    assert a.inputs.tobytes() == b.inputs.tobytes() and a.objective == b.objective


def _plan(t0=0.0, p=4, Ts=0.1):
    inputs = np.arange(2 * p, dtype=float).reshape(p, 2)
    return PlannedTrajectory(t0, np.zeros((p + 1, NX)), inputs, True, 1.0, t0 + p * Ts, Ts)


def test_fallback_protocol():
    plan = _plan()
    active, buf = fallback_select(report(SolveStatus.OPTIMAL), plan, None, 0.0)
    assert buf is active and active.valid_until == pytest.approx(0.4)
    for k in range(1, 4):
        act, same = fallback_select(report(SolveStatus.INFEASIBLE), _plan(9.0), buf, 0.1 * k)
        assert same is buf
        np.testing.assert_array_equal(act.first_input, plan.inputs[k])
        assert not act.emergency_stop
    held = shift_trajectory(buf, 0.4)
    np.testing.assert_array_equal(held.first_input, plan.inputs[-1])
    assert not held.emergency_stop
    expired = shift_trajectory(buf, 0.5)
    assert expired.emergency_stop
    with pytest.raises(NoFallbackAvailable):
        fallback_select(report(SolveStatus.ITERATION_LIMIT), plan, None, 0.0)


def test_fallback_buffer_object():
    fb = FallbackBuffer()
    fb.select(report(SolveStatus.OPTIMAL), _plan(), 1.0)
    assert fb.trajectory.t0 == 1.0
    act = fb.select(report(SolveStatus.INFEASIBLE), _plan(), 1.2)
    np.testing.assert_array_equal(act.first_input, [4.0, 5.0])


def test_relaxation_monitor_one_request_per_episode():
    mon = RelaxationMonitor()
    c = corridor(4)
    inf, ok = report(SolveStatus.INFEASIBLE), report(SolveStatus.OPTIMAL)
    assert mon.observe(ok, c) is None
    req = mon.observe(inf, c, now=1.5)
    assert req is not None and req.time == 1.5
    assert mon.observe(inf, c) is None
    assert mon.observe(ok, c) is None
    assert mon.observe(inf, c) is not None
    relaxed = relax_corridor(c, (-2.0, 2.0))
    assert RelaxationMonitor().observe(inf, relaxed) is None
    assert RelaxationMonitor().observe(report(SolveStatus.ITERATION_LIMIT), c) is None


def test_config_validation():
    with pytest.raises(ValueError):
        MpcConfig(horizon=1)
    with pytest.raises(ValueError):
        MpcConfig(Ts=0.0)
    assert math.isclose(MpcConfig().Ts, 0.1)
