import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpcguide.qp import SolveStatus, kkt_residuals, solve_qp

from oracles import active_set_qp, random_qp


@given(seed=st.integers(0, 10_000), n=st.integers(1, 4), m=st.integers(1, 6))
def test_matches_active_set_enumeration(seed, n, m):
    H, g, G, h = random_qp(np.random.default_rng(seed), n, m)
    z, rep = solve_qp(H, g, G, h)
    obj, z_ref = active_set_qp(H, g, G, h)
    assert rep.status is SolveStatus.OPTIMAL
    assert rep.kkt_residuals.max() <= 1e-6
    assert rep.objective == pytest.approx(obj, rel=1e-6, abs=1e-6)
    np.testing.assert_allclose(z, z_ref, atol=1e-5)


@pytest.mark.parametrize("seed", range(10))
def test_semidefinite_hessian_against_cvxpy(seed):
    H, g, G, h = random_qp(np.random.default_rng(seed), 6, 8, psd=True)
    z, rep = solve_qp(H, g, G, h)
    x = cp.Variable(6)
    prob = cp.Problem(cp.Minimize(0.5 * cp.quad_form(x, cp.psd_wrap(H)) + g @ x), [G @ x <= h])
    prob.solve(solver=cp.CLARABEL)
    assert rep.optimal
    assert rep.objective == pytest.approx(prob.value, rel=1e-5, abs=1e-5)


def test_unconstrained_and_empty():
    H = np.diag([2.0, 4.0])
    z, rep = solve_qp(H, np.array([-2.0, 4.0]))
    np.testing.assert_allclose(z, [1.0, -1.0])
    assert rep.optimal and rep.iterations == 0


def test_infeasible_is_certified():
    G = np.array([[1.0, 0.0], [-1.0, 0.0]])
    h = np.array([-1.0, -1.0])  # x <= -1 and x >= 1
    _, rep = solve_qp(np.eye(2), np.zeros(2), G, h)
    assert rep.status is SolveStatus.INFEASIBLE
    lam = rep.multipliers
    assert np.all(lam >= 0) and h @ lam < 0
    assert np.max(np.abs(G.T @ lam)) <= 1e-6 * np.max(lam)


def test_iteration_limit_reports_status():
    H, g, G, h = random_qp(np.random.default_rng(1), 4, 6)
    _, rep = solve_qp(H, g, G, h, max_iterations=2)
    assert rep.status is SolveStatus.ITERATION_LIMIT
    assert rep.iterations == 2


def test_deterministic_bitwise():
    H, g, G, h = random_qp(np.random.default_rng(7), 5, 9)
    z1, r1 = solve_qp(H, g, G, h)
    z2, r2 = solve_qp(H, g, G, h)
    assert z1.tobytes() == z2.tobytes() and r1.iterations == r2.iterations


def test_kkt_residuals_of_known_optimum():
    H, g = np.eye(1), np.array([-2.0])
    G, h = np.array([[1.0]]), np.array([1.0])
    res = kkt_residuals(H, g, G, h, np.array([1.0]), np.array([1.0]))
    assert res.max() == 0.0
