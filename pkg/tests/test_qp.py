import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncbf import acc
from ncbf.qp import (IpmIterate, QpProblem, SolverConfig, Status, initial_iterate, kkt_residual,
                     newton_direction, solve, step_to_boundary)
from oracles import active_set_qp, random_qp


def one_var(G=0.0, theta=(1.0,), A=((1.0,),)):
    return QpProblem(P=[[1.0]], G=[G], A=A, theta=theta)


# --- kkt_residual -----------------------------------------------------------


def test_residual_hand_example():
    r = kkt_residual(one_var(), IpmIterate(v=[0.0], s=[1.0], L=[1.0]), 1.0)
    np.testing.assert_array_equal(r, [1.0, 0.0, 0.0])


def test_residual_zero_at_fixed_point():
    # v = 1 active, multiplier 1 for min 1/2 v^2 - 2v s.t. v <= 1; perturbed complementarity
    p = one_var(G=-2.0)
    s, L = 1e-3, 1.0
    it = IpmIterate(v=[1.0 - s], s=[s], L=[L])
    p2 = QpProblem(P=[[1.0]], G=[-2.0 + 1e-3], A=[[1.0]], theta=[1.0])
    np.testing.assert_allclose(kkt_residual(p2, it, s * L), 0.0, atol=1e-15)
    assert np.abs(kkt_residual(p, it, s * L)).max() > 0


def test_residual_perturbation_blocks():
    rng = np.random.default_rng(2)
    P, G, A, th = random_qp(rng, n=3, m=4)
    p = QpProblem(P, G, A, th)
    it = IpmIterate(v=rng.normal(size=3), s=rng.uniform(1, 2, 4), L=rng.uniform(1, 2, 4))
    eps = rng.normal(size=3) * 1e-3
    r0 = kkt_residual(p, it, 0.1)
    r1 = kkt_residual(p, IpmIterate(it.v + eps, it.s, it.L), 0.1)
    np.testing.assert_allclose(r1[:3] - r0[:3], P @ eps, atol=1e-14)
    np.testing.assert_allclose(r1[3:7] - r0[3:7], A @ eps, atol=1e-14)
    np.testing.assert_array_equal(r1[7:], r0[7:])


# --- newton_direction -------------------------------------------------------


def test_direction_hand_solved():
    dv, ds, dL = newton_direction(one_var(), IpmIterate([0.0], [1.0], [1.0]), sigma=0.0, mu=1.0)
    np.testing.assert_allclose(dv, [0.0], atol=1e-15)
    np.testing.assert_allclose(ds, [0.0], atol=1e-15)
    np.testing.assert_allclose(dL, [-1.0], atol=1e-15)


def test_direction_zero_at_fixed_point():
    p = QpProblem(P=[[1.0]], G=[-2.0 + 1e-3], A=[[1.0]], theta=[1.0])
    it = IpmIterate(v=[1.0 - 1e-3], s=[1e-3], L=[1.0])
    d = newton_direction(p, it, sigma=1.0, mu=1e-3)
    for part in d:
        np.testing.assert_allclose(part, 0.0, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), corrector=st.booleans(), sigma=st.floats(0, 1))
def test_direction_solves_block_equations(seed, corrector, sigma):
    rng = np.random.default_rng(seed)
    P, G, A, th = random_qp(rng)
    p = QpProblem(P, G, A, th)
    m = p.m
    it = IpmIterate(v=rng.normal(size=p.n), s=rng.uniform(0.1, 3, m), L=rng.uniform(0.1, 3, m))
    mu = it.mu
    corr = (rng.normal(size=m), rng.normal(size=m)) if corrector else None
    dv, ds, dL = newton_direction(p, it, sigma, mu, corr)
    r = kkt_residual(p, it, sigma * mu)
    if corr:
        r[p.n + m:] += corr[0] * corr[1]
    scale = 1 + np.abs(r).max()
    assert np.abs(P @ dv + A.T @ dL + r[:p.n]).max() < 1e-10 * scale
    assert np.abs(A @ dv + ds + r[p.n:p.n + m]).max() < 1e-10 * scale
    assert np.abs(it.L * ds + it.s * dL + r[p.n + m:]).max() < 1e-10 * scale


def test_direction_rejects_nonpositive_iterate():
    with pytest.raises(ValueError):
        newton_direction(one_var(), IpmIterate([0.0], [0.0], [1.0]), 0.0, 1.0)


# --- step_to_boundary -------------------------------------------------------


def test_step_unblocked():
    assert step_to_boundary([1.0, 2.0], [1.0], [0.5, 0.0], [3.0], 0.995) == (1.0, 1.0)


def test_step_fraction_to_boundary():
    bp, bd = step_to_boundary([1.0], [1.0], [-2.0], [0.0], 0.995)
    assert bp == pytest.approx(0.4975, rel=1e-15)
    assert bd == 1.0


def test_step_min_ratio():
    bp, _ = step_to_boundary([1.0, 1.0], [1.0], [-1.0, -4.0], [1.0], 1.0)
    assert bp == pytest.approx(0.25, rel=1e-15)


def test_step_dual_side():
    _, bd = step_to_boundary([1.0], [2.0], [1.0], [-4.0], 0.5)
    assert bd == pytest.approx(0.25)


# --- solve ------------------------------------------------------------------


def test_solve_interior_minimum():
    sol = solve(QpProblem(P=[[1.0]], G=[0.0], A=[[1.0], [-1.0]], theta=[1.0, 1.0]))
    assert sol.status is Status.OPTIMAL
    assert abs(sol.v_star[0]) < 1e-9
    assert np.all(sol.L_star < 1e-8)


def test_solve_active_bound():
    sol = solve(one_var(G=-2.0))
    assert sol.ok
    assert sol.v_star[0] == pytest.approx(1.0, abs=1e-9)
    assert sol.L_star[0] == pytest.approx(1.0, abs=1e-8)


def test_solve_acc_instance_matches_oracle(prm):
    p = acc.assemble_qp(acc.AccState(20.0, 100.0), prm)
    sol = solve(p)
    ref = active_set_qp(p.P, p.G, p.A, p.theta)
    assert sol.ok
    np.testing.assert_allclose(sol.v_star, ref[0], atol=1e-5)


def test_solve_scaled_acc_matches_raw(prm):
    s = acc.AccState(20.0, 100.0)
    raw = solve(acc.assemble_qp(s, prm))
    scaled = solve(acc.assemble_qp(s, prm, scaled=True))
    np.testing.assert_allclose(scaled.v_star * acc.input_scale(prm), raw.v_star, atol=1e-5)


def test_iteration_limit():
    sol = solve(one_var(G=-2.0), SolverConfig(max_iter=1))
    assert sol.status is Status.MAX_ITERATIONS
    assert sol.iterations == 1


def test_infeasible_reported_as_failure():
    sol = solve(QpProblem(P=[[1.0]], G=[0.0], A=[[1.0], [-1.0]], theta=[-1.0, -1.0]))
    assert sol.status is Status.NUMERICAL_FAILURE
    assert not sol.ok


def test_initial_iterate():
    it = initial_iterate(QpProblem(P=np.eye(2), G=[0, 0], A=[[1, 0], [0, 1]], theta=[3.0, -2.0]))
    np.testing.assert_array_equal(it.v, [0, 0])
    np.testing.assert_array_equal(it.s, [3.0, 1.0])
    np.testing.assert_array_equal(it.L, [1.0, 1.0])


def test_mu_history_decreases_to_tolerance():
    sol = solve(one_var(G=-2.0))
    hist = sol.mu_history
    assert len(hist) == sol.iterations + 1
    assert hist[-1] == sol.final_mu <= SolverConfig().tol_mu


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_solver_invariants(seed):
    rng = np.random.default_rng(seed)
    P, G, A, th = random_qp(rng)
    p = QpProblem(P, G, A, th)
    cfg = SolverConfig()
    sol = solve(p, cfg)
    assert sol.status is Status.OPTIMAL
    # the kernel stops with NumericalFailure if any iterate leaves the interior
    assert np.all(sol.s_star > 0) and np.all(sol.L_star > 0)
    assert all(mu > 0 for mu in sol.mu_history)
    assert sol.final_mu <= cfg.tol_mu
    cert = kkt_residual(p, IpmIterate(sol.v_star, sol.s_star, sol.L_star), 0.0)
    assert np.abs(cert).max() <= 10 * cfg.tol_residual
    ref_v, _ = active_set_qp(P, G, A, th)
    obj = p.objective(ref_v)
    assert abs(p.objective(sol.v_star) - obj) <= 1e-6 * (1 + abs(obj))
    assert np.abs(sol.v_star - ref_v).max() <= 1e-5


# --- problem validation and JSON --------------------------------------------


@pytest.mark.parametrize("kw, msg", [
    (dict(P=[[1, 2], [0, 1]], G=[0, 0], A=[[1, 0]], theta=[1]), "symmetric"),
    (dict(P=[[1, 0], [0, 0]], G=[0, 0], A=[[1, 0]], theta=[1]), "positive definite"),
    (dict(P=[[1]], G=[0], A=[[1, 1]], theta=[1]), "shape"),
    (dict(P=[[1]], G=[0], A=np.zeros((0, 1)), theta=[]), "m >= 1"),
    (dict(P=[[1]], G=[np.inf], A=[[1]], theta=[1]), "non-finite"),
    (dict(P=[[1, 0], [0, 1]], G=[0], A=[[1]], theta=[1]), "P has shape"),
])
def test_problem_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        QpProblem(**kw)


def test_problem_is_immutable():
    p = one_var()
    with pytest.raises(ValueError):
        p.P[0, 0] = 2.0


def test_json_round_trip(tmp_path, prm):
    p = acc.assemble_qp(acc.AccState(20.0, 100.0), prm)
    path = tmp_path / "qp.json"
    path.write_text(json.dumps(p.to_json()))
    q = QpProblem.load(path)
    for name in ("P", "G", "A", "theta"):
        np.testing.assert_array_equal(getattr(p, name), getattr(q, name))
    assert set(json.loads(path.read_text())) == {"P", "G", "A", "theta"}


def test_json_missing_key():
    with pytest.raises(ValueError, match="missing"):
        QpProblem.from_json({"P": [[1]], "G": [0], "A": [[1]]})


@pytest.mark.parametrize("kw", [dict(tol_mu=0), dict(max_iter=0), dict(tau=1.0), dict(init_margin=-1)])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)
