"""Interior-point solver contract: statuses, certificates, determinism."""

import numpy as np
import pytest
import scipy.sparse as sp

from momentflow.checks import scalar_transfer_scenario, solve_scenario
from momentflow.conic import ConeBlock, ConicProgram, self_check
from momentflow.ipm import SolverSettings, _has_structured_form, solve


def _cvxopt_available() -> bool:
    try:
        import cvxopt  # noqa: F401
        return True
    except ImportError:
        return False


def lp_min_x_nonneg():
    # min x s.t. x >= 0, with a pinned auxiliary row to make A nonempty
    cones = (ConeBlock("nonneg", 2),)
    A = sp.csr_matrix(np.array([[0.0, 1.0]]))
    return ConicProgram(objective=np.array([1.0, 0.0]), A=A,
                        b=np.array([1.0]), cones=cones)


def sdp_min_x22():
    # min X22 s.t. X11 = 1, X12 = 0.7  ->  X22 = 0.49 (Schur complement)
    rt2 = np.sqrt(2.0)
    A = sp.csr_matrix(np.array([
        [1.0, 0.0, 0.0],
        [0.0, 1.0 / rt2, 0.0],
    ]))
    return ConicProgram(objective=np.array([0.0, 0.0, 1.0]), A=A,
                        b=np.array([1.0, 0.7]), cones=(ConeBlock("psd", 2),))


def sdp_hyperbola():
    # min x s.t. [[x, 1], [1, x]] PSD  ->  x = 1
    # variables: PSD svec (X11, rt2 X12, X22) with X12 pinned to 1, X11 = X22
    rt2 = np.sqrt(2.0)
    A = sp.csr_matrix(np.array([
        [0.0, 1.0 / rt2, 0.0],
        [1.0, 0.0, -1.0],
    ]))
    return ConicProgram(objective=np.array([1.0, 0.0, 0.0]), A=A,
                        b=np.array([1.0, 0.0]), cones=(ConeBlock("psd", 2),))


def infeasible_free():
    # x = 1 and x = 0 on one free variable
    A = sp.csr_matrix(np.array([[1.0], [1.0]]))
    return ConicProgram(objective=np.array([0.0]), A=A,
                        b=np.array([1.0, 0.0]), cones=(ConeBlock("free", 1),))


def unbounded_lp():
    # min -x s.t. x >= 0 and a decoupled pinned coordinate
    cones = (ConeBlock("nonneg", 2),)
    A = sp.csr_matrix(np.array([[0.0, 1.0]]))
    return ConicProgram(objective=np.array([-1.0, 0.0]), A=A,
                        b=np.array([1.0]), cones=cones)


def test_lp_minimum_at_zero():
    sol = solve(lp_min_x_nonneg(), SolverSettings())
    assert sol.status == "optimal"
    assert abs(sol.primal_objective) < 1e-7
    assert self_check(lp_min_x_nonneg(), sol).equality_residual_inf < 1e-7


def test_sdp_schur_bound():
    sol = solve(sdp_min_x22(), SolverSettings())
    assert sol.status == "optimal"
    assert sol.primal_objective == pytest.approx(0.49, abs=1e-6)
    assert sol.dual_objective == pytest.approx(0.49, abs=1e-6)


def test_sdp_hyperbola():
    sol = solve(sdp_hyperbola(), SolverSettings())
    assert sol.status == "optimal"
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)


def test_primal_infeasible_certificate():
    program = infeasible_free()
    sol = solve(program, SolverSettings())
    assert sol.status == "primal_infeasible"
    y = sol.equality_multipliers
    z = sol.cone_duals
    # Farkas: b'y > 0 while A'y + z ~ 0
    assert program.b @ y == pytest.approx(1.0, rel=1e-6)
    assert np.abs(program.A.T @ y + z).max() < 1e-6
    # objective convention keeps weak duality vacuous
    assert sol.primal_objective == np.inf
    assert sol.dual_objective <= sol.primal_objective


def test_dual_infeasible_certificate():
    program = unbounded_lp()
    sol = solve(program, SolverSettings())
    assert sol.status == "dual_infeasible"
    x = sol.primal
    assert program.objective @ x == pytest.approx(-1.0, rel=1e-6)
    assert np.abs(program.A @ x).max() < 1e-6
    assert x.min() >= -1e-9  # ray stays in the cone
    assert sol.dual_objective == -np.inf


def test_weak_duality_all_statuses():
    for make in (lp_min_x_nonneg, sdp_min_x22, sdp_hyperbola,
                 infeasible_free, unbounded_lp):
        sol = solve(make(), SolverSettings(tol=1e-8))
        assert sol.dual_objective <= sol.primal_objective + 10 * 1e-8


def test_solve_is_deterministic():
    program = sdp_min_x22()
    a = solve(program, SolverSettings())
    b = solve(program, SolverSettings())
    assert a.status == b.status
    assert np.array_equal(a.primal, b.primal)
    assert np.array_equal(a.equality_multipliers, b.equality_multipliers)
    assert a.iterations == b.iterations


def test_iteration_limit_status():
    sol = solve(sdp_min_x22(), SolverSettings(max_iters=1))
    assert sol.status == "iteration_limit"
    # best iterate is still packaged with residuals
    assert set(sol.residuals) >= {"primal_feasibility", "dual_feasibility", "gap"}


def test_residual_keys_on_optimal():
    sol = solve(sdp_hyperbola(), SolverSettings(tol=1e-8))
    r = sol.residuals
    assert r["primal_feasibility"] <= 1e-8
    assert r["dual_feasibility"] <= 1e-8
    assert r["gap"] <= 1e-8


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        solve(lp_min_x_nonneg(), SolverSettings(backend="magma"))


def test_structured_form_detection():
    scen, sb, cb = scalar_transfer_scenario()
    assembled, _, _ = solve_scenario(scen, sb, cb)
    assert _has_structured_form(assembled.program)
    # plain toy programs (no free moment block feeding PSD links) are not
    assert not _has_structured_form(infeasible_free())


@pytest.mark.skipif(not _cvxopt_available(), reason="cvxopt unavailable")
def test_cvxopt_backend_parity():
    for make in (lp_min_x_nonneg, sdp_min_x22, sdp_hyperbola):
        ref = solve(make(), SolverSettings(backend="reference"))
        alt = solve(make(), SolverSettings(backend="cvxopt", tol=1e-8))
        assert ref.status == alt.status == "optimal"
        assert abs(ref.primal_objective - alt.primal_objective) < 1e-5
        assert alt.backend == "cvxopt"


@pytest.mark.skipif(not _cvxopt_available(), reason="cvxopt unavailable")
def test_cvxopt_weak_duality_convention():
    sol = solve(infeasible_free(), SolverSettings(backend="cvxopt"))
    assert sol.status in ("primal_infeasible", "numerical_trouble")
    assert sol.dual_objective <= sol.primal_objective + 1e-7
