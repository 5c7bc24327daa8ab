"""Conic-program data model: vectorization, validation, self checks, export."""

import numpy as np
import pytest
import scipy.sparse as sp

from momentflow.conic import (
    ConeBlock,
    ConicProgram,
    ConicSolution,
    SelfCheckReport,
    export_text,
    self_check,
    smat,
    svec,
    write_program,
)


def random_symmetric(rng, side):
    A = rng.standard_normal((side, side))
    return (A + A.T) / 2


def test_svec_smat_roundtrip():
    rng = np.random.default_rng(100)
    for _ in range(100):
        side = int(rng.integers(1, 21))
        M = random_symmetric(rng, side)
        back = smat(svec(M), side)
        assert np.max(np.abs(back - M)) < 1e-14


def test_svec_preserves_trace_inner_product():
    rng = np.random.default_rng(101)
    for _ in range(25):
        side = int(rng.integers(1, 12))
        A = random_symmetric(rng, side)
        B = random_symmetric(rng, side)
        assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B), rel=1e-12, abs=1e-12)


def test_cone_block_validation():
    with pytest.raises(ValueError):
        ConeBlock("simplex", 3)
    with pytest.raises(ValueError):
        ConeBlock("psd", 0)
    assert ConeBlock("psd", 3).length == 6
    assert ConeBlock("nonneg", 4).length == 4


def test_program_validation():
    cones = (ConeBlock("free", 2),)
    A = sp.csr_matrix(np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError):
        ConicProgram(objective=np.zeros(3), A=A, b=np.zeros(1), cones=cones)
    with pytest.raises(ValueError):
        ConicProgram(objective=np.zeros(2), A=A, b=np.zeros(2), cones=cones)
    with pytest.raises(ValueError):
        ConicProgram(objective=np.array([np.nan, 0.0]), A=A, b=np.zeros(1), cones=cones)
    bad = sp.csr_matrix(np.array([[np.inf, 0.0]]))
    with pytest.raises(ValueError):
        ConicProgram(objective=np.zeros(2), A=bad, b=np.zeros(1), cones=cones)


def _feasible_pair():
    """A tiny program with a hand-built exactly feasible point.

    min X22 s.t. X12 = 0.7, X11 = 1 over a side-2 PSD variable.
    """
    cones = (ConeBlock("psd", 2),)
    rt2 = np.sqrt(2.0)
    A = sp.csr_matrix(np.array([
        [0.0, 1.0 / rt2, 0.0],   # X12
        [1.0, 0.0, 0.0],         # X11
    ]))
    b = np.array([0.7, 1.0])
    c = np.array([0.0, 0.0, 1.0])  # minimize X22
    program = ConicProgram(objective=c, A=A, b=b, cones=cones)
    X = np.array([[1.0, 0.7], [0.7, 0.49]])
    x = svec(X)
    solution = ConicSolution(
        status="optimal", primal=x, equality_multipliers=np.zeros(2),
        cone_duals=np.zeros(3), primal_objective=0.49, dual_objective=0.49,
        residuals={"gap": 0.0}, iterations=0, solve_seconds=0.0,
    )
    return program, solution


def test_self_check_exact_point():
    program, solution = _feasible_pair()
    report = self_check(program, solution)
    assert report.equality_residual_inf <= 1e-12
    assert report.min_primal_eigenvalue >= -1e-12
    assert abs(report.complementarity_gap) <= 1e-12
    assert report.within(1e-12)


def test_self_check_detects_perturbation():
    program, solution = _feasible_pair()
    x = solution.primal.copy()
    x[0] += 1e-3  # perturb X11
    bumped = ConicSolution(
        status="optimal", primal=x, equality_multipliers=np.zeros(2),
        cone_duals=np.zeros(3), primal_objective=0.49, dual_objective=0.49,
        residuals={}, iterations=0, solve_seconds=0.0,
    )
    report = self_check(program, bumped)
    col = program.A[:, 0].toarray().ravel()
    assert report.equality_residual_inf == pytest.approx(
        np.abs(col).max() * 1e-3, rel=1e-9)
    assert not report.within(1e-12)


def test_self_check_reports_negative_eigenvalue():
    cones = (ConeBlock("psd", 2),)
    program = ConicProgram(objective=np.zeros(3),
                           A=sp.csr_matrix((1, 3)), b=np.zeros(1), cones=cones)
    X = np.array([[1.0, 0.0], [0.0, -1e-2]])
    sol = ConicSolution(
        status="optimal", primal=svec(X), equality_multipliers=np.zeros(1),
        cone_duals=np.zeros(3), primal_objective=0.0, dual_objective=0.0,
        residuals={}, iterations=0, solve_seconds=0.0,
    )
    report = self_check(program, sol)
    independent = float(np.linalg.eigvalsh(X).min())
    assert abs(report.min_primal_eigenvalue - independent) < 1e-8
    assert report.min_primal_eigenvalue == pytest.approx(-1e-2, abs=1e-8)


def test_export_text_format(tmp_path):
    program, _ = _feasible_pair()
    text = export_text(program)
    lines = text.strip().splitlines()
    head = lines[0].split()
    assert head[0] == "conic" and int(head[1]) == 3 and int(head[3]) == 2
    assert lines[1] == "cones psd:2"
    assert lines[2].startswith("objective ")
    assert lines[3].startswith("rhs ")
    a_lines = [ln for ln in lines if ln.startswith("A ")]
    assert len(a_lines) == program.A.nnz
    # round trip the triplets
    A2 = np.zeros(program.A.shape)
    for ln in a_lines:
        _, i, j, v = ln.split()
        A2[int(i), int(j)] = float(v)
    assert np.array_equal(A2, program.A.toarray())

    path = tmp_path / "prog.txt"
    write_program(program, path)
    assert path.read_text() == text


def test_solution_gap_property():
    sol = ConicSolution(
        status="optimal", primal=np.zeros(1), equality_multipliers=np.zeros(0),
        cone_duals=np.zeros(1), primal_objective=1.0, dual_objective=1.0,
        residuals={"gap": 2.5e-9}, iterations=3, solve_seconds=0.0,
    )
    assert sol.gap == 2.5e-9
    report = SelfCheckReport(0.0, 0.0, 0.0, 0.0)
    assert report.within(1e-12)
