"""Boundary-measure moments and moment/localizing matrices."""

import numpy as np
import pytest

from momentflow.moments import (
    MeasureSpec,
    MomentVector,
    SupportSet,
    boundary_moments,
    localizing_matrix,
    moment_matrix,
)
from momentflow.poly import VariableSpace, Polynomial, monomial_basis, parse_polynomial


S1 = VariableSpace.state_only(1)


def test_dirac_moments():
    spec = MeasureSpec.dirac([0.3, -0.5, 0.0, 0.0])
    y = boundary_moments(spec, 2)
    assert y.mass == pytest.approx(1.0, abs=0)
    assert y.value((1, 0, 0, 0)) == pytest.approx(0.3, abs=1e-15)
    assert y.value((1, 1, 0, 0)) == pytest.approx(-0.15, abs=1e-15)


def test_standard_gaussian_moments():
    y = boundary_moments(MeasureSpec.gaussian([0.0], [[1.0]]), 4)
    got = [y.value((k,)) for k in range(5)]
    assert got == pytest.approx([1.0, 0.0, 1.0, 0.0, 3.0], abs=1e-12)


def test_gaussian_moments_match_isserlis_recursion():
    # 1-d recursion with mean m, variance v: E[x^k] = m E[x^{k-1}] + (k-1) v E[x^{k-2}]
    m, v = 0.7, 0.35
    y = boundary_moments(MeasureSpec.gaussian([m], [[v]]), 6)
    ref = [1.0, m]
    for k in range(2, 7):
        ref.append(m * ref[k - 1] + (k - 1) * v * ref[k - 2])
    got = [y.value((k,)) for k in range(7)]
    assert got == pytest.approx(ref, rel=1e-12)


def test_uniform_box_moments():
    y = boundary_moments(MeasureSpec.uniform_box([-1.0], [1.0]), 4)
    assert y.value((2,)) == pytest.approx(1.0 / 3.0, rel=1e-14)
    assert y.value((1,)) == pytest.approx(0.0, abs=1e-15)
    assert y.value((4,)) == pytest.approx(1.0 / 5.0, rel=1e-14)


def test_empirical_moments_average_dirac():
    pts = np.array([[0.2, -1.0], [0.5, 0.25], [-0.4, 2.0]])
    y = boundary_moments(MeasureSpec.empirical(pts), 3)
    diracs = [boundary_moments(MeasureSpec.dirac(p), 3) for p in pts]
    avg = sum(d.values for d in diracs) / len(diracs)
    assert np.array_equal(y.values, avg) or np.allclose(y.values, avg, rtol=0, atol=1e-16)


def test_free_measure_has_no_moments():
    with pytest.raises(ValueError):
        boundary_moments(MeasureSpec.free(2), 2)


def test_measure_validation():
    with pytest.raises(ValueError):
        MeasureSpec.gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])  # not PSD
    with pytest.raises(ValueError):
        MeasureSpec.uniform_box([1.0], [0.0])  # lower >= upper


# --------------------------------------------------------------- matrices


def test_moment_matrix_standard_gaussian():
    y = MomentVector(space=S1, max_degree=2, values=np.array([1.0, 0.0, 1.0]))
    M = moment_matrix(y, 1)
    assert np.allclose(M, np.eye(2), atol=0)


def test_moment_matrix_dirac_rank_one():
    a = 0.8
    y = boundary_moments(MeasureSpec.dirac([a]), 4)
    M = moment_matrix(y, 2)
    phi = np.array([1.0, a, a * a])
    assert np.allclose(M, np.outer(phi, phi), atol=1e-14)
    assert M[0, 0] == pytest.approx(1.0, abs=0)


def test_moment_matrix_degree_overflow():
    y = boundary_moments(MeasureSpec.dirac([1.0]), 2)
    with pytest.raises(ValueError):
        moment_matrix(y, 2)  # needs degree 4 moments


def test_moment_matrix_linear_in_y():
    y1 = boundary_moments(MeasureSpec.uniform_box([-1.0], [1.0]), 4)
    y2 = boundary_moments(MeasureSpec.dirac([0.5]), 4)
    mix = MomentVector(space=S1, max_degree=4, values=0.25 * y1.values + 0.75 * y2.values)
    assert np.allclose(
        moment_matrix(mix, 2),
        0.25 * moment_matrix(y1, 2) + 0.75 * moment_matrix(y2, 2),
        atol=1e-15,
    )


def test_localizing_with_unit_weight_is_moment_matrix():
    y = boundary_moments(MeasureSpec.gaussian([0.1], [[0.4]]), 4)
    one = Polynomial.constant(S1, 1.0)
    assert np.allclose(localizing_matrix(y, one, 2), moment_matrix(y, 2), atol=0)


def test_localizing_uniform_example():
    y = boundary_moments(MeasureSpec.uniform_box([-1.0], [1.0]), 4)
    g = parse_polynomial("1 - x1^2", S1)
    L = localizing_matrix(y, g, 1)
    assert np.allclose(L, [[2.0 / 3.0, 0.0], [0.0, 2.0 / 15.0]], atol=1e-14)


def test_localizing_detects_support_violation():
    y = boundary_moments(MeasureSpec.dirac([2.0]), 4)
    g = parse_polynomial("1 - x1^2", S1)
    L = localizing_matrix(y, g, 1)
    assert np.linalg.eigvalsh(L)[0] < -1e-6  # g(2) = -3 scales phi phi'


def test_localizing_degree_overflow():
    y = boundary_moments(MeasureSpec.dirac([1.0]), 3)
    g = parse_polynomial("1 - x1^2", S1)
    with pytest.raises(ValueError):
        localizing_matrix(y, g, 1)  # needs degree 2*1+2 = 4


def test_genuine_measures_give_psd_matrices():
    space2 = VariableSpace.state_only(2)
    g = parse_polynomial("4 - x1^2 - x2^2", space2)
    rng = np.random.default_rng(21)
    specs = [
        MeasureSpec.dirac([0.5, -0.25]),
        MeasureSpec.gaussian([0.1, 0.2], [[0.3, 0.05], [0.05, 0.2]]),
        MeasureSpec.uniform_box([-1.0, -1.0], [1.0, 1.0]),
        MeasureSpec.empirical(rng.uniform(-1, 1, size=(40, 2))),
    ]
    for spec in specs:
        y = boundary_moments(spec, 6)
        assert np.linalg.eigvalsh(moment_matrix(y, 3))[0] >= -1e-9
        assert np.linalg.eigvalsh(localizing_matrix(y, g, 2))[0] >= -1e-9


def test_moment_vector_pairing():
    y = boundary_moments(MeasureSpec.uniform_box([-1.0], [1.0]), 4)
    p = parse_polynomial("3 x1^2 + 2", S1)
    assert y.pair(p) == pytest.approx(3.0 / 3.0 + 2.0, rel=1e-14)


def test_support_set_iteration():
    g = parse_polynomial("1 - x1^2", S1)
    ss = SupportSet((g,))
    assert len(ss) == 1 and list(ss) == [g]
    with pytest.raises(ValueError):
        SupportSet((Polynomial.zero(S1),))
