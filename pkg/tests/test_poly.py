"""Polynomial arithmetic, monomial bases, parsing, and embeddings."""

import math

import numpy as np
import pytest

from momentflow.poly import (
    VariableSpace,
    Polynomial,
    basis_size,
    grlex_key,
    monomial_basis,
    parse_polynomial,
)


S1 = VariableSpace.state_only(1)
S2 = VariableSpace.state_only(2)


def _var(space, i):
    return Polynomial.variable(space, i)


# ---------------------------------------------------------------- bases


def test_basis_1var_degree2():
    basis = monomial_basis(S1, 2)
    assert list(basis) == [(0,), (1,), (2,)]


def test_basis_2var_degree2_length():
    assert len(monomial_basis(S2, 2)) == 6


def test_basis_4var_degree3_length():
    space = VariableSpace.state_only(4)
    assert len(monomial_basis(space, 3)) == 35


def test_basis_grlex_sorted_and_unique():
    space = VariableSpace.state_only(3)
    basis = monomial_basis(space, 4)
    keys = [grlex_key(e) for e in basis]
    assert keys == sorted(keys)
    assert len(set(basis)) == len(basis)


def test_basis_size_matches_binomial():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        d = int(rng.integers(0, 9))
        assert basis_size(n, d) == math.comb(n + d, d)
    # spot check against an actual enumeration
    assert basis_size(3, 4) == len(monomial_basis(VariableSpace.state_only(3), 4))


def test_basis_block_restriction():
    space = VariableSpace.for_control_problem(1, 1)  # (t, x1, u1)
    basis = monomial_basis(space, 2, blocks=("time", "state"))
    assert all(e[space.offset("control")] == 0 for e in basis)
    assert len(basis) == 6  # C(2+2, 2)


# ------------------------------------------------------------ arithmetic


def test_square_of_binomial():
    x = _var(S1, 0)
    p = (x + 1) * (x + 1)
    assert p == x**2 + 2 * x + 1


def test_multiply_by_zero():
    x = _var(S1, 0)
    assert (Polynomial.zero(S1) * (x**3 + 2)).is_zero()


def test_monomial_product():
    x1, x2 = _var(S2, 0), _var(S2, 1)
    assert (x1 * x2) * x1 == Polynomial.monomial(S2, (2, 1))


def test_space_mismatch_rejected():
    with pytest.raises(ValueError):
        _var(S1, 0) + _var(S2, 0)


def test_canonical_form_drops_zero_coefficients():
    x = _var(S1, 0)
    p = x - x
    assert p.is_zero() and p.terms == {}
    assert p.degree() == 0


def test_product_evaluation_property():
    rng = np.random.default_rng(42)
    basis = monomial_basis(S2, 4)
    for trial in range(5):
        p = Polynomial(S2, {e: rng.standard_normal() for e in basis})
        q = Polynomial(S2, {e: rng.standard_normal() for e in basis})
        pq = p * q
        pts = rng.uniform(-1.5, 1.5, size=(100, 2))
        lhs = pq.eval_many(pts)
        rhs = p.eval_many(pts) * q.eval_many(pts)
        scale = np.maximum(1.0, np.abs(rhs))
        assert np.all(np.abs(lhs - rhs) / scale < 1e-10)


# -------------------------------------------------------------- calculus


def test_diff_power_rule():
    x = _var(S1, 0)
    assert (x**3).diff(0) == 3 * x**2


def test_diff_constant():
    assert Polynomial.constant(S1, 5.0).diff(0).is_zero()


def test_mixed_partial():
    x, y = _var(S2, 0), _var(S2, 1)
    p = x**2 * y
    assert p.diff(0, 1) == 2 * x
    assert p.diff(1, 0) == 2 * x  # partials commute


def test_diff_linearity_exact():
    # integer coefficients so float products and sums are exact
    rng = np.random.default_rng(7)
    basis = monomial_basis(S2, 4)
    p = Polynomial(S2, {e: float(rng.integers(-9, 10)) for e in basis})
    q = Polynomial(S2, {e: float(rng.integers(-9, 10)) for e in basis})
    a, b = 2.0, -3.0
    assert (a * p + b * q).diff(1) == a * p.diff(1) + b * q.diff(1)


def test_diff_bad_index():
    with pytest.raises(IndexError):
        _var(S1, 0).diff(3)


# ------------------------------------------------------------ evaluation


def test_eval_examples():
    x = _var(S1, 0)
    assert (x**2 + 1).eval([2.0]) == 5.0
    assert Polynomial.zero(S1).eval([3.7]) == 0.0
    x1, x2 = _var(S2, 0), _var(S2, 1)
    assert (x1 * x2).eval([0.3, -0.5]) == pytest.approx(-0.15, abs=1e-15)


def test_eval_length_mismatch():
    with pytest.raises(ValueError):
        _var(S2, 0).eval([1.0])


def test_eval_many_matches_eval():
    rng = np.random.default_rng(3)
    p = Polynomial(S2, {e: rng.standard_normal() for e in monomial_basis(S2, 3)})
    pts = rng.uniform(-2, 2, size=(20, 2))
    batched = p.eval_many(pts)
    single = np.array([p.eval(pt) for pt in pts])
    assert np.allclose(batched, single, rtol=0, atol=1e-12)


# ----------------------------------------------------------- substitution


def test_substitute_value():
    x1, x2 = _var(S2, 0), _var(S2, 1)
    p = x1**2 * x2 + 3 * x1
    q = p.substitute_value(0, 2.0)
    assert q == 4 * x2 + Polynomial.constant(S2, 6.0)


def test_substitute_affine_matches_eval():
    rng = np.random.default_rng(11)
    p = Polynomial(S2, {e: rng.standard_normal() for e in monomial_basis(S2, 4)})
    off = np.array([0.3, -1.2])
    sc = np.array([2.0, 0.5])
    q = p.substitute_affine(off, sc)
    for pt in rng.uniform(-1, 1, size=(25, 2)):
        assert q.eval(pt) == pytest.approx(p.eval(off + sc * pt), rel=1e-12, abs=1e-12)


# -------------------------------------------------------------- embedding


def test_embed_into_bigger_space():
    space = VariableSpace.for_control_problem(2, 1)  # (t, x1, x2, u1)
    g = _var(S2, 1) ** 2 - 0.25  # x2^2 - 1/4, state-only
    lifted = g.embed(space, [space.offset("state"), space.offset("state") + 1])
    x2_idx = space.offset("state") + 1
    exp = [0] * space.n_total
    exp[x2_idx] = 2
    assert lifted.coefficient(tuple(exp)) == 1.0
    assert lifted.coefficient((0,) * space.n_total) == -0.25
    # nothing may leak onto time or control
    assert not lifted.depends_on(space.offset("time"))
    assert not lifted.depends_on(space.offset("control"))


def test_embed_rejects_dict_map():
    space = VariableSpace.for_control_problem(2, 1)
    g = _var(S2, 0)
    with pytest.raises(TypeError):
        g.embed(space, {0: 1, 1: 2})


def test_embed_wrong_length():
    space = VariableSpace.for_control_problem(2, 1)
    with pytest.raises(ValueError):
        _var(S2, 0).embed(space, [1])


# ------------------------------------------------------------ text round trip


def test_text_parse_roundtrip():
    rng = np.random.default_rng(5)
    space = VariableSpace.for_control_problem(2, 1)
    basis = monomial_basis(space, 3)
    p = Polynomial(space, {e: round(rng.standard_normal(), 6) for e in basis})
    assert parse_polynomial(p.text(), space) == p


def test_parse_grammar():
    space = VariableSpace.for_control_problem(1, 1)
    p = parse_polynomial("2 * t^2 x1 + u1 - 0.5", space)
    t, x, u = (Polynomial.variable(space, i) for i in range(3))
    assert p == 2 * t**2 * x + u - 0.5


def test_parse_unknown_variable():
    with pytest.raises(ValueError):
        parse_polynomial("x9 + 1", S2)


def test_parse_garbage():
    with pytest.raises(ValueError):
        parse_polynomial("1 +* x1", S2)


def test_pow_negative_rejected():
    with pytest.raises(ValueError):
        _var(S1, 0) ** -1
