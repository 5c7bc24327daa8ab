"""Infinitesimal generator of polynomial diffusions."""

import numpy as np
import pytest

from momentflow.checks import ou_moment_curves
from momentflow.generator import DynamicsSpec, apply_generator, generator_degree_shift
from momentflow.poly import VariableSpace, Polynomial, monomial_basis, parse_polynomial


def scalar_dynamics(drift_text: str, D: float, horizon: float = 1.0):
    space = VariableSpace.for_control_problem(1, 1)
    return DynamicsSpec(
        space=space,
        drift=(parse_polynomial(drift_text, space),),
        diffusion=np.array([[D]]),
        horizon=horizon,
    )


def test_quadratic_test_function():
    # V = x^2, f = u, D = sigma^2/2: LV = 2xu + sigma^2
    sigma_sq = 0.5
    dyn = scalar_dynamics("u1", D=sigma_sq / 2)
    V = parse_polynomial("x1^2", dyn.space)
    assert apply_generator(V, dyn) == parse_polynomial(f"2 x1 u1 + {sigma_sq}", dyn.space)


def test_linear_test_function_ignores_diffusion():
    dyn = scalar_dynamics("0 - x1", D=0.37)
    V = parse_polynomial("x1", dyn.space)
    assert apply_generator(V, dyn) == parse_polynomial("0 - x1", dyn.space)


def test_time_state_product():
    dyn = scalar_dynamics("u1", D=0.0)
    V = parse_polynomial("t x1", dyn.space)
    assert apply_generator(V, dyn) == parse_polynomial("x1 + t u1", dyn.space)


def test_constants_annihilated():
    dyn = scalar_dynamics("u1", D=0.25)
    assert apply_generator(Polynomial.constant(dyn.space, 42.0), dyn).is_zero()


def test_linearity_exact():
    dyn = scalar_dynamics("x1 + u1", D=0.5)
    rng = np.random.default_rng(13)
    basis = monomial_basis(dyn.space, 3, blocks=("time", "state"))
    V = Polynomial(dyn.space, {e: float(rng.integers(-5, 6)) for e in basis})
    W = Polynomial(dyn.space, {e: float(rng.integers(-5, 6)) for e in basis})
    lhs = apply_generator(2.0 * V - 3.0 * W, dyn)
    rhs = 2.0 * apply_generator(V, dyn) - 3.0 * apply_generator(W, dyn)
    assert lhs == rhs


def test_control_dependent_test_function_rejected():
    dyn = scalar_dynamics("u1", D=0.0)
    with pytest.raises(ValueError):
        apply_generator(parse_polynomial("u1 x1", dyn.space), dyn)


def test_space_mismatch_rejected():
    dyn = scalar_dynamics("u1", D=0.0)
    other = VariableSpace.state_only(1)
    with pytest.raises(ValueError):
        apply_generator(Polynomial.variable(other, 0), dyn)


def test_degree_shift():
    assert generator_degree_shift(scalar_dynamics("u1", D=0.0)) == 0
    assert generator_degree_shift(scalar_dynamics("x1^3", D=0.1)) == 2
    assert generator_degree_shift(scalar_dynamics("1", D=0.0)) == 0


def test_diffusion_must_be_psd():
    space = VariableSpace.for_control_problem(2, 1)
    drift = (parse_polynomial("u1", space), parse_polynomial("0", space))
    with pytest.raises(ValueError):
        DynamicsSpec(space=space, drift=drift,
                     diffusion=np.array([[1.0, 2.0], [2.0, 1.0]]), horizon=1.0)


def test_time_dependent_drift_rejected():
    space = VariableSpace.for_control_problem(1, 1)
    with pytest.raises(ValueError):
        DynamicsSpec(space=space, drift=(parse_polynomial("t", space),),
                     diffusion=np.zeros((1, 1)), horizon=1.0)


def test_ou_moment_odes():
    """d/dt <V> = <LV> for V in {x, x^2} along the analytic OU curves.

    E[x^j](t) is a sum of exponentials c * exp(-l*lam*t); differentiating a
    curve term-by-term must match pushing V through the generator and
    evaluating the resulting moment combination.
    """
    x0, v0, lam, D = 1.0, 0.0, 1.0, 0.25
    curves = ou_moment_curves(x0, v0, lam, D, max_degree=2)
    space = VariableSpace.for_control_problem(1, 0)
    dyn = DynamicsSpec(space=space, drift=(parse_polynomial("0 - x1", space),),
                       diffusion=np.array([[D]]), horizon=2.0)

    def moment(j: int, t: float) -> float:
        return sum(c * np.exp(-l * lam * t) for l, c in curves[j].items())

    def moment_dot(j: int, t: float) -> float:
        return sum(-l * lam * c * np.exp(-l * lam * t) for l, c in curves[j].items())

    for name in ("x1", "x1^2"):
        V = parse_polynomial(name, space)
        LV = apply_generator(V, dyn)
        jV = V.degree()
        for t in np.linspace(0.0, 2.0, 20):
            # expand <LV> through the moment curves (LV has state degree <= 2)
            lhs = moment_dot(jV, t)
            rhs = 0.0
            for exp, coeff in LV.terms.items():
                j = exp[space.offset("state")]
                rhs += coeff * moment(j, t)
            assert abs(lhs - rhs) < 1e-8
