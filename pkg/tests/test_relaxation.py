"""Tests for scenario scaling and the moment-relaxation assembly."""

import dataclasses
from math import comb

import numpy as np
import pytest

from momentflow.checks import (
    OU_PARAMS,
    ou_equality_residual,
    ou_validation_scenario,
    scalar_transfer_scenario,
    solve_scenario,
)
from momentflow.generator import DynamicsSpec
from momentflow.moments import MeasureSpec
from momentflow.poly import Polynomial, VariableSpace, parse_polynomial
from momentflow.relaxation import (
    AssemblyError,
    ScenarioSpec,
    SupportSet,
    assemble_primal,
    scale_scenario,
)


def _scalar_scenario(**overrides):
    scenario, state_box, control_box = scalar_transfer_scenario()
    return dataclasses.replace(scenario, **overrides), state_box, control_box


# ---------------------------------------------------------------------------
# scaling


def test_identity_box_leaves_problem_data_unchanged():
    scenario, _, _ = scalar_transfer_scenario()
    boxes = (np.array([-1.0]), np.array([1.0]))
    scaled, scaling = scale_scenario(scenario, boxes, boxes)
    assert scaling.time_scale == 1.0
    assert scaled.dynamics.horizon == 1.0
    for f, g in zip(scaled.dynamics.drift, scenario.dynamics.drift):
        assert f.terms == g.terms
    assert scaled.running_cost.terms == scenario.running_cost.terms
    assert scaled.initial.point == scenario.initial.point
    assert scaled.terminal.point == scenario.terminal.point
    np.testing.assert_allclose(scaled.dynamics.diffusion, scenario.dynamics.diffusion)


def test_scaling_maps_dirac_points_to_unit_box():
    space = VariableSpace.for_control_problem(1, 0)
    dyn = DynamicsSpec(space=space, drift=(parse_polynomial("-x1", space),),
                       diffusion=np.zeros((1, 1)), horizon=1.0)
    scenario = ScenarioSpec(
        dynamics=dyn, degree=4, num_phases=1,
        initial=MeasureSpec.dirac([2.0]), terminal=MeasureSpec.free(1),
        running_cost=Polynomial.zero(space),
    )
    scaled, scaling = scale_scenario(scenario, (np.array([0.0]), np.array([2.0])))
    assert scaled.initial.point == (1.0,)
    np.testing.assert_allclose(
        np.ravel(scaling.state_to_scaled(np.array([2.0]))), [1.0])
    np.testing.assert_allclose(
        np.ravel(scaling.state_from_scaled(np.array([1.0]))), [2.0])


def test_scaling_rescales_time_and_diffusion():
    # horizon T and radius r enter the scaled diffusion as T * D / r^2
    space = VariableSpace.for_control_problem(1, 1)
    dyn = DynamicsSpec(space=space, drift=(parse_polynomial("u1", space),),
                       diffusion=np.array([[0.3]]), horizon=10.0)
    scenario = ScenarioSpec(
        dynamics=dyn, degree=4, num_phases=1,
        initial=MeasureSpec.dirac([0.0]), terminal=MeasureSpec.free(1),
        running_cost=parse_polynomial("u1^2", space),
    )
    scaled, scaling = scale_scenario(
        scenario, (np.array([-1.0]), np.array([1.0])), (np.array([-1.0]), np.array([1.0]))
    )
    assert scaled.dynamics.horizon == 1.0
    assert scaling.time_scale == 10.0
    np.testing.assert_allclose(scaled.dynamics.diffusion, [[3.0]])
    # drift u1 picks up the factor T / r = 10 and the running cost the factor T
    assert scaled.dynamics.drift[0].coefficient(
        _exp(space, space.offset("control"))) == pytest.approx(10.0)
    assert scaled.running_cost.coefficient(
        _exp(space, space.offset("control"), 2)) == pytest.approx(10.0)


def _exp(space, idx, power=1):
    e = [0] * space.n_total
    e[idx] = power
    return tuple(e)


def test_scaling_appends_canonical_box_support():
    scenario, state_box, control_box = scalar_transfer_scenario()
    scaled, _ = scale_scenario(scenario, state_box, control_box)
    # every scaled support set gains the polynomials 1 - x_i'^2, written in
    # the one-dimensional state-only space
    assert len(scaled.state_support) == 1
    g = list(scaled.state_support)[0]
    assert g.coefficient(_exp(g.space, 0, 2)) == pytest.approx(-1.0)
    assert g.coefficient(tuple([0] * g.space.n_total)) == pytest.approx(1.0)
    assert len(scaled.control_support) == 1
    assert len(scaled.terminal_support) == 1


@pytest.mark.parametrize(
    "state_box",
    [
        (np.array([0.0, 0.0]), np.array([1.0])),       # shape mismatch
        (np.array([1.0]), np.array([1.0])),            # hi == lo
        (np.array([2.0]), np.array([1.0])),            # hi < lo
        (np.array([-np.inf]), np.array([1.0])),        # unbounded
        (np.array([-1.0]), np.array([np.inf])),        # unbounded
    ],
)
def test_scaling_rejects_bad_state_boxes(state_box):
    scenario, _, control_box = scalar_transfer_scenario()
    with pytest.raises(ValueError):
        scale_scenario(scenario, state_box, control_box)


def test_scaling_requires_control_bounds_when_controls_exist():
    scenario, state_box, _ = scalar_transfer_scenario()
    with pytest.raises(ValueError, match="control bounds"):
        scale_scenario(scenario, state_box, None)


# ---------------------------------------------------------------------------
# assembly structure


def test_basis_sizes_and_row_counts_single_phase():
    scenario, state_box, control_box = scalar_transfer_scenario(degree=4)
    scaled, _ = scale_scenario(scenario, state_box, control_box)
    assembled = assemble_primal(scaled)
    space = scaled.dynamics.space
    # occupation basis: all monomials in (t, x, u) up to the relaxation degree
    assert len(assembled.mu_basis) == comb(3 + 4, 4)
    assert len(assembled.nu_basis) == comb(1 + 4, 4)
    # drift degree 1 means no degree shift, so the test basis reaches degree 4
    # over (t, x) only, with the constant excluded
    assert len(assembled.test_basis) == comb(2 + 4, 4) - 1
    uo = space.offset("control")
    for e in assembled.test_basis:
        assert sum(e) > 0
        assert e[uo] == 0
    assert len(assembled.weak_rows) == len(assembled.test_basis) * scaled.num_phases
    # both boundary laws are fixed diracs: no free interface, no mass rows
    assert len(assembled.mass_rows) == 0


def test_mass_rows_cover_variable_interfaces():
    scenario, state_box, control_box = scalar_transfer_scenario(degree=4, phases=2)
    scaled, _ = scale_scenario(scenario, state_box, control_box)
    assembled = assemble_primal(scaled)
    assert len(assembled.mass_rows) == 1  # one interior interface, terminal fixed

    ou, ou_box, _ = ou_validation_scenario(degree=4, phases=4)
    scaled_ou, _ = scale_scenario(ou, ou_box)
    assembled_ou = assemble_primal(scaled_ou)
    # three interior interfaces plus the free terminal law
    assert len(assembled_ou.mass_rows) == 4
    variable = set(assembled_ou.variable_measures())
    assert {("nu", k) for k in (1, 2, 3, 4)} <= variable
    assert {("mu", k) for k in (1, 2, 3, 4)} <= variable
    assert ("nu", 0) not in variable


def test_assembly_is_deterministic():
    scenario, state_box, control_box = scalar_transfer_scenario(degree=4, phases=2)
    scaled, _ = scale_scenario(scenario, state_box, control_box)
    a1 = assemble_primal(scaled)
    a2 = assemble_primal(scaled)
    assert np.array_equal(a1.program.A.data, a2.program.A.data)
    assert np.array_equal(a1.program.A.indices, a2.program.A.indices)
    assert np.array_equal(a1.program.A.indptr, a2.program.A.indptr)
    assert np.array_equal(a1.program.b, a2.program.b)
    assert np.array_equal(a1.program.objective, a2.program.objective)
    assert len(a1.blocks) == len(a2.blocks)


def test_state_support_embeds_on_state_variables_only():
    # a support constraint written on x2 alone must act on x2 inside the
    # occupation measure space (t, x1, x2, u1), not leak onto t, x1 or u1
    space = VariableSpace.for_control_problem(2, 1)
    dyn = DynamicsSpec(
        space=space,
        drift=(parse_polynomial("x2", space), parse_polynomial("u1", space)),
        diffusion=np.zeros((2, 2)),
        horizon=1.0,
    )
    state_space = VariableSpace.state_only(2)
    g_state = parse_polynomial("x2 - 0.25", state_space)
    g_control = parse_polynomial("4 - u1^2", VariableSpace((("control", 1),)))
    scenario = ScenarioSpec(
        dynamics=dyn, degree=4, num_phases=1,
        initial=MeasureSpec.dirac([0.0, 0.5]), terminal=MeasureSpec.dirac([0.5, 0.5]),
        running_cost=parse_polynomial("u1^2", space),
        state_support=SupportSet((g_state,)),
        control_support=SupportSet((g_control,)),
    )
    assembled = assemble_primal(scenario)
    t_idx = space.offset("time")
    x1_idx = space.offset("state")
    x2_idx = x1_idx + 1
    u_idx = space.offset("control")

    localizing = [
        blk for blk in assembled.blocks
        if blk.measure == ("mu", 1) and blk.kind == "localizing"
    ]
    lifted_state = [
        blk.constraint for blk in localizing
        if blk.constraint.coefficient(_exp(space, x2_idx)) == 1.0
        and blk.constraint.coefficient(tuple([0] * space.n_total)) == -0.25
    ]
    assert len(lifted_state) == 1
    g = lifted_state[0]
    assert not g.depends_on(t_idx)
    assert not g.depends_on(x1_idx)
    assert not g.depends_on(u_idx)

    lifted_control = [
        blk.constraint for blk in localizing
        if blk.constraint.depends_on(u_idx)
    ]
    assert any(
        gc.coefficient(_exp(space, u_idx, 2)) == -1.0 and not gc.depends_on(x2_idx)
        for gc in lifted_control
    )


# ---------------------------------------------------------------------------
# assembly validation


def test_assembly_rejects_odd_degree():
    scenario, _, _ = _scalar_scenario(degree=3)
    with pytest.raises(AssemblyError, match="even"):
        assemble_primal(scenario)


def test_assembly_rejects_cost_exceeding_degree():
    scenario, _, _ = scalar_transfer_scenario()
    space = scenario.dynamics.space
    big = parse_polynomial("u1^6", space)
    scenario = dataclasses.replace(scenario, running_cost=big, degree=4)
    with pytest.raises(AssemblyError, match="cost degree"):
        assemble_primal(scenario)


def test_assembly_rejects_degree_too_small_for_drift():
    space = VariableSpace.for_control_problem(1, 1)
    dyn = DynamicsSpec(space=space, drift=(parse_polynomial("x1^3", space),),
                       diffusion=np.zeros((1, 1)), horizon=1.0)
    scenario = ScenarioSpec(
        dynamics=dyn, degree=2, num_phases=1,
        initial=MeasureSpec.dirac([0.0]), terminal=MeasureSpec.free(1),
        running_cost=parse_polynomial("u1^2", space),
    )
    with pytest.raises(AssemblyError, match="too small"):
        assemble_primal(scenario)


def test_assembly_rejects_free_initial_measure():
    scenario, _, _ = _scalar_scenario(initial=MeasureSpec.free(1))
    with pytest.raises(AssemblyError, match="initial"):
        assemble_primal(scenario)


# ---------------------------------------------------------------------------
# semantic checks against the analytic Ornstein-Uhlenbeck law


def test_assembled_rows_annihilate_analytic_ou_moments():
    scenario, state_box, _ = ou_validation_scenario(degree=6, phases=8)
    scaled, _ = scale_scenario(scenario, state_box)
    assembled = assemble_primal(scaled)
    r = float(state_box[1][0])
    T = OU_PARAMS["horizon"]
    residual = ou_equality_residual(
        assembled,
        x0=OU_PARAMS["x0"] / r,
        v0=OU_PARAMS["v0"] / r**2,
        lam=T * OU_PARAMS["lam"],
        D=T * OU_PARAMS["D"] / r**2,
    )
    assert residual < 1e-8


def test_phase_count_does_not_move_the_optimum():
    values = {}
    for phases in (1, 4):
        scenario, state_box, control_box = scalar_transfer_scenario(phases=phases)
        _, _, solution = solve_scenario(scenario, state_box, control_box)
        assert solution.status == "optimal"
        values[phases] = solution.primal_objective
    assert values[1] == pytest.approx(values[4], rel=1e-3)


def test_occupation_masses_sum_to_scaled_horizon():
    scenario, state_box, control_box = scalar_transfer_scenario(phases=2)
    assembled, _, solution = solve_scenario(scenario, state_box, control_box)
    assert solution.status == "optimal"
    total = sum(
        assembled.measure_moments(("mu", k), solution.primal).mass
        for k in (1, 2)
    )
    assert total == pytest.approx(1.0, abs=1e-6)
