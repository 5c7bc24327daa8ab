"""Built-in validation suite with closed-form oracles.

Provides reference scenarios whose optimal values or moment curves are known
analytically (minimum-energy transfer, double integrator, scalar
Ornstein-Uhlenbeck relaxation), an exact Ornstein-Uhlenbeck moment oracle,
and a suite of named checks used by ``momentflow check`` and the test suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from math import comb

import numpy as np

from .christoffel import christoffel_poly, empirical_moment_matrix, make_sample_set
from .generator import DynamicsSpec
from .ipm import SolverSettings, solve
from .moments import MeasureSpec
from .poly import Polynomial, VariableSpace, parse_polynomial
from .relaxation import ScenarioSpec, assemble_primal, scale_scenario

# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck moment oracle
#
# For dx = -lam*x dt + sigma dW with D = sigma^2/2 and x(0) ~ N(x0, v0):
#   mean(t) = x0 exp(-lam t)
#   var(t)  = D/lam + (v0 - D/lam) exp(-2 lam t)
# and, the law staying Gaussian, E[x^j(t)] follows the recursion
#   E_j = mean * E_{j-1} + (j-1) * var * E_{j-2},
# so every E[x^j(t)] is a finite combination sum_l c_l exp(-l lam t).


def ou_mean_var(t, x0: float, v0: float, lam: float, D: float):
    """Exact mean and variance of the OU process at time(s) t."""
    t = np.asarray(t, dtype=float)
    vinf = D / lam
    return x0 * np.exp(-lam * t), vinf + (v0 - vinf) * np.exp(-2.0 * lam * t)


def ou_moment_curves(x0: float, v0: float, lam: float, D: float, max_degree: int):
    """E[x^j(t)] for j = 0..max_degree as dicts {l: c} meaning sum c*exp(-l*lam*t)."""
    if lam <= 0:
        raise ValueError("ou oracle needs a positive decay rate")
    vinf = D / lam
    curves = [{0: 1.0}, {1: float(x0)}]
    for j in range(2, max_degree + 1):
        cur: dict[int, float] = {}
        for l, c in curves[j - 1].items():
            cur[l + 1] = cur.get(l + 1, 0.0) + x0 * c
        for l, c in curves[j - 2].items():
            cur[l] = cur.get(l, 0.0) + (j - 1) * vinf * c
            cur[l + 2] = cur.get(l + 2, 0.0) + (j - 1) * (v0 - vinf) * c
        curves.append(cur)
    return curves[: max_degree + 1]


def _t_power_exp_integral(a: int, rate: float, t0: float, t1: float) -> float:
    """Closed form of the integral of t^a * exp(-rate*t) over [t0, t1]."""
    if rate == 0.0:
        return (t1 ** (a + 1) - t0 ** (a + 1)) / (a + 1)
    if a == 0:
        return (np.exp(-rate * t0) - np.exp(-rate * t1)) / rate
    boundary = (t0**a * np.exp(-rate * t0) - t1**a * np.exp(-rate * t1)) / rate
    return boundary + (a / rate) * _t_power_exp_integral(a - 1, rate, t0, t1)


def ou_occupation_moment(a: int, j: int, t0: float, t1: float, curves, lam: float) -> float:
    """Integral over [t0, t1] of t^a E[x^j(t)] dt."""
    return sum(c * _t_power_exp_integral(a, l * lam, t0, t1) for l, c in curves[j].items())


def ou_analytic_moment_vector(assembled, x0: float, v0: float, lam: float, D: float):
    """Fill the moment variables of an assembled scalar OU program with the
    exact moments of the OU law (parameters given in the assembled, i.e.
    scaled, coordinates).  Returns an array of length n_moment_vars."""
    scen = assembled.scenario
    if scen.dynamics.state_dim != 1 or scen.dynamics.space.has_block("control"):
        raise ValueError("the OU oracle covers scalar uncontrolled scenarios only")
    curves = ou_moment_curves(x0, v0, lam, D, 2 * scen.degree)
    times = assembled.times
    xvec = np.zeros(assembled.n_moment_vars)
    t_vals = {l: np.exp(-lam * np.asarray(times) * l) for l in range(2 * scen.degree + 3)}
    for (measure, exponent), col in assembled.index_map.items():
        kind, k = measure
        if kind == "mu":
            a, j = exponent
            xvec[col] = ou_occupation_moment(a, j, times[k - 1], times[k], curves, lam)
        else:
            (j,) = exponent
            xvec[col] = sum(c * t_vals[l][k] for l, c in curves[j].items())
    return xvec


def ou_equality_residual(assembled, x0: float, v0: float, lam: float, D: float) -> float:
    """Infinity norm of the weak and mass equality rows evaluated at the
    analytic OU moments: the exact law must satisfy the transport constraints."""
    xvec = ou_analytic_moment_vector(assembled, x0, v0, lam, D)
    A, b = assembled.program.A, assembled.program.b
    rows = sorted(set(assembled.weak_rows.values()) | set(assembled.mass_rows.values()))
    res = A[rows, : assembled.n_moment_vars] @ xvec - b[rows]
    return float(np.abs(res).max())


# ---------------------------------------------------------------------------
# Reference scenarios


def scalar_transfer_scenario(degree: int = 4, phases: int = 1):
    """Deterministic scalar transfer dx = u dt from 0 to 1 in unit time with
    energy cost; the optimal value is exactly 1 (constant control u = 1)."""
    space = VariableSpace.for_control_problem(1, 1)
    dyn = DynamicsSpec(
        space=space,
        drift=(parse_polynomial("u1", space),),
        diffusion=np.zeros((1, 1)),
        horizon=1.0,
    )
    scenario = ScenarioSpec(
        dynamics=dyn,
        degree=degree,
        num_phases=phases,
        initial=MeasureSpec.dirac([0.0]),
        terminal=MeasureSpec.dirac([1.0]),
        running_cost=parse_polynomial("u1^2", space),
        name="scalar_transfer",
    )
    return scenario, (np.array([-0.5]), np.array([1.5])), (np.array([-3.0]), np.array([3.0]))


def double_integrator_scenario(degree: int = 6, phases: int = 1):
    """Minimum-energy double integrator rest-to-rest transfer; the Euler-
    Lagrange solution u(t) = 6 - 12t gives the exact optimal value 12."""
    space = VariableSpace.for_control_problem(2, 1)
    dyn = DynamicsSpec(
        space=space,
        drift=(parse_polynomial("x2", space), parse_polynomial("u1", space)),
        diffusion=np.zeros((2, 2)),
        horizon=1.0,
    )
    scenario = ScenarioSpec(
        dynamics=dyn,
        degree=degree,
        num_phases=phases,
        initial=MeasureSpec.dirac([0.0, 0.0]),
        terminal=MeasureSpec.dirac([1.0, 0.0]),
        running_cost=parse_polynomial("u1^2", space),
        name="double_integrator",
    )
    state_box = (np.array([-0.5, -2.0]), np.array([1.5, 2.0]))
    control_box = (np.array([-8.0]), np.array([8.0]))
    return scenario, state_box, control_box


OU_PARAMS = {"x0": 1.0, "v0": 0.0, "lam": 1.0, "D": 0.25, "horizon": 2.0}


def ou_validation_scenario(degree: int = 6, phases: int = 8):
    """Uncontrolled scalar Ornstein-Uhlenbeck relaxation dx = -x dt + sigma dW
    with sigma^2 = 0.5, started at a unit dirac, free terminal law, zero cost.
    The moment constraints pin every measure to the exact Gaussian law."""
    space = VariableSpace.for_control_problem(1, 0)
    dyn = DynamicsSpec(
        space=space,
        drift=(parse_polynomial("-x1", space),),
        diffusion=np.array([[OU_PARAMS["D"]]]),
        horizon=OU_PARAMS["horizon"],
    )
    scenario = ScenarioSpec(
        dynamics=dyn,
        degree=degree,
        num_phases=phases,
        initial=MeasureSpec.dirac([OU_PARAMS["x0"]]),
        terminal=MeasureSpec.free(1),
        running_cost=Polynomial.zero(space),
        name="ou_validation",
    )
    return scenario, (np.array([-3.0]), np.array([3.0])), None


def solve_scenario(scenario, state_box, control_box=None, tol: float = 1e-8,
                   max_iters: int = 200):
    """Scale, assemble and solve a scenario; returns (assembled, scaling, solution)."""
    scaled, scaling = scale_scenario(scenario, state_box, control_box)
    assembled = assemble_primal(scaled)
    solution = solve(assembled.program, SolverSettings(tol=tol, max_iters=max_iters))
    return assembled, scaling, solution


# ---------------------------------------------------------------------------
# Check suite


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


class _Cache:
    """Lazily solved reference problems shared between checks."""

    def __init__(self, tol: float, max_iters: int):
        self.tol = tol
        self.max_iters = max_iters
        self._store: dict = {}

    def solved(self, key: str):
        if key not in self._store:
            if key == "scalar_transfer":
                scen, sb, cb = scalar_transfer_scenario()
            elif key.startswith("double_integrator_d"):
                scen, sb, cb = double_integrator_scenario(degree=int(key.rsplit("d", 1)[1]))
            elif key == "ou_validation":
                scen, sb, cb = ou_validation_scenario()
            else:
                raise KeyError(key)
            self._store[key] = solve_scenario(scen, sb, cb, tol=self.tol,
                                              max_iters=self.max_iters)
        return self._store[key]

    def objective(self, key: str) -> float:
        assembled, _, sol = self.solved(key)
        return sol.primal_objective + assembled.objective_offset


def _check_scalar_transfer(cache: _Cache) -> tuple[bool, str]:
    _, _, sol = cache.solved("scalar_transfer")
    obj = cache.objective("scalar_transfer")
    ok = sol.status == "optimal" and abs(obj - 1.0) <= 1e-4
    return ok, (f"status {sol.status}, objective {obj:.8f} "
                f"(exact 1, tolerance 1e-4), {sol.iterations} iterations")


def _check_double_integrator(cache: _Cache) -> tuple[bool, str]:
    _, _, sol = cache.solved("double_integrator_d6")
    obj = cache.objective("double_integrator_d6")
    ok = sol.status == "optimal" and abs(obj - 12.0) <= 0.01 * 12.0
    return ok, (f"status {sol.status}, objective {obj:.6f} "
                f"(exact 12, tolerance 1%), {sol.iterations} iterations")


def _check_ou_moments(cache: _Cache) -> tuple[bool, str]:
    from .postprocess import interface_statistics

    assembled, scaling, sol = cache.solved("ou_validation")
    if sol.status != "optimal":
        return False, f"status {sol.status}"
    trace = interface_statistics(sol, assembled, scaling)
    p = OU_PARAMS
    mean_ref, var_ref = ou_mean_var(trace.breakpoints, p["x0"], p["v0"], p["lam"], p["D"])
    mean_err = np.abs(trace.means[:, 0] - mean_ref)
    var_err = np.abs(trace.covariances[:, 0, 0] - var_ref)
    mean_ok = bool(np.all(mean_err <= 0.02 * np.abs(mean_ref)))
    var_ok = bool(np.all(var_err <= 0.05 * var_ref + 1e-12))
    worst_m = float(np.max(mean_err / np.abs(mean_ref)))
    worst_v = float(np.max(var_err / np.where(var_ref > 0, var_ref, 1.0)))
    return mean_ok and var_ok, (
        f"max mean error {worst_m:.2e} (limit 2e-2), "
        f"max variance error {worst_v:.2e} (limit 5e-2) over {len(trace.breakpoints)} breakpoints"
    )


def _check_christoffel_trace(cache: _Cache) -> tuple[bool, str]:
    rng = np.random.default_rng(7_141_618)
    worst = 0.0
    for trial in range(20):
        degree = 2 + trial % 3
        dim = 1 + (trial // 3) % 3
        side = comb(dim + degree, degree)
        raw = rng.standard_normal((3 * side, dim))
        ss = make_sample_set(raw)
        emm = empirical_moment_matrix(ss, degree, epsilon=0.0)
        lam = christoffel_poly(emm)
        avg = float(np.mean(lam.eval_many(ss.samples)))
        worst = max(worst, abs(avg - side) / side)
    return worst < 1e-6, f"max relative trace defect {worst:.2e} over 20 sets (limit 1e-6)"


_DUALITY_KEYS = ("scalar_transfer", "double_integrator_d2", "double_integrator_d4",
                 "double_integrator_d6", "ou_validation")


def _check_weak_duality(cache: _Cache) -> tuple[bool, str]:
    worst_excess = -np.inf
    for key in _DUALITY_KEYS:
        _, _, sol = cache.solved(key)
        if sol.status != "optimal":
            return False, f"{key}: status {sol.status}"
        worst_excess = max(worst_excess, sol.dual_objective - sol.primal_objective)
    gaps = []
    for key in ("scalar_transfer", "double_integrator_d6"):
        _, _, sol = cache.solved(key)
        gaps.append(abs(sol.primal_objective - sol.dual_objective)
                    / max(1.0, abs(sol.primal_objective)))
    ok = worst_excess <= 10 * cache.tol and max(gaps) < 1e-4
    return ok, (f"max dual-primal excess {worst_excess:.2e} over {len(_DUALITY_KEYS)} "
                f"solves (limit {10 * cache.tol:.0e}); worst relative gap {max(gaps):.2e} "
                f"(limit 1e-4)")


def _check_hierarchy(cache: _Cache) -> tuple[bool, str]:
    objs = [cache.objective(f"double_integrator_d{d}") for d in (2, 4, 6)]
    worst = max(objs[0] - objs[1], objs[1] - objs[2])
    return worst < 1e-6, (
        "objectives " + " <= ".join(f"{o:.7f}" for o in objs)
        + f", max monotonicity violation {worst:.2e} (limit 1e-6)"
    )


_CHECKS = (
    ("scalar_transfer", _check_scalar_transfer),
    ("double_integrator", _check_double_integrator),
    ("ou_moments", _check_ou_moments),
    ("christoffel_trace", _check_christoffel_trace),
    ("weak_duality", _check_weak_duality),
    ("hierarchy_monotonicity", _check_hierarchy),
)


def run_checks(name_filter: str | None = None, tol: float = 1e-8,
               max_iters: int = 200) -> list[CheckResult]:
    """Run the built-in oracle suite; `name_filter` selects checks by substring."""
    cache = _Cache(tol=tol, max_iters=max_iters)
    results = []
    for name, fn in _CHECKS:
        if name_filter and name_filter not in name:
            continue
        start = time.perf_counter()
        try:
            passed, detail = fn(cache)
        except Exception as err:  # a crashed check is a failed check
            passed, detail = False, f"raised {type(err).__name__}: {err}"
        results.append(CheckResult(name, passed, detail, time.perf_counter() - start))
    return results
