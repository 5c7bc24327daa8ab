"""Post-solve analysis: interface statistics, value functions, artifact export.

All quantities are reported in the scenario's original coordinates when the
affine scaling record from ``scale_scenario`` is supplied; the solve itself
runs on the scaled program.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .conic import ConicSolution
from .generator import apply_generator
from .poly import Polynomial, VariableSpace
from .relaxation import AffineScaling, AssembledProgram

GRID_POINTS = 10_000
GRID_SEED = 20_240_901


class PostprocessError(ValueError):
    pass


def _require_optimal(solution: ConicSolution, what: str) -> None:
    if solution.status != "optimal":
        raise PostprocessError(
            f"{what} requires an optimal solve, got status {solution.status!r}"
        )


@dataclass(frozen=True)
class StatisticsTrace:
    """Interface-measure statistics at the phase breakpoints.

    ``raw_moments[k]`` maps state exponents of degree <= 2 to unnormalized
    moments of the interface measure at breakpoint k; means and covariances
    are mass-normalized.
    """

    breakpoints: np.ndarray           # (K+1,)
    means: np.ndarray                 # (K+1, dx)
    covariances: np.ndarray           # (K+1, dx, dx)
    masses: np.ndarray                # (K+1,)
    raw_moments: tuple                # of dict {exponent: value}
    phase_costs: np.ndarray           # (K,) expected running cost per phase

    @property
    def num_phases(self) -> int:
        return len(self.phase_costs)


def interface_statistics(solution: ConicSolution, assembled: AssembledProgram,
                         scaling: AffineScaling | None = None) -> StatisticsTrace:
    """Read degree-<=2 interface moments and map them to original coordinates."""
    _require_optimal(solution, "interface_statistics")
    scenario = assembled.scenario
    dx = scenario.dynamics.state_dim
    K = scenario.num_phases
    if scaling is None:
        t_scale = 1.0
        x_off = np.zeros(dx)
        x_scale = np.ones(dx)
    else:
        t_scale = scaling.time_scale
        x_off = np.asarray(scaling.state_offset, dtype=float)
        x_scale = np.asarray(scaling.state_scale, dtype=float)

    breakpoints = np.array([t * t_scale for t in assembled.times])
    means = np.zeros((K + 1, dx))
    covs = np.zeros((K + 1, dx, dx))
    masses = np.zeros(K + 1)
    raws = []
    zero = (0,) * dx

    def unit(i):
        e = [0] * dx
        e[i] = 1
        return tuple(e)

    for k in range(K + 1):
        mom = assembled.measure_moments(("nu", k), solution.primal)
        mass = mom.value(zero)
        masses[k] = mass
        m1 = np.array([mom.value(unit(i)) for i in range(dx)]) / mass
        m2 = np.zeros((dx, dx))
        for i in range(dx):
            for j in range(i, dx):
                e = list(zero)
                e[i] += 1
                e[j] += 1
                m2[i, j] = m2[j, i] = mom.value(tuple(e)) / mass
        mean = x_off + x_scale * m1
        second = (np.outer(x_off, x_off)
                  + np.outer(x_off, x_scale * m1)
                  + np.outer(x_scale * m1, x_off)
                  + np.outer(x_scale, x_scale) * m2)
        cov = second - np.outer(mean, mean)
        cov = (cov + cov.T) / 2.0
        means[k] = mean
        covs[k] = cov
        raw = {zero: mass}
        for i in range(dx):
            raw[unit(i)] = mass * mean[i]
            for j in range(i, dx):
                e = list(zero)
                e[i] += 1
                e[j] += 1
                raw[tuple(e)] = mass * second[i, j]
        raws.append(raw)

    costs = np.zeros(K)
    for k in range(1, K + 1):
        mu = assembled.measure_moments(("mu", k), solution.primal)
        costs[k - 1] = mu.pair(scenario.running_cost)

    return StatisticsTrace(breakpoints=breakpoints, means=means, covariances=covs,
                           masses=masses, raw_moments=tuple(raws), phase_costs=costs)


@dataclass(frozen=True)
class ValueFunctionEstimate:
    """Per-phase dual value functions recovered from equality multipliers.

    ``grid_margins[k]`` is the minimum of (generator of V_k) + running cost
    over the sampled phase-k domain; dual feasibility asks it to be >= 0 up
    to solver accuracy.  Margins are evaluated in the assembled (possibly
    scaled) coordinates, where they differ from original-coordinate margins
    only by the positive factor 1/time_scale.
    """

    phases: tuple                     # Polynomial per phase, dynamics space
    dual_objective: float
    grid_margins: np.ndarray          # (K,)
    grid_points: int


def recover_value_function(solution: ConicSolution, assembled: AssembledProgram,
                           scaling: AffineScaling | None = None,
                           grid_points: int = GRID_POINTS,
                           seed: int = GRID_SEED) -> ValueFunctionEstimate:
    """Assemble V_k from the weak-row multipliers and check dual feasibility.

    The multiplier of the weak row for test monomial v is the coefficient of
    v in V_k.  Mass-row multipliers contribute phase constants (telescoped so
    that pairing V against the boundary measures reproduces the conic dual
    objective); constants are annihilated by the generator and do not affect
    the feasibility margins.
    """
    _require_optimal(solution, "recover_value_function")
    scenario = assembled.scenario
    space = scenario.dynamics.space
    K = scenario.num_phases
    mults = assembled.value_multipliers(solution.equality_multipliers)
    mass_mults = {k: float(solution.equality_multipliers[row])
                  for k, row in assembled.mass_rows.items()}

    phases = []
    for k in range(1, K + 1):
        terms = {alpha: y for alpha, y in mults.get(k, {}).items() if y != 0.0}
        const = sum(c for j, c in mass_mults.items() if j >= k)
        if const:
            terms[(0,) * space.n_total] = terms.get((0,) * space.n_total, 0.0) + const
        phases.append(Polynomial(space, terms))

    margins = _dual_feasibility_margins(phases, assembled, grid_points, seed)
    dual_objective = solution.dual_objective + assembled.objective_offset

    if scaling is not None:
        phases = [_to_original_coordinates(v, scaling) for v in phases]

    return ValueFunctionEstimate(phases=tuple(phases), dual_objective=dual_objective,
                                 grid_margins=margins, grid_points=grid_points)


def _to_original_coordinates(v: Polynomial, scaling: AffineScaling) -> Polynomial:
    """Rewrite V(t', x') as a polynomial in the original (t, x)."""
    space = v.space
    offsets = np.zeros(space.n_total)
    scales = np.ones(space.n_total)
    t_idx = space.offset("time")
    scales[t_idx] = 1.0 / scaling.time_scale
    for i, idx in enumerate(space.indices("state")):
        offsets[idx] = -scaling.state_offset[i] / scaling.state_scale[i]
        scales[idx] = 1.0 / scaling.state_scale[i]
    if space.has_block("control"):
        for j, idx in enumerate(space.indices("control")):
            offsets[idx] = -scaling.control_offset[j] / scaling.control_scale[j]
            scales[idx] = 1.0 / scaling.control_scale[j]
    return v.substitute_affine(offsets, scales)


def _embed_support(g: Polynomial, space: VariableSpace, block: str) -> Polynomial:
    """Lift a support polynomial written on a single block into the full space."""
    if g.space == space:
        return g
    if g.space.n_total != space.dim(block):
        raise PostprocessError(
            f"support polynomial has {g.space.n_total} variables, expected the "
            f"{block} block of size {space.dim(block)}"
        )
    off = space.offset(block)
    return g.embed(space, [off + i for i in range(g.space.n_total)])


def _dual_feasibility_margins(phases, assembled: AssembledProgram,
                              grid_points: int, seed: int) -> np.ndarray:
    """Min of generator(V_k) + running cost over sampled support points.

    Points are drawn uniformly from the phase time window times [-1, 1] per
    state/control coordinate (the canonical scaled geometry) and filtered by
    the scenario's support inequalities.
    """
    scenario = assembled.scenario
    dyn = scenario.dynamics
    space = dyn.space
    n = space.n_total
    t_idx = space.offset("time")
    rng = np.random.default_rng(seed)
    guards = [_embed_support(g, space, "state") for g in scenario.state_support]
    guards += [_embed_support(g, space, "control") for g in scenario.control_support]

    margins = np.zeros(len(phases))
    for k, v in enumerate(phases):
        q = apply_generator(v, dyn) + scenario.running_cost
        pts = rng.uniform(-1.0, 1.0, size=(grid_points, n))
        t0, t1 = assembled.times[k], assembled.times[k + 1]
        pts[:, t_idx] = t0 + (pts[:, t_idx] + 1.0) / 2.0 * (t1 - t0)
        keep = np.ones(grid_points, dtype=bool)
        for g in guards:
            keep &= g.eval_many(pts) >= 0.0
        vals = q.eval_many(pts[keep])
        margins[k] = float(vals.min()) if len(vals) else np.nan
    return margins


# ----------------------------------------------------------------- export


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def export_trace(trace: StatisticsTrace, value_fn: ValueFunctionEstimate,
                 prefix: str, solution: ConicSolution,
                 assembled: AssembledProgram) -> dict:
    """Write stats.csv, phases.csv, value_fn.txt and summary.json.

    ``prefix`` is a literal filesystem prefix ("out/run_" gives
    out/run_stats.csv ...).  All numbers are printed with 12 significant
    digits; the summary's timing block holds deterministic work counters so
    repeated runs produce byte-identical artifacts.
    """
    parent = os.path.dirname(prefix)
    if parent:
        os.makedirs(parent, exist_ok=True)
    dx = trace.means.shape[1]
    paths = {}

    path = prefix + "stats.csv"
    paths["stats"] = path
    header = ["t"] + [f"mean_x{i+1}" for i in range(dx)]
    header += [f"cov_x{i+1}_x{j+1}" for i in range(dx) for j in range(i, dx)]
    lines = [",".join(header)]
    for k in range(len(trace.breakpoints)):
        row = [_fmt(trace.breakpoints[k])]
        row += [_fmt(v) for v in trace.means[k]]
        row += [_fmt(trace.covariances[k][i, j])
                for i in range(dx) for j in range(i, dx)]
        lines.append(",".join(row))
    _write_text(path, "\n".join(lines) + "\n")

    path = prefix + "phases.csv"
    paths["phases"] = path
    lines = ["phase,t_start,t_end,expected_cost"]
    for k in range(trace.num_phases):
        lines.append(",".join([
            str(k + 1), _fmt(trace.breakpoints[k]), _fmt(trace.breakpoints[k + 1]),
            _fmt(trace.phase_costs[k]),
        ]))
    _write_text(path, "\n".join(lines) + "\n")

    path = prefix + "value_fn.txt"
    paths["value_fn"] = path
    chunks = []
    for k, v in enumerate(value_fn.phases):
        chunks.append(f"phase {k+1} on t in [{_fmt(trace.breakpoints[k])}, "
                      f"{_fmt(trace.breakpoints[k+1])}]:")
        chunks.append("  V = " + v.text())
    _write_text(path, "\n".join(chunks) + "\n")

    path = prefix + "summary.json"
    paths["summary"] = path
    program = assembled.program
    summary = {
        "objective": _num(solution.primal_objective + assembled.objective_offset),
        "dual_objective": _num(value_fn.dual_objective),
        "status": solution.status,
        "residuals": {k: _num(v) for k, v in sorted(solution.residuals.items())},
        "phase_costs": [_num(c) for c in trace.phase_costs],
        "masses": [_num(m) for m in trace.masses],
        "dual_feasibility_margins": [_num(m) for m in value_fn.grid_margins],
        "timings": {
            "solver_iterations": int(solution.iterations),
            "variables": int(program.A.shape[1]),
            "equality_rows": int(program.A.shape[0]),
        },
    }
    _write_text(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return paths


def _num(x) -> float:
    return float(f"{float(x):.12g}")


def _write_text(path: str, content: str) -> None:
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(content)
    except OSError as err:
        raise PostprocessError(f"failed writing {path}: {err}") from err
