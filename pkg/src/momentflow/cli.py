"""Command-line interface: solve scenario configs, fit Christoffel costs,
run the built-in validation suite.

Exit codes for ``solve``: 0 optimal, 1 configuration error, 2 infeasible or
unbounded (with a certificate summary), 3 numerical trouble or iteration
limit.  ``fit-christoffel`` and ``check`` use 0 on success, 1 on failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from importlib import resources

import numpy as np

from .christoffel import (christoffel_poly, cost_in_original_coordinates,
                          empirical_moment_matrix, load_samples)
from .config import ConfigError, RunConfig, fit_cost, load_config
from .ipm import SolverSettings, solve
from .moments import boundary_moments, localizing_matrix
from .relaxation import AssemblyError, assemble_primal, scale_scenario


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def examples_dir():
    """Directory of the shipped example configurations."""
    return resources.files("momentflow") / "examples"


def resolve_config(arg: str) -> str:
    """A literal path, or the bare name of a shipped example config."""
    if os.path.exists(arg):
        return arg
    candidate = examples_dir() / f"{arg}.yaml"
    if candidate.is_file():
        return str(candidate)
    shipped = sorted(p.name[:-5] for p in examples_dir().iterdir()
                     if p.name.endswith(".yaml"))
    raise ConfigError(
        f"config {arg!r} is neither a file nor a shipped example "
        f"(shipped: {', '.join(shipped)})"
    )


def dirac_support_certificate(scenario) -> str | None:
    """Presolve infeasibility oracle for fixed dirac boundary measures.

    A dirac outside the semialgebraic support makes some localizing matrix
    indefinite for every feasible moment vector, so the relaxation is
    infeasible at any degree.  Returns a human-readable certificate, or None.
    """
    d = scenario.degree
    targets = [("initial", scenario.initial, tuple(scenario.state_support))]
    targets.append(("terminal", scenario.terminal,
                    tuple(scenario.state_support) + tuple(scenario.terminal_support)))
    for which, measure, inequalities in targets:
        if measure.kind != "dirac" or not inequalities:
            continue
        y = boundary_moments(measure, 2 * d)
        for g in inequalities:
            order = (2 * d - g.degree()) // 2
            if order < 0:
                continue
            eigs = np.linalg.eigvalsh(localizing_matrix(y, g, order))
            if eigs[0] < -1e-9:
                point = ", ".join(_fmt(v) for v in measure.point)
                return (
                    f"support inequality '{g.text()}' has a localizing matrix with "
                    f"minimum eigenvalue {eigs[0]:.3e} < 0 at the fixed {which} "
                    f"dirac point ({point}) [scaled coordinates]: the constraint "
                    f"set is empty at every relaxation degree"
                )
    return None


def _print_solution_lines(name: str, sol, objective: float) -> None:
    res = sol.residuals
    print(f"scenario    : {name}")
    print(f"status      : {sol.status}")
    print(f"objective   : {_fmt(objective)}")
    print(f"dual obj    : {_fmt(sol.dual_objective)}")
    print(f"residuals   : primal {res['primal_feasibility']:.3e}  "
          f"dual {res['dual_feasibility']:.3e}  gap {res['gap']:.3e}")
    print(f"iterations  : {sol.iterations}")


def cmd_solve(config_arg: str, output_prefix: str | None = None) -> int:
    start = time.perf_counter()
    try:
        cfg = load_config(resolve_config(config_arg))
        scenario = fit_cost(cfg)
        scaled, scaling = scale_scenario(scenario, cfg.state_box, cfg.control_box)
    except (ConfigError, ValueError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1

    certificate = dirac_support_certificate(scaled)
    if certificate is not None:
        print(f"scenario    : {cfg.name}")
        print("status      : primal_infeasible (presolve)")
        print(f"certificate : {certificate}")
        return 2

    try:
        assembled = assemble_primal(scaled)
    except AssemblyError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    sol = solve(assembled.program, SolverSettings(tol=cfg.tol, max_iters=cfg.max_iters))
    objective = sol.primal_objective + assembled.objective_offset

    if sol.status == "optimal":
        from .postprocess import (export_trace, interface_statistics,
                                  recover_value_function)

        trace = interface_statistics(sol, assembled, scaling)
        value_fn = recover_value_function(sol, assembled, scaling)
        prefix = output_prefix if output_prefix is not None else cfg.output_prefix
        paths = export_trace(trace, value_fn, prefix, sol, assembled)
        _print_solution_lines(cfg.name, sol, objective)
        print(f"wall time   : {time.perf_counter() - start:.2f} s")
        print("artifacts   : " + "  ".join(paths[k] for k in sorted(paths)))
        return 0

    _print_solution_lines(cfg.name, sol, objective)
    print(f"wall time   : {time.perf_counter() - start:.2f} s")
    A, b, c = assembled.program.A, assembled.program.b, assembled.program.objective
    if sol.status == "primal_infeasible":
        y, z = sol.equality_multipliers, sol.cone_duals
        print("certificate : Farkas dual ray y with b'y = "
              f"{_fmt(float(b @ y))} > 0 and ||A'y + z||_inf = "
              f"{np.abs(A.T @ y + z).max():.3e}; no feasible moment vector exists")
        return 2
    if sol.status == "dual_infeasible":
        x = sol.primal
        print("certificate : improving primal ray x with c'x = "
              f"{_fmt(float(c @ x))} < 0 and ||A x||_inf = "
              f"{np.abs(A @ x).max():.3e}; the objective is unbounded below")
        return 2
    return 3


def cmd_fit_christoffel(csv: str, columns: list[str], degree: int,
                        epsilon: float, out: str) -> int:
    try:
        if degree < 0:
            raise ValueError("degree must be >= 0")
        samples = load_samples(csv, columns)
        emm = empirical_moment_matrix(samples, degree, epsilon)
        lam = christoffel_poly(emm)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    original = cost_in_original_coordinates(lam, samples)

    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    poly_path = out + "christoffel.txt"
    with open(poly_path, "w") as fh:
        fh.write(f"# Christoffel polynomial, degree {degree}, "
                 f"{samples.size} samples, epsilon {_fmt(emm.epsilon)}\n")
        fh.write("normalized coordinates (each column mapped to [-1, 1]):\n")
        fh.write(f"  lambda = {lam.text()}\n")
        fh.write("normalization transform (x_norm = (x - offset) / scale):\n")
        for j, col in enumerate(samples.columns):
            fh.write(f"  {col}: offset {_fmt(samples.offset[j])}, "
                     f"scale {_fmt(samples.scale[j])}\n")
        fh.write("original coordinates:\n")
        fh.write(f"  lambda = {original.text()}\n")

    grid_path = out + "grid.csv"
    dim = samples.dimension
    if dim == 1:
        pts = np.linspace(-1.0, 1.0, 201)[:, None]
    elif dim == 2:
        axis = np.linspace(-1.0, 1.0, 41)
        g0, g1 = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([g0.ravel(), g1.ravel()])
    else:
        pts = samples.samples  # evaluate at the data itself beyond 2-D
    values = lam.eval_many(pts)
    originals = samples.denormalize(pts)
    with open(grid_path, "w") as fh:
        fh.write(",".join(samples.columns) + ",lambda\n")
        for row, val in zip(originals, values):
            fh.write(",".join(_fmt(v) for v in row) + "," + _fmt(val) + "\n")

    print(f"samples     : {samples.size} x {dim} from {csv}")
    print(f"basis size  : {emm.side}")
    print(f"epsilon     : {_fmt(emm.epsilon)}")
    print(f"artifacts   : {poly_path}  {grid_path}")
    return 0


def cmd_check(name_filter: str | None, tol: float) -> int:
    from .checks import run_checks

    results = run_checks(name_filter, tol=tol)
    if not results:
        print(f"no checks match filter {name_filter!r}", file=sys.stderr)
        return 1
    width = max(len(r.name) for r in results)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{mark}  {r.name:<{width}}  {r.seconds:6.2f} s  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed} passed, {failed} failed")
    return 0 if failed == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="momentflow",
        description="Moment-SDP solver for stochastic optimal control and "
                    "transport of polynomial systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser(
        "solve", help="solve a scenario configuration and export artifacts")
    p_solve.add_argument("config",
                         help="path to a YAML config, or a shipped example name")
    p_solve.add_argument("--output-prefix", default=None,
                         help="override output.prefix from the config")

    p_fit = sub.add_parser(
        "fit-christoffel", help="fit a Christoffel polynomial to CSV samples")
    p_fit.add_argument("--csv", required=True, help="sample CSV with a header row")
    p_fit.add_argument("--columns", required=True,
                       help="comma-separated column names to use, in order")
    p_fit.add_argument("--degree", type=int, default=4)
    p_fit.add_argument("--epsilon", type=float, default=0.0,
                       help="moment-matrix ridge (default 0: exact inverse)")
    p_fit.add_argument("--out", required=True, help="output path prefix")

    p_check = sub.add_parser("check", help="run the built-in validation suite")
    p_check.add_argument("--filter", default=None,
                         help="run only checks whose name contains this substring")
    p_check.add_argument("--tol", type=float, default=1e-8,
                         help="solver tolerance used by the oracle solves")

    args = parser.parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args.config, args.output_prefix)
    if args.command == "fit-christoffel":
        columns = [c.strip() for c in args.columns.split(",") if c.strip()]
        return cmd_fit_christoffel(args.csv, columns, args.degree, args.epsilon,
                                   args.out)
    return cmd_check(args.filter, args.tol)


if __name__ == "__main__":
    sys.exit(main())
