"""Scenario configuration files: strict-schema parsing and validation.

A config is a YAML document with sections ``dynamics``, ``measures``,
``support``, ``cost``, ``relaxation``, ``solver`` and ``output``.  Unknown
keys anywhere are rejected by name.  Polynomial strings use the canonical
variable names: ``t`` for time, ``x1..xn`` for states, ``u1..um`` for
controls; state/terminal support and terminal-cost strings are written in
the state variables only, control support in the control variables only.

The number of controls is declared by the control scaling box
(``relaxation.box.control``); drift and cost strings may then reference
``u1..um``.  File paths inside a config (sample CSVs) resolve relative to
the config file's directory; the output prefix resolves relative to the
working directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .generator import DynamicsSpec
from .moments import MeasureSpec, SupportSet
from .poly import Polynomial, VariableSpace, parse_polynomial
from .relaxation import ScenarioSpec


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class ChristoffelCost:
    csv: str
    columns: tuple[str, ...]
    states: tuple[int, ...]
    degree: int = 4
    epsilon: float | None = None
    lambda_control: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration, ready to build a scenario from."""

    name: str
    scenario: ScenarioSpec            # unscaled, in original coordinates
    state_box: tuple[np.ndarray, np.ndarray]
    control_box: tuple[np.ndarray, np.ndarray] | None
    christoffel: ChristoffelCost | None
    tol: float = 1e-8
    max_iters: int = 200
    output_prefix: str = "out/run_"
    base_dir: str = "."
    extra: dict = field(default_factory=dict)


_SECTIONS = ("name", "dynamics", "measures", "support", "cost",
             "relaxation", "solver", "output")


def _require_mapping(obj, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a mapping")
    return obj

def _check_keys(section: dict, allowed, where: str) -> None:
    unknown = [k for k in section if k not in allowed]
    if unknown:
        raise ConfigError(
            f"unknown key {where}.{unknown[0]!r} (allowed: {', '.join(sorted(allowed))})"
        )


def _get(section: dict, key: str, where: str, required: bool = True, default=None):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key {where}.{key}")
        return default
    return section[key]


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return value


def _as_vector(value, where: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where} must be a non-empty list of numbers")
    return np.array([_as_float(v, f"{where}[{i}]") for i, v in enumerate(value)])


def _as_matrix(value, where: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where} must be a non-empty list of rows")
    rows = [_as_vector(r, f"{where}[{i}]") for i, r in enumerate(value)]
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise ConfigError(f"{where} rows have inconsistent lengths")
    return np.vstack(rows)


def _parse_poly(text, space: VariableSpace, where: str) -> Polynomial:
    if not isinstance(text, str):
        raise ConfigError(f"{where} must be a polynomial string, got {text!r}")
    try:
        return parse_polynomial(text, space)
    except ValueError as err:
        raise ConfigError(f"{where}: {err}") from None


def _parse_box(value, where: str) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"{where} must be [lower, upper] coordinate lists")
    lo = _as_vector(value[0], f"{where}[0]")
    hi = _as_vector(value[1], f"{where}[1]")
    if lo.shape != hi.shape:
        raise ConfigError(f"{where} lower/upper lengths differ")
    if np.any(hi <= lo):
        raise ConfigError(f"{where} must have upper > lower in every coordinate")
    return lo, hi


def _parse_measure(section, where: str, dim: int, base_dir: str) -> MeasureSpec:
    section = _require_mapping(section, where)
    kind = _get(section, "kind", where)
    if kind == "dirac":
        _check_keys(section, ("kind", "point"), where)
        point = _as_vector(_get(section, "point", where), f"{where}.point")
        if len(point) != dim:
            raise ConfigError(f"{where}.point must have {dim} coordinates")
        return MeasureSpec.dirac(point)
    if kind == "gaussian":
        _check_keys(section, ("kind", "mean", "cov"), where)
        mean = _as_vector(_get(section, "mean", where), f"{where}.mean")
        cov = _as_matrix(_get(section, "cov", where), f"{where}.cov")
        if len(mean) != dim or cov.shape != (dim, dim):
            raise ConfigError(f"{where}: mean/cov must be ({dim},)/({dim},{dim})")
        return MeasureSpec.gaussian(mean, cov)
    if kind == "uniform_box":
        _check_keys(section, ("kind", "lower", "upper"), where)
        lo = _as_vector(_get(section, "lower", where), f"{where}.lower")
        hi = _as_vector(_get(section, "upper", where), f"{where}.upper")
        if len(lo) != dim or len(hi) != dim:
            raise ConfigError(f"{where}: lower/upper must have {dim} coordinates")
        return MeasureSpec.uniform_box(lo, hi)
    if kind == "empirical":
        _check_keys(section, ("kind", "csv", "columns"), where)
        csv_path = _get(section, "csv", where)
        columns = _get(section, "columns", where)
        if not isinstance(csv_path, str):
            raise ConfigError(f"{where}.csv must be a path string")
        if not isinstance(columns, list) or len(columns) != dim:
            raise ConfigError(f"{where}.columns must list {dim} column names")
        from .christoffel import load_samples

        sample_set = load_samples(os.path.join(base_dir, csv_path), columns)
        return MeasureSpec.empirical(sample_set.denormalize(sample_set.samples))
    if kind == "free":
        _check_keys(section, ("kind",), where)
        return MeasureSpec.free(dim)
    raise ConfigError(
        f"{where}.kind must be one of dirac, gaussian, uniform_box, empirical, "
        f"free; got {kind!r}"
    )


def _parse_support(entries, space: VariableSpace, where: str) -> tuple[Polynomial, ...]:
    if entries is None:
        return ()
    if not isinstance(entries, list):
        raise ConfigError(f"{where} must be a list of polynomial strings")
    return tuple(_parse_poly(s, space, f"{where}[{i}]") for i, s in enumerate(entries))


def load_config(path) -> RunConfig:
    """Parse and validate a YAML scenario configuration."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"config {path} is not valid YAML: {err}") from err
    doc = _require_mapping(doc, "config")
    _check_keys(doc, _SECTIONS, "config")
    base_dir = os.path.dirname(os.path.abspath(path))
    name = doc.get("name", os.path.splitext(os.path.basename(path))[0])
    if not isinstance(name, str):
        raise ConfigError("config.name must be a string")

    # ---- relaxation (read first: the control box fixes the control count)
    relax = _require_mapping(_get(doc, "relaxation", "config"), "relaxation")
    _check_keys(relax, ("degree", "phases", "box"), "relaxation")
    degree = _as_int(_get(relax, "degree", "relaxation"), "relaxation.degree")
    phases = _as_int(_get(relax, "phases", "relaxation", required=False, default=1),
                     "relaxation.phases")
    box = _require_mapping(_get(relax, "box", "relaxation"), "relaxation.box")
    _check_keys(box, ("state", "control"), "relaxation.box")
    state_box = _parse_box(_get(box, "state", "relaxation.box"), "relaxation.box.state")
    control_box = None
    if "control" in box:
        control_box = _parse_box(box["control"], "relaxation.box.control")

    # ---- dynamics
    dyn_sec = _require_mapping(_get(doc, "dynamics", "config"), "dynamics")
    _check_keys(dyn_sec, ("drift", "diffusion", "horizon"), "dynamics")
    drift_src = _get(dyn_sec, "drift", "dynamics")
    if not isinstance(drift_src, list) or not drift_src:
        raise ConfigError("dynamics.drift must be a non-empty list of polynomial strings")
    nx = len(drift_src)
    if len(state_box[0]) != nx:
        raise ConfigError(
            f"relaxation.box.state has {len(state_box[0])} coordinates but "
            f"dynamics.drift declares {nx} states"
        )
    nu = 0 if control_box is None else len(control_box[0])
    space = VariableSpace.for_control_problem(nx, nu)
    drift = tuple(_parse_poly(s, space, f"dynamics.drift[{i}]")
                  for i, s in enumerate(drift_src))
    horizon = _as_float(_get(dyn_sec, "horizon", "dynamics"), "dynamics.horizon")
    if horizon <= 0:
        raise ConfigError("dynamics.horizon must be positive")
    diff_src = _get(dyn_sec, "diffusion", "dynamics", required=False)
    diffusion = np.zeros((nx, nx)) if diff_src is None else _as_matrix(
        diff_src, "dynamics.diffusion")
    if diffusion.shape != (nx, nx):
        raise ConfigError(f"dynamics.diffusion must be {nx}x{nx}")

    # ---- measures
    meas = _require_mapping(_get(doc, "measures", "config"), "measures")
    _check_keys(meas, ("initial", "terminal"), "measures")
    initial = _parse_measure(_get(meas, "initial", "measures"),
                             "measures.initial", nx, base_dir)
    terminal = _parse_measure(_get(meas, "terminal", "measures"),
                              "measures.terminal", nx, base_dir)
    if initial.kind == "free":
        raise ConfigError("measures.initial.kind cannot be free")

    # ---- support
    state_space = VariableSpace.state_only(nx)
    control_space = VariableSpace((("control", nu),)) if nu else None
    sup = doc.get("support") or {}
    sup = _require_mapping(sup, "support")
    _check_keys(sup, ("state", "control", "terminal"), "support")
    state_sup = _parse_support(sup.get("state"), state_space, "support.state")
    control_sup = ()
    if sup.get("control") is not None:
        if control_space is None:
            raise ConfigError("support.control given but the scenario has no controls")
        control_sup = _parse_support(sup.get("control"), control_space, "support.control")
    terminal_sup = _parse_support(sup.get("terminal"), state_space, "support.terminal")

    # ---- cost
    cost_sec = _require_mapping(_get(doc, "cost", "config"), "cost")
    _check_keys(cost_sec, ("polynomial", "christoffel", "terminal"), "cost")
    poly_src = cost_sec.get("polynomial")
    chris_sec = cost_sec.get("christoffel")
    if (poly_src is None) == (chris_sec is None):
        raise ConfigError("cost needs exactly one of cost.polynomial, cost.christoffel")
    christoffel = None
    if poly_src is not None:
        running = _parse_poly(poly_src, space, "cost.polynomial")
    else:
        chris_sec = _require_mapping(chris_sec, "cost.christoffel")
        _check_keys(chris_sec, ("csv", "columns", "states", "degree", "epsilon",
                                "lambda_control"), "cost.christoffel")
        csv_path = _get(chris_sec, "csv", "cost.christoffel")
        if not isinstance(csv_path, str):
            raise ConfigError("cost.christoffel.csv must be a path string")
        columns = _get(chris_sec, "columns", "cost.christoffel")
        if not isinstance(columns, list) or not all(isinstance(c, str) for c in columns):
            raise ConfigError("cost.christoffel.columns must be a list of column names")
        states_src = chris_sec.get("states", [f"x{i+1}" for i in range(len(columns))])
        if not isinstance(states_src, list) or len(states_src) != len(columns):
            raise ConfigError(
                "cost.christoffel.states must list one state name per column")
        names = {f"x{i+1}": i for i in range(nx)}
        states = []
        for s in states_src:
            if s not in names:
                raise ConfigError(
                    f"cost.christoffel.states entry {s!r} is not a state (x1..x{nx})")
            states.append(names[s])
        epsilon = chris_sec.get("epsilon")
        if epsilon is not None:
            epsilon = _as_float(epsilon, "cost.christoffel.epsilon")
            if epsilon < 0:
                raise ConfigError("cost.christoffel.epsilon must be >= 0")
        christoffel = ChristoffelCost(
            csv=os.path.join(base_dir, csv_path),
            columns=tuple(columns),
            states=tuple(states),
            degree=_as_int(chris_sec.get("degree", 4), "cost.christoffel.degree"),
            epsilon=epsilon,
            lambda_control=_as_float(chris_sec.get("lambda_control", 0.0),
                                     "cost.christoffel.lambda_control"),
        )
        running = Polynomial.zero(space)  # filled in by fit_cost()
    terminal_cost = None
    if cost_sec.get("terminal") is not None:
        terminal_cost = _parse_poly(cost_sec["terminal"], state_space, "cost.terminal")

    # ---- solver
    sol = doc.get("solver") or {}
    sol = _require_mapping(sol, "solver")
    _check_keys(sol, ("tol", "max_iters"), "solver")
    tol = _as_float(sol.get("tol", 1e-8), "solver.tol")
    if not 0 < tol < 1:
        raise ConfigError("solver.tol must be in (0, 1)")
    max_iters = _as_int(sol.get("max_iters", 200), "solver.max_iters")
    if max_iters < 1:
        raise ConfigError("solver.max_iters must be >= 1")

    # ---- output
    out = doc.get("output") or {}
    out = _require_mapping(out, "output")
    _check_keys(out, ("prefix",), "output")
    prefix = out.get("prefix", f"out/{name}_")
    if not isinstance(prefix, str):
        raise ConfigError("output.prefix must be a string")

    dynamics = DynamicsSpec(space=space, drift=drift, diffusion=diffusion,
                            horizon=horizon)
    scenario = ScenarioSpec(
        dynamics=dynamics,
        degree=degree,
        num_phases=phases,
        initial=initial,
        terminal=terminal,
        running_cost=running,
        terminal_cost=terminal_cost,
        state_support=SupportSet(state_sup),
        control_support=SupportSet(control_sup),
        terminal_support=SupportSet(terminal_sup),
        name=name,
    )
    return RunConfig(name=name, scenario=scenario, state_box=state_box,
                     control_box=control_box, christoffel=christoffel,
                     tol=tol, max_iters=max_iters, output_prefix=prefix,
                     base_dir=base_dir)


def fit_cost(cfg: RunConfig) -> ScenarioSpec:
    """Return the scenario with its running cost resolved.

    Polynomial costs pass through; Christoffel costs are fitted from the
    referenced sample CSV, expressed in original coordinates, lifted onto the
    configured states and augmented with the control penalty.
    """
    import dataclasses

    from .christoffel import (christoffel_poly, cost_in_original_coordinates,
                              empirical_moment_matrix, lift_cost, load_samples)

    if cfg.christoffel is None:
        return cfg.scenario
    ch = cfg.christoffel
    samples = load_samples(ch.csv, ch.columns)
    emm = empirical_moment_matrix(samples, ch.degree, ch.epsilon)
    lam = cost_in_original_coordinates(christoffel_poly(emm), samples)
    space = cfg.scenario.dynamics.space
    cost = lift_cost(lam, space, ch.states)
    if ch.lambda_control:
        for idx in space.indices("control"):
            cost = cost + ch.lambda_control * Polynomial.variable(space, idx) ** 2
    if cost.degree() > cfg.scenario.degree:
        raise ConfigError(
            f"christoffel cost degree {cost.degree()} exceeds relaxation degree "
            f"{cfg.scenario.degree}; lower cost.christoffel.degree or raise "
            "relaxation.degree"
        )
    return dataclasses.replace(cfg.scenario, running_cost=cost)
