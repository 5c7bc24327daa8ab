"""Moment relaxation assembly for stochastic control problems.

A scenario describes a polynomial diffusion steered from an initial
distribution toward a terminal one over a horizon split into K phases.
The relaxation introduces truncated moment sequences for the occupation
measure of each phase and for the state distribution at each interface
time, ties them together with weak (integrated) dynamics rows, and imposes
moment/localizing positive-semidefiniteness through auxiliary PSD blocks.

Layout of the assembled conic program (deterministic):

* variables: one free block holding all moment variables (occupation
  measures phase by phase, then variable interfaces), followed by one PSD
  block per (measure, support constraint) pair;
* rows: interface mass rows, then weak dynamics rows (phase major, test
  monomial minor in graded order), then one linking row per PSD entry
  equating it to the matching localizing form of the moments.

Each PSD entry appears in exactly one linking row, which the interior-point
solver exploits.

Sign convention of a weak row for phase k and test monomial v:

    <v(t_k,.), nu_k>  -  <v(t_{k-1},.), nu_{k-1}>  -  <Lv, mu_k>  =  0

with terms of fixed measures moved to the right-hand side.  Consequently
the equality multipliers of the weak rows are the coefficients of the dual
value-function certificate, and the conic dual objective equals the dual
pairing  <V(0,.), initial> - <V(T,.), terminal>  (plus interface mass
terms when interfaces are variable).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .conic import SQRT2, ConeBlock, ConicProgram
from .generator import DynamicsSpec, apply_generator, generator_degree_shift
from .moments import MeasureSpec, MomentVector, SupportSet, boundary_moments
from .poly import Polynomial, VariableSpace, basis_size, monomial_basis


class AssemblyError(ValueError):
    """Raised when a scenario cannot be transcribed at the requested degree."""


@dataclass(frozen=True)
class ScenarioSpec:
    """A complete control problem instance ready for relaxation."""

    dynamics: DynamicsSpec
    degree: int
    num_phases: int
    initial: MeasureSpec
    terminal: MeasureSpec
    running_cost: Polynomial
    terminal_cost: Polynomial | None = None
    state_support: SupportSet = field(default_factory=SupportSet)
    control_support: SupportSet = field(default_factory=SupportSet)
    terminal_support: SupportSet = field(default_factory=SupportSet)
    name: str = ""


@dataclass(frozen=True)
class AffineScaling:
    """Affine change of coordinates t = T t', x = c + r x', u = cu + ru u'."""

    time_scale: float
    state_offset: tuple[float, ...]
    state_scale: tuple[float, ...]
    control_offset: tuple[float, ...] = ()
    control_scale: tuple[float, ...] = ()

    def state_to_scaled(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return (pts - np.array(self.state_offset)) / np.array(self.state_scale)

    def state_from_scaled(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.array(self.state_offset) + pts * np.array(self.state_scale)


@dataclass(frozen=True)
class BlockInfo:
    """Metadata for one PSD block of the assembled program."""

    measure: tuple[str, int]
    kind: str  # "moment" or "localizing"
    constraint: Polynomial | None
    order: int
    side: int
    var_start: int
    row_start: int


@dataclass
class AssembledProgram:
    """A conic program plus the bookkeeping to interpret its solution."""

    program: ConicProgram
    scenario: ScenarioSpec
    times: tuple[float, ...]
    mu_basis: tuple[tuple[int, ...], ...]
    nu_basis: tuple[tuple[int, ...], ...]
    test_basis: tuple[tuple[int, ...], ...]
    index_map: dict
    fixed_moments: dict
    weak_rows: dict
    mass_rows: dict
    blocks: list[BlockInfo]
    objective_offset: float
    n_moment_vars: int

    def variable_measures(self):
        return [mid for mid in self._measure_ids() if mid not in self.fixed_moments]

    def _measure_ids(self):
        K = self.scenario.num_phases
        ids = [("mu", k) for k in range(1, K + 1)]
        ids += [("nu", k) for k in range(0, K + 1)]
        return ids

    def measure_moments(self, measure, primal: np.ndarray) -> MomentVector:
        """Extract the moment vector of a measure from a primal solution."""
        if measure in self.fixed_moments:
            return self.fixed_moments[measure]
        space, basis = self._space_basis(measure)
        values = np.array([primal[self.index_map[(measure, e)]] for e in basis])
        return MomentVector(space=space, max_degree=self.scenario.degree, values=values)

    def _space_basis(self, measure):
        if measure[0] == "mu":
            return self.scenario.dynamics.space, self.mu_basis
        dim = self.scenario.dynamics.state_dim
        return VariableSpace.state_only(dim), self.nu_basis

    def value_multipliers(self, equality_multipliers: np.ndarray) -> dict:
        """Weak-row multipliers per phase, keyed by test monomial exponent."""
        out = {}
        for (k, alpha), row in self.weak_rows.items():
            out.setdefault(k, {})[alpha] = float(equality_multipliers[row])
        return out


def _measure_is_fixed(measure, scenario: ScenarioSpec) -> bool:
    kind, k = measure
    if kind == "mu":
        return False
    if k == 0:
        return True
    if k == scenario.num_phases:
        return scenario.terminal.kind != "free"
    return False


def assemble_primal(scenario: ScenarioSpec) -> AssembledProgram:
    """Transcribe a scenario into a standard-form conic program."""
    d = scenario.degree
    K = scenario.num_phases
    dyn = scenario.dynamics
    space = dyn.space
    dx = dyn.state_dim
    if d < 2 or d % 2 != 0:
        raise AssemblyError(f"relaxation degree must be an even integer >= 2, got {d}")
    if K < 1:
        raise AssemblyError(f"number of phases must be >= 1, got {K}")
    shift = generator_degree_shift(dyn)
    d_test = d - shift
    if d_test < 1:
        raise AssemblyError(
            f"relaxation degree {d} is too small for drift degree "
            f"{dyn.drift_degree()} (test degree would be {d_test})"
        )
    if scenario.running_cost.space is not space:
        raise AssemblyError("running cost must live on the dynamics variable space")
    if scenario.running_cost.degree() > d:
        raise AssemblyError(
            f"running cost degree {scenario.running_cost.degree()} exceeds "
            f"relaxation degree {d}"
        )
    if scenario.initial.kind == "free":
        raise AssemblyError("the initial measure must be concrete, not free")
    if scenario.initial.dim != dx or scenario.terminal.dim != dx:
        raise AssemblyError("measure dimension does not match the state dimension")
    term_cost = scenario.terminal_cost
    state_space = VariableSpace.state_only(dx)
    if term_cost is not None:
        if term_cost.degree() > d:
            raise AssemblyError(
                f"terminal cost degree {term_cost.degree()} exceeds relaxation degree {d}"
            )
        if term_cost.space.n_total != state_space.n_total:
            raise AssemblyError("terminal cost must be a polynomial in the state only")
    for g in scenario.state_support:
        if g.degree() > d:
            raise AssemblyError("a state support polynomial exceeds the relaxation degree")

    T = dyn.horizon
    times = tuple(k * T / K for k in range(K + 1))
    mu_basis = monomial_basis(space, d)
    nu_basis = monomial_basis(state_space, d)
    test_basis = tuple(
        e for e in monomial_basis(space, d_test, blocks=("time", "state")) if any(e)
    )

    # ---------------------------------------------------------------- columns
    index_map: dict = {}
    fixed_moments: dict = {}
    col = 0
    for k in range(1, K + 1):
        for e in mu_basis:
            index_map[(("mu", k), e)] = col
            col += 1
    variable_nu = [k for k in range(0, K + 1) if not _measure_is_fixed(("nu", k), scenario)]
    for k in variable_nu:
        for e in nu_basis:
            index_map[(("nu", k), e)] = col
            col += 1
    n_moment = col
    fixed_moments[("nu", 0)] = boundary_moments(scenario.initial, d)
    if scenario.terminal.kind != "free":
        fixed_moments[("nu", K)] = boundary_moments(scenario.terminal, d)

    # ---------------------------------------------------------------- blocks
    def one(sp_: VariableSpace) -> Polynomial:
        return Polynomial.constant(sp_, 1.0)

    time_idx = space.offset("time")
    blocks_plan = []  # (measure, kind, g, order, measure space)
    for k in range(1, K + 1):
        t0, t1 = times[k - 1], times[k]
        tvar = Polynomial.variable(space, time_idx)
        window = (tvar - t0) * (Polynomial.constant(space, t1) - tvar)
        blocks_plan.append((("mu", k), "moment", one(space), d // 2, space))
        blocks_plan.append((("mu", k), "localizing", window, (d - 2) // 2, space))
        for g in scenario.state_support:
            if g.space.n_total == space.n_total:
                g_mu = g
            else:
                g_mu = g.embed(space, _state_embedding(g.space, space))
            blocks_plan.append((("mu", k), "localizing", g_mu, (d - g_mu.degree()) // 2, space))
        for g in scenario.control_support:
            if g.space.n_total == space.n_total:
                g_mu = g
            else:
                g_mu = g.embed(space, _control_embedding(g.space, space))
            blocks_plan.append((("mu", k), "localizing", g_mu, (d - g_mu.degree()) // 2, space))
    for k in variable_nu:
        support = scenario.terminal_support if k == K else scenario.state_support
        blocks_plan.append((("nu", k), "moment", one(state_space), d // 2, state_space))
        for g in support:
            if g.space.n_total != state_space.n_total:
                raise AssemblyError("interface support polynomials must be state-only")
            blocks_plan.append((("nu", k), "localizing", g, (d - g.degree()) // 2, state_space))

    cones = [ConeBlock("free", n_moment)]
    blocks: list[BlockInfo] = []
    block_bases = []
    for measure, kind, g, order, msp in blocks_plan:
        if order < 0:
            raise AssemblyError(
                f"support polynomial of degree {g.degree()} does not fit in degree {d}"
            )
        half = monomial_basis(msp, order)
        side = len(half)
        blocks.append(
            BlockInfo(
                measure=measure,
                kind=kind,
                constraint=None if kind == "moment" else g,
                order=order,
                side=side,
                var_start=col,
                row_start=-1,  # patched below
            )
        )
        block_bases.append((half, g))
        cones.append(ConeBlock("psd", side))
        col += side * (side + 1) // 2
    n_vars = col

    # ------------------------------------------------------------------ rows
    rows_i: list[int] = []
    cols_i: list[int] = []
    vals: list[float] = []
    b: list[float] = []
    row = 0

    def put(r: int, c_: int, v: float) -> None:
        rows_i.append(r)
        cols_i.append(c_)
        vals.append(v)

    mass_rows: dict = {}
    for k in variable_nu:
        put(row, index_map[(("nu", k), (0,) * dx)], 1.0)
        b.append(1.0)
        mass_rows[k] = row
        row += 1

    weak_rows: dict = {}
    state_off = space.offset("state")
    for k in range(1, K + 1):
        t_prev, t_next = times[k - 1], times[k]
        for alpha in test_basis:
            rhs = 0.0
            v = Polynomial.monomial(space, alpha, 1.0)
            lv = apply_generator(v, dyn)
            for e, coef in lv.terms.items():
                put(row, index_map[(("mu", k), e)], -coef)
            for sign, interface, t_val in ((1.0, ("nu", k), t_next), (-1.0, ("nu", k - 1), t_prev)):
                v_at = v.substitute_value(time_idx, t_val)
                for e, coef in v_at.terms.items():
                    ex = tuple(e[state_off : state_off + dx])
                    if interface in fixed_moments:
                        rhs -= sign * coef * fixed_moments[interface].value(ex)
                    else:
                        put(row, index_map[(interface, ex)], sign * coef)
            b.append(rhs)
            weak_rows[(k, alpha)] = row
            row += 1

    for info, (half, g) in zip(blocks, block_bases):
        object.__setattr__(info, "row_start", row)
        zcol = info.var_start
        mid = info.measure
        g_terms = g.terms
        for i in range(info.side):
            for j in range(i, info.side):
                scale = 1.0 if i == j else SQRT2
                put(row, zcol, 1.0)
                acc: dict = {}
                for gexp, gcoef in g_terms.items():
                    e = tuple(a + b_ + c_ for a, b_, c_ in zip(half[i], half[j], gexp))
                    acc[e] = acc.get(e, 0.0) + gcoef
                for e, coef in acc.items():
                    if coef != 0.0:
                        put(row, index_map[(mid, e)], -scale * coef)
                b.append(0.0)
                zcol += 1
                row += 1

    # ------------------------------------------------------------- objective
    c_vec = np.zeros(n_vars)
    for k in range(1, K + 1):
        for e, coef in scenario.running_cost.terms.items():
            c_vec[index_map[(("mu", k), e)]] += coef
    offset = 0.0
    if term_cost is not None:
        terminal_id = ("nu", K)
        if terminal_id in fixed_moments:
            fixed = fixed_moments[terminal_id]
            offset += sum(coef * fixed.value(e) for e, coef in term_cost.terms.items())
        else:
            for e, coef in term_cost.terms.items():
                c_vec[index_map[(terminal_id, e)]] += coef

    A = sp.csr_matrix(
        (np.array(vals), (np.array(rows_i), np.array(cols_i))), shape=(row, n_vars)
    )
    program = ConicProgram(
        objective=c_vec, A=A, b=np.array(b), cones=tuple(cones)
    )
    return AssembledProgram(
        program=program,
        scenario=scenario,
        times=times,
        mu_basis=mu_basis,
        nu_basis=nu_basis,
        test_basis=test_basis,
        index_map=index_map,
        fixed_moments=fixed_moments,
        weak_rows=weak_rows,
        mass_rows=mass_rows,
        blocks=blocks,
        objective_offset=offset,
        n_moment_vars=n_moment,
    )


def _state_embedding(src: VariableSpace, dst: VariableSpace):
    """Index map for embedding a state-only polynomial into (t, x[, u])."""
    off = dst.offset("state")
    return [off + i for i in range(src.n_total)]


def _control_embedding(src: VariableSpace, dst: VariableSpace):
    off = dst.offset("control")
    return [off + i for i in range(src.n_total)]


# ------------------------------------------------------------------ scaling


def _transform_measure(spec: MeasureSpec, offset: np.ndarray, scale: np.ndarray) -> MeasureSpec:
    if spec.kind == "free":
        return spec
    if spec.kind == "dirac":
        pt = (np.array(spec.point) - offset) / scale
        return MeasureSpec.dirac(pt)
    if spec.kind == "gaussian":
        mean = (np.array(spec.mean) - offset) / scale
        cov = np.array(spec.cov) / np.outer(scale, scale)
        return MeasureSpec.gaussian(mean, cov)
    if spec.kind == "uniform_box":
        lo = (np.array(spec.lower) - offset) / scale
        hi = (np.array(spec.upper) - offset) / scale
        return MeasureSpec.uniform_box(lo, hi)
    if spec.kind == "empirical":
        pts = (np.array(spec.samples) - offset) / scale
        return MeasureSpec.empirical(pts)
    raise ValueError(f"unknown measure kind {spec.kind!r}")


def scale_scenario(
    scenario: ScenarioSpec,
    state_bounds: tuple,
    control_bounds: tuple | None = None,
) -> tuple[ScenarioSpec, AffineScaling]:
    """Map a scenario to normalized coordinates: unit horizon, states and
    controls in [-1, 1] boxes.

    ``state_bounds`` is (lower, upper) arrays over state dimensions; the box
    becomes the canonical support 1 - x_i'^2 >= 0.  Any extra support
    polynomials of the input scenario are carried over by substitution.
    Returns the scaled scenario and the affine record needed to map results
    back to original coordinates.
    """
    dyn = scenario.dynamics
    space = dyn.space
    dx = dyn.state_dim
    lo = np.asarray(state_bounds[0], dtype=float)
    hi = np.asarray(state_bounds[1], dtype=float)
    if lo.shape != (dx,) or hi.shape != (dx,):
        raise ValueError("state bounds must match the state dimension")
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        raise ValueError("state bounds must be finite (bounded declared box)")
    if np.any(hi <= lo):
        raise ValueError("state upper bounds must exceed lower bounds")
    c = (lo + hi) / 2.0
    r = (hi - lo) / 2.0
    T = dyn.horizon

    du = space.dim("control") if space.has_block("control") else 0
    if du:
        if control_bounds is None:
            raise ValueError("control bounds are required when controls are present")
        ulo = np.asarray(control_bounds[0], dtype=float)
        uhi = np.asarray(control_bounds[1], dtype=float)
        if ulo.shape != (du,) or uhi.shape != (du,):
            raise ValueError("control bounds must match the control dimension")
        if not (np.isfinite(ulo).all() and np.isfinite(uhi).all()):
            raise ValueError("control bounds must be finite (bounded declared box)")
        if np.any(uhi <= ulo):
            raise ValueError("control upper bounds must exceed lower bounds")
        cu = (ulo + uhi) / 2.0
        ru = (uhi - ulo) / 2.0
    else:
        cu = np.zeros(0)
        ru = np.zeros(0)

    # full-space affine substitution t -> T t', x -> c + r x', u -> cu + ru u'
    offsets = np.zeros(space.n_total)
    scales = np.ones(space.n_total)
    scales[space.offset("time")] = T
    soff = space.offset("state")
    offsets[soff : soff + dx] = c
    scales[soff : soff + dx] = r
    if du:
        uoff = space.offset("control")
        offsets[uoff : uoff + du] = cu
        scales[uoff : uoff + du] = ru

    drift = tuple(
        f.substitute_affine(offsets, scales) * (T / r[i]) for i, f in enumerate(dyn.drift)
    )
    diffusion = T * np.asarray(dyn.diffusion) / np.outer(r, r)
    dyn_scaled = DynamicsSpec(
        space=space, drift=drift, diffusion=diffusion, horizon=1.0
    )

    running = scenario.running_cost.substitute_affine(offsets, scales) * T
    state_space = VariableSpace.state_only(dx)
    x_off = np.array(c)
    x_scale = np.array(r)
    term = scenario.terminal_cost
    if term is not None:
        term = term.substitute_affine(x_off, x_scale)

    def box_support(sp_: VariableSpace, ndim: int) -> list[Polynomial]:
        out = []
        for i in range(ndim):
            xi = Polynomial.variable(sp_, sp_.offset(sp_.blocks[0][0]) + i)
            out.append(Polynomial.constant(sp_, 1.0) - xi * xi)
        return out

    state_sup = box_support(state_space, dx)
    for g in scenario.state_support:
        state_sup.append(g.substitute_affine(x_off, x_scale))
    term_sup = box_support(state_space, dx)
    for g in scenario.terminal_support:
        term_sup.append(g.substitute_affine(x_off, x_scale))
    control_sup: list[Polynomial] = []
    if du:
        uspace = space
        uoff = space.offset("control")
        for i in range(du):
            ui = Polynomial.variable(uspace, uoff + i)
            control_sup.append(Polynomial.constant(uspace, 1.0) - ui * ui)
        for g in scenario.control_support:
            control_sup.append(g.substitute_affine(offsets, scales))

    scaled = replace(
        scenario,
        dynamics=dyn_scaled,
        initial=_transform_measure(scenario.initial, x_off, x_scale),
        terminal=_transform_measure(scenario.terminal, x_off, x_scale),
        running_cost=running,
        terminal_cost=term,
        state_support=SupportSet(tuple(state_sup)),
        control_support=SupportSet(tuple(control_sup)),
        terminal_support=SupportSet(tuple(term_sup)),
    )
    scaling = AffineScaling(
        time_scale=T,
        state_offset=tuple(c),
        state_scale=tuple(r),
        control_offset=tuple(cu),
        control_scale=tuple(ru),
    )
    return scaled, scaling
