"""Truncated moment vectors, boundary measures, moment and localizing matrices.

A moment vector holds `y[alpha] = integral of x^alpha` for every monomial of
degree <= max_degree, aligned with the canonical graded-lex basis of its
variable space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .poly import Polynomial, VariableSpace, monomial_basis


@dataclass
class MomentVector:
    space: VariableSpace
    max_degree: int
    values: np.ndarray

    def __post_init__(self):
        basis = monomial_basis(self.space, self.max_degree)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(basis),):
            raise ValueError(
                f"moment vector needs {len(basis)} entries, got {vals.shape}"
            )
        self.values = vals
        self._basis = basis
        self._index = {e: i for i, e in enumerate(basis)}

    @property
    def basis(self):
        return self._basis

    @property
    def mass(self) -> float:
        return float(self.values[0])

    def value(self, exponent) -> float:
        exponent = tuple(exponent)
        if exponent not in self._index:
            raise KeyError(f"monomial {exponent} outside degree-{self.max_degree} basis")
        return float(self.values[self._index[exponent]])

    def pair(self, p: Polynomial) -> float:
        """<p, measure> for a polynomial of degree <= max_degree."""
        if p.space != self.space:
            raise ValueError("polynomial space does not match moment vector")
        total = 0.0
        for e, c in p.terms.items():
            total += c * self.value(e)
        return total


@dataclass(frozen=True)
class MeasureSpec:
    """Boundary measure description.

    kind: dirac | gaussian | uniform_box | empirical | free.  `free` carries
    only the dimension and means the measure is left as decision variables.
    """

    kind: str
    dim: int
    point: tuple[float, ...] | None = None
    mean: tuple[float, ...] | None = None
    cov: tuple[tuple[float, ...], ...] | None = None
    lower: tuple[float, ...] | None = None
    upper: tuple[float, ...] | None = None
    samples: tuple[tuple[float, ...], ...] | None = None

    @staticmethod
    def dirac(point) -> "MeasureSpec":
        point = tuple(float(v) for v in point)
        return MeasureSpec(kind="dirac", dim=len(point), point=point)

    @staticmethod
    def gaussian(mean, cov) -> "MeasureSpec":
        mean = tuple(float(v) for v in mean)
        C = np.asarray(cov, dtype=float)
        if C.shape != (len(mean), len(mean)):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(C, C.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(C).min() < -1e-10:
            raise ValueError("covariance must be positive semidefinite")
        return MeasureSpec(
            kind="gaussian", dim=len(mean), mean=mean,
            cov=tuple(tuple(row) for row in C),
        )

    @staticmethod
    def uniform_box(lower, upper) -> "MeasureSpec":
        lower = tuple(float(v) for v in lower)
        upper = tuple(float(v) for v in upper)
        if len(lower) != len(upper):
            raise ValueError("box bounds have different lengths")
        if any(l >= u for l, u in zip(lower, upper)):
            raise ValueError("box bounds must satisfy lower < upper")
        return MeasureSpec(kind="uniform_box", dim=len(lower), lower=lower, upper=upper)

    @staticmethod
    def empirical(samples) -> "MeasureSpec":
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("empirical measure needs an (N, dim) sample array")
        if not np.isfinite(arr).all():
            raise ValueError("empirical samples must be finite")
        return MeasureSpec(
            kind="empirical", dim=arr.shape[1],
            samples=tuple(tuple(row) for row in arr),
        )

    @staticmethod
    def free(dim: int) -> "MeasureSpec":
        return MeasureSpec(kind="free", dim=int(dim))


@dataclass(frozen=True)
class SupportSet:
    """Semialgebraic support {z : g_j(z) >= 0 for all j}."""

    inequalities: tuple[Polynomial, ...] = ()

    def __post_init__(self):
        for g in self.inequalities:
            if g.is_zero():
                raise ValueError("support inequality is identically zero")

    def __iter__(self):
        return iter(self.inequalities)

    def __len__(self):
        return len(self.inequalities)


def _gaussian_moments(mean, cov, basis) -> np.ndarray:
    """Raw Gaussian moments via the integration-by-parts recursion

        E[x^a] = m_i E[x^(a-e_i)] + sum_j C_ij (a - e_i)_j E[x^(a-e_i-e_j)]

    where i is the first variable with a_i > 0.  The basis is graded-lex
    sorted, so every lower-degree moment needed is already available.
    """
    mean = np.asarray(mean, dtype=float)
    C = np.asarray(cov, dtype=float)
    table: dict[tuple[int, ...], float] = {}
    out = np.empty(len(basis))
    for pos, e in enumerate(basis):
        if sum(e) == 0:
            val = 1.0
        else:
            i = next(k for k, v in enumerate(e) if v > 0)
            e1 = list(e)
            e1[i] -= 1
            val = mean[i] * table[tuple(e1)]
            for j in range(len(e)):
                if e1[j] > 0 and C[i, j] != 0.0:
                    e2 = list(e1)
                    e2[j] -= 1
                    val += C[i, j] * e1[j] * table[tuple(e2)]
        table[e] = val
        out[pos] = val
    return out


def boundary_moments(spec: MeasureSpec, max_degree: int) -> MomentVector:
    """Moment vector of a boundary measure on its own state-only space."""
    if spec.kind == "free":
        raise ValueError("a free measure has no prescribed moments")
    space = VariableSpace.state_only(spec.dim)
    basis = monomial_basis(space, max_degree)
    if spec.kind == "dirac":
        pt = np.asarray(spec.point, dtype=float)
        vals = np.array([np.prod(pt**np.array(e)) for e in basis])
    elif spec.kind == "gaussian":
        vals = _gaussian_moments(spec.mean, spec.cov, basis)
    elif spec.kind == "uniform_box":
        lo = np.asarray(spec.lower, dtype=float)
        hi = np.asarray(spec.upper, dtype=float)
        vals = np.empty(len(basis))
        for pos, e in enumerate(basis):
            v = 1.0
            for i, k in enumerate(e):
                # average of x^k over [lo, hi]
                v *= (hi[i] ** (k + 1) - lo[i] ** (k + 1)) / ((k + 1) * (hi[i] - lo[i]))
            vals[pos] = v
    elif spec.kind == "empirical":
        pts = np.asarray(spec.samples, dtype=float)
        vals = np.empty(len(basis))
        for pos, e in enumerate(basis):
            mono = np.ones(pts.shape[0])
            for i, k in enumerate(e):
                if k:
                    mono *= pts[:, i] ** k
            vals[pos] = mono.mean()
    else:
        raise ValueError(f"unknown measure kind {spec.kind!r}")
    return MomentVector(space, max_degree, vals)


def moment_matrix(y: MomentVector, order: int) -> np.ndarray:
    """M[a, b] = y[a + b] over the degree-`order` basis; needs 2*order <= max_degree."""
    if 2 * order > y.max_degree:
        raise ValueError(
            f"moment matrix of order {order} needs moments up to degree {2 * order}"
        )
    rows = monomial_basis(y.space, order)
    side = len(rows)
    M = np.empty((side, side))
    for i in range(side):
        for j in range(i, side):
            e = tuple(a + b for a, b in zip(rows[i], rows[j]))
            M[i, j] = M[j, i] = y.value(e)
    return M


def localizing_matrix(y: MomentVector, g: Polynomial, order: int) -> np.ndarray:
    """L[a, b] = sum_gamma g_gamma y[a + b + gamma]; needs 2*order + deg g <= max_degree."""
    if g.space != y.space:
        raise ValueError("localizing polynomial space does not match moments")
    if 2 * order + g.degree() > y.max_degree:
        raise ValueError(
            f"localizing matrix of order {order} for a degree-{g.degree()} "
            f"polynomial needs moments up to degree {2 * order + g.degree()}"
        )
    rows = monomial_basis(y.space, order)
    side = len(rows)
    L = np.empty((side, side))
    for i in range(side):
        for j in range(i, side):
            total = 0.0
            for gam, c in g.terms.items():
                e = tuple(a + b + cgam for a, b, cgam in zip(rows[i], rows[j], gam))
                total += c * y.value(e)
            L[i, j] = L[j, i] = total
    return L
