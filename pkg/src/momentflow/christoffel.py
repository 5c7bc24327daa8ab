"""Data-driven cost construction from trajectory samples.

Fits the inverse-moment-matrix polynomial

    lambda(x) = phi(x)' (M + eps I)^{-1} phi(x),
    M = (1/N) sum_i phi(x_i) phi(x_i)'

on a monomial basis phi of degree <= d_c.  Samples are affinely normalized
into [-1, 1]^dim before any moments are computed; the transform is kept on
the sample set so the fitted polynomial can be expressed back in the
original coordinates and lifted into a control problem's variable space.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .poly import Polynomial, VariableSpace, monomial_basis

DEFAULT_DEGREE = 4
SIDE_CAP = 500
_SOFT_BOX = 1.5


@dataclass(frozen=True)
class SampleSet:
    """Normalized samples plus the affine transform that produced them.

    ``samples`` holds the normalized coordinates; a point x in original
    coordinates maps to (x - offset) / scale.
    """

    samples: np.ndarray  # (N, dim), normalized
    offset: np.ndarray   # (dim,)
    scale: np.ndarray    # (dim,), positive
    source: str = ""
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-d array of shape (N, dim)")
        if samples.shape[0] < 1:
            raise ValueError("a sample set needs at least one sample")
        if not np.isfinite(samples).all():
            raise ValueError("samples contain non-finite values")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float))
        if np.any(self.scale <= 0):
            raise ValueError("normalization scales must be positive")
        worst = float(np.abs(samples).max())
        if worst > _SOFT_BOX:
            warnings.warn(
                f"normalized samples reach {worst:.3f}, beyond [-{_SOFT_BOX}, {_SOFT_BOX}]; "
                "the supplied normalization box does not cover the data",
                stacklevel=2,
            )

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    def normalize(self, points: np.ndarray) -> np.ndarray:
        """Map original-coordinate points into the normalized box."""
        return (np.asarray(points, dtype=float) - self.offset) / self.scale

    def denormalize(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) * self.scale + self.offset


def make_sample_set(raw: np.ndarray, box=None, source: str = "",
                    columns: tuple[str, ...] = ()) -> SampleSet:
    """Normalize raw samples into [-1,1]^dim and wrap them in a SampleSet.

    ``box`` may be a (lo, hi) pair of arrays; by default the per-coordinate
    sample min/max is used, so the data exactly fills the box.
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    if box is None:
        lo = raw.min(axis=0)
        hi = raw.max(axis=0)
    else:
        lo = np.asarray(box[0], dtype=float)
        hi = np.asarray(box[1], dtype=float)
        if lo.shape != (raw.shape[1],) or hi.shape != (raw.shape[1],):
            raise ValueError("normalization box endpoints must match the sample dimension")
        if np.any(hi <= lo):
            raise ValueError("normalization box must have positive width")
    offset = (lo + hi) / 2.0
    scale = (hi - lo) / 2.0
    scale = np.where(scale > 0, scale, 1.0)  # constant columns stay centered
    return SampleSet(samples=(raw - offset) / scale, offset=offset, scale=scale,
                     source=source, columns=columns)


def load_samples(path, columns, box=None, delimiter: str = ",") -> SampleSet:
    """Read samples from a CSV file with a header row.

    ``columns`` lists the column names in variable order; other columns are
    ignored.  Parse failures report both the data row and the column name.
    """
    columns = tuple(columns)
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        missing = [c for c in columns if c not in header]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}; "
                             f"header has {', '.join(header)}")
        idx = [header.index(c) for c in columns]
        rows = []
        for rownum, rec in enumerate(reader, start=2):  # 1-based, after header
            if not rec or all(not cell.strip() for cell in rec):
                continue
            vals = []
            for j, col in zip(idx, columns):
                if j >= len(rec):
                    raise ValueError(f"{path}: row {rownum} is missing column {col}")
                cell = rec[j].strip()
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric value {cell!r} at row {rownum}, "
                        f"column {col}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return make_sample_set(np.array(rows, dtype=float), box=box,
                           source=str(path), columns=columns)


@dataclass(frozen=True)
class EmpiricalMomentMatrix:
    """Average of monomial outer products over a sample set."""

    space: VariableSpace
    basis: tuple
    matrix: np.ndarray
    epsilon: float
    sample_set: SampleSet = field(repr=False, default=None)

    @property
    def side(self) -> int:
        return self.matrix.shape[0]

    def regularized(self) -> np.ndarray:
        return self.matrix + self.epsilon * np.eye(self.side)


def _vandermonde(samples: np.ndarray, basis) -> np.ndarray:
    n, dim = samples.shape
    cols = []
    for exponent in basis:
        col = np.ones(n)
        for j, e in enumerate(exponent[:dim]):
            if e:
                col = col * samples[:, j] ** e
        cols.append(col)
    return np.column_stack(cols)


def empirical_moment_matrix(sample_set: SampleSet, degree: int,
                            epsilon: float | None = None,
                            side_cap: int = SIDE_CAP) -> EmpiricalMomentMatrix:
    """Form M = (1/N) sum_i phi(x_i) phi(x_i)' on the degree-``degree`` basis.

    ``epsilon`` defaults to 1e-8 * trace(M) / side, which is invariant under
    the box normalization and keeps the inverse well conditioned.
    """
    if degree < 0:
        raise ValueError("basis degree must be nonnegative")
    dim = sample_set.dimension
    side = math.comb(dim + degree, degree)
    if side > side_cap:
        raise ValueError(
            f"basis of degree {degree} in {dim} variables has side {side}, "
            f"above the cap {side_cap}"
        )
    space = VariableSpace.state_only(dim)
    basis = monomial_basis(space, degree)
    phi = _vandermonde(sample_set.samples, basis)
    M = phi.T @ phi / sample_set.size
    M = (M + M.T) / 2.0
    if epsilon is None:
        epsilon = 1e-8 * float(np.trace(M)) / side
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return EmpiricalMomentMatrix(space=space, basis=tuple(basis), matrix=M,
                                 epsilon=float(epsilon), sample_set=sample_set)


def christoffel_poly(emm: EmpiricalMomentMatrix) -> Polynomial:
    """Expand phi(x)'(M + eps I)^{-1} phi(x) into an explicit polynomial.

    The result lives in the sample set's normalized coordinates and has
    degree twice the basis degree.
    """
    reg = emm.regularized()
    try:
        # Cholesky doubles as the PSD/singularity check.
        chol = np.linalg.cholesky(reg)
    except np.linalg.LinAlgError:
        raise ValueError(
            "empirical moment matrix is singular; supply epsilon > 0 "
            "(more samples or a lower degree also help)"
        ) from None
    inv = np.linalg.inv(chol)
    Q = inv.T @ inv  # (M + eps I)^{-1}
    terms: dict[tuple, float] = {}
    basis = emm.basis
    for i, ei in enumerate(basis):
        for j in range(i, len(basis)):
            w = Q[i, j] if i == j else 2.0 * Q[i, j]
            if w == 0.0:
                continue
            key = tuple(a + b for a, b in zip(ei, basis[j]))
            terms[key] = terms.get(key, 0.0) + w
    return Polynomial(emm.space, terms)


def cost_in_original_coordinates(poly: Polynomial, sample_set: SampleSet) -> Polynomial:
    """Rewrite a polynomial in normalized coordinates as one in original ones."""
    return poly.substitute_affine(-sample_set.offset / sample_set.scale,
                                  1.0 / sample_set.scale)


def lift_cost(poly: Polynomial, target: VariableSpace, state_indices) -> Polynomial:
    """Embed a polynomial over a state subset into a (t, x, u) variable space.

    ``state_indices`` gives, for each of the polynomial's variables, the index
    of the corresponding state variable in the target space.
    """
    state_indices = list(state_indices)
    if len(state_indices) != poly.space.n_total:
        raise ValueError("state_indices must name one target state per variable")
    state_off = target.offset("state")
    state_dim = target.dim("state")
    for s in state_indices:
        if not 0 <= s < state_dim:
            raise ValueError(f"state index {s} outside the target's state block")
    return poly.embed(target, [state_off + s for s in state_indices])
