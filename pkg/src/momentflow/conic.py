"""Standard-form conic programs over free, nonnegative and PSD cones.

    minimize    c' x
    subject to  A x = b,   x in K

K partitions the variable vector into blocks.  A PSD block of side s is
stored in scaled symmetric vectorization (row-major upper triangle with
off-diagonal entries multiplied by sqrt(2)), so Euclidean inner products of
vectorized blocks equal trace inner products of the matrices.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

SQRT2 = float(np.sqrt(2.0))


@dataclass(frozen=True)
class ConeBlock:
    kind: str  # free | nonneg | psd
    size: int  # vector length for free/nonneg, matrix side for psd

    def __post_init__(self):
        if self.kind not in ("free", "nonneg", "psd"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("cone block size must be positive")

    @property
    def length(self) -> int:
        if self.kind == "psd":
            return self.size * (self.size + 1) // 2
        return self.size


@functools.lru_cache(maxsize=None)
def svec_indices(side: int):
    """(rows, cols, scale) arrays for the scaled upper-triangle vectorization."""
    ii, jj = [], []
    for i in range(side):
        for j in range(i, side):
            ii.append(i)
            jj.append(j)
    ii = np.array(ii, dtype=np.int64)
    jj = np.array(jj, dtype=np.int64)
    scale = np.where(ii == jj, 1.0, SQRT2)
    return ii, jj, scale


def svec(M: np.ndarray) -> np.ndarray:
    """Scaled vectorization of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    side = M.shape[0]
    ii, jj, scale = svec_indices(side)
    return M[ii, jj] * scale


def smat(v: np.ndarray, side: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float)
    ii, jj, scale = svec_indices(side)
    M = np.zeros((side, side))
    M[ii, jj] = v / scale
    M[jj, ii] = M[ii, jj]
    return M


@dataclass
class ConicProgram:
    objective: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: tuple[ConeBlock, ...]

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if not sp.issparse(self.A):
            self.A = sp.csr_matrix(np.asarray(self.A, dtype=float))
        else:
            self.A = self.A.tocsr().astype(float)
        n = sum(blk.length for blk in self.cones)
        if self.objective.shape != (n,):
            raise ValueError(
                f"objective length {self.objective.shape} does not match cones ({n})"
            )
        if self.A.shape != (len(self.b), n):
            raise ValueError(
                f"A is {self.A.shape}, expected ({len(self.b)}, {n})"
            )
        for arr in (self.objective, self.b):
            if not np.isfinite(arr).all():
                raise ValueError("NaN or infinity in program data")
        if self.A.nnz and not np.isfinite(self.A.data).all():
            raise ValueError("NaN or infinity in constraint matrix")

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def block_slices(self) -> list[slice]:
        out = []
        off = 0
        for blk in self.cones:
            out.append(slice(off, off + blk.length))
            off += blk.length
        return out


@dataclass
class ConicSolution:
    status: str  # optimal | primal_infeasible | dual_infeasible | numerical_trouble | iteration_limit
    primal: np.ndarray
    equality_multipliers: np.ndarray
    cone_duals: np.ndarray
    primal_objective: float
    dual_objective: float
    residuals: dict
    iterations: int
    solve_seconds: float
    backend: str = "reference"

    @property
    def gap(self) -> float:
        return self.residuals.get("gap", float("nan"))


@dataclass
class SelfCheckReport:
    equality_residual_inf: float
    min_primal_eigenvalue: float
    min_dual_eigenvalue: float
    complementarity_gap: float

    def within(self, tol: float) -> bool:
        return (
            self.equality_residual_inf <= tol
            and self.min_primal_eigenvalue >= -tol
            and self.min_dual_eigenvalue >= -tol
            and abs(self.complementarity_gap) <= tol
        )


def self_check(program: ConicProgram, solution: ConicSolution) -> SelfCheckReport:
    """Recompute feasibility and complementarity from scratch, independent of
    whatever the solver reported."""
    x = np.asarray(solution.primal, dtype=float)
    z = np.asarray(solution.cone_duals, dtype=float)
    r_eq = program.A @ x - program.b
    eq_inf = float(np.abs(r_eq).max()) if r_eq.size else 0.0
    min_p = np.inf
    min_d = np.inf
    for blk, sl in zip(program.cones, program.block_slices()):
        if blk.kind == "nonneg":
            min_p = min(min_p, float(x[sl].min()))
            min_d = min(min_d, float(z[sl].min()))
        elif blk.kind == "psd":
            min_p = min(min_p, float(np.linalg.eigvalsh(smat(x[sl], blk.size)).min()))
            min_d = min(min_d, float(np.linalg.eigvalsh(smat(z[sl], blk.size)).min()))
    if not np.isfinite(min_p):
        min_p = 0.0
        min_d = 0.0
    comp = float(x @ z)
    return SelfCheckReport(eq_inf, min_p, min_d, comp)


def export_text(program: ConicProgram) -> str:
    """Plain-text dump (counts header, COO triplets, rhs, objective, cones)
    for debugging against external solvers."""
    A = program.A.tocoo()
    lines = []
    lines.append(
        f"conic {program.n_vars} vars {program.n_rows} rows {A.nnz} nnz "
        f"{len(program.cones)} cones"
    )
    lines.append("cones " + " ".join(f"{blk.kind}:{blk.size}" for blk in program.cones))
    lines.append("objective " + " ".join(f"{v:.17g}" for v in program.objective))
    lines.append("rhs " + " ".join(f"{v:.17g}" for v in program.b))
    order = np.lexsort((A.col, A.row))
    for k in order:
        lines.append(f"A {A.row[k]} {A.col[k]} {A.data[k]:.17g}")
    return "\n".join(lines) + "\n"


def write_program(program: ConicProgram, path) -> None:
    with open(path, "w") as fh:
        fh.write(export_text(program))
