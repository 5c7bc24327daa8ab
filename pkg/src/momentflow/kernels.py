"""Hot numeric kernels for the interior-point solver.

Batched congruence transforms (S @ M_k @ S for a stack of symmetric
matrices) and stacked scaled-vectorization conversions dominate the
per-iteration cost of the reference solver on moment programs.  Both carry a
numba @njit implementation and a pure-numpy fallback; set MOMENTFLOW_NUMBA=0
to force the numpy path.  benchmarks/bench_kernels.py compares the two.
"""

from __future__ import annotations

import os

import numpy as np

_ENV = os.environ.get("MOMENTFLOW_NUMBA", "1").strip().lower()
_WANT_NUMBA = _ENV not in ("0", "false", "no", "off")

try:  # pragma: no cover - exercised indirectly
    if not _WANT_NUMBA:
        raise ImportError("numba disabled by MOMENTFLOW_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

    def njit(*args, **kwargs):  # fallback decorator, keeps call sites uniform
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def _tri_indices(side: int):
    ii, jj = np.triu_indices(side)
    return ii.astype(np.int64), jj.astype(np.int64)


# ---------------------------------------------------------------- numpy path


def batch_congruence_numpy(S: np.ndarray, mats: np.ndarray) -> np.ndarray:
    """Return S @ mats[k] @ S for every k (S symmetric, mats (K, s, s))."""
    return S @ mats @ S


def svec_stack_numpy(mats: np.ndarray, scale: float) -> np.ndarray:
    """Scaled upper-triangle vectorization of a stack of symmetric matrices."""
    side = mats.shape[1]
    ii, jj = _tri_indices(side)
    out = mats[:, ii, jj].copy()
    out[:, ii != jj] *= scale
    return out


def unsvec_stack_numpy(vecs: np.ndarray, side: int, scale: float) -> np.ndarray:
    """Inverse of :func:`svec_stack_numpy`."""
    ii, jj = _tri_indices(side)
    vals = vecs.copy()
    vals[:, ii != jj] /= scale
    out = np.zeros((vecs.shape[0], side, side))
    out[:, ii, jj] = vals
    out[:, jj, ii] = vals
    return out


# ---------------------------------------------------------------- numba path


@njit(cache=True)
def _batch_congruence_nb(S, mats, out):  # pragma: no cover - jit
    k = mats.shape[0]
    for i in range(k):
        out[i] = S @ (mats[i] @ S)


@njit(cache=True)
def _svec_stack_nb(mats, ii, jj, scale, out):  # pragma: no cover - jit
    k = mats.shape[0]
    m = ii.shape[0]
    for a in range(k):
        for p in range(m):
            i = ii[p]
            j = jj[p]
            if i == j:
                out[a, p] = mats[a, i, j]
            else:
                out[a, p] = mats[a, i, j] * scale


@njit(cache=True)
def _unsvec_stack_nb(vecs, ii, jj, scale, out):  # pragma: no cover - jit
    k = vecs.shape[0]
    m = ii.shape[0]
    for a in range(k):
        for p in range(m):
            i = ii[p]
            j = jj[p]
            if i == j:
                out[a, i, j] = vecs[a, p]
            else:
                v = vecs[a, p] / scale
                out[a, i, j] = v
                out[a, j, i] = v


def batch_congruence_numba(S: np.ndarray, mats: np.ndarray) -> np.ndarray:
    out = np.empty_like(mats)
    _batch_congruence_nb(np.ascontiguousarray(S), np.ascontiguousarray(mats), out)
    return out


def svec_stack_numba(mats: np.ndarray, scale: float) -> np.ndarray:
    side = mats.shape[1]
    ii, jj = _tri_indices(side)
    out = np.empty((mats.shape[0], ii.shape[0]))
    _svec_stack_nb(np.ascontiguousarray(mats), ii, jj, scale, out)
    return out


def unsvec_stack_numba(vecs: np.ndarray, side: int, scale: float) -> np.ndarray:
    ii, jj = _tri_indices(side)
    out = np.zeros((vecs.shape[0], side, side))
    _unsvec_stack_nb(np.ascontiguousarray(vecs), ii, jj, scale, out)
    return out


if HAS_NUMBA:
    batch_congruence = batch_congruence_numba
    svec_stack = svec_stack_numba
    unsvec_stack = unsvec_stack_numba
else:
    batch_congruence = batch_congruence_numpy
    svec_stack = svec_stack_numpy
    unsvec_stack = unsvec_stack_numpy

USING_NUMBA = HAS_NUMBA
