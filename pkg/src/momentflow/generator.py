"""Infinitesimal generator of a controlled diffusion with polynomial drift.

For dX = f(X, u) dt + sigma dB the generator acting on a test function
V(t, x) is

    L V = dV/dt + sum_i f_i dV/dx_i + sum_ij D_ij d^2V/dx_i dx_j

where D = (1/2) sigma sigma^T is stored directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .poly import Polynomial, VariableSpace

PSD_EIG_FLOOR = -1e-10


@dataclass(frozen=True)
class DynamicsSpec:
    """Polynomial drift, constant diffusion matrix D = sigma sigma^T / 2,
    and a finite horizon.  Drift components may depend on state and control
    but never on time."""

    space: VariableSpace
    drift: tuple[Polynomial, ...]
    diffusion: np.ndarray
    horizon: float

    def __post_init__(self):
        if not self.space.has_block("state"):
            raise ValueError("dynamics space needs a state block")
        dx = self.space.dim("state")
        if len(self.drift) != dx:
            raise ValueError(f"drift needs {dx} components, got {len(self.drift)}")
        t_idx = self.space.offset("time") if self.space.has_block("time") else None
        for i, f in enumerate(self.drift):
            if f.space != self.space:
                raise ValueError(f"drift component {i} lives in a different space")
            if t_idx is not None and f.depends_on(t_idx):
                raise ValueError(f"drift component {i} depends on time")
        D = np.asarray(self.diffusion, dtype=float)
        if D.shape != (dx, dx):
            raise ValueError(f"diffusion matrix must be {dx}x{dx}")
        if not np.allclose(D, D.T, atol=1e-12):
            raise ValueError("diffusion matrix must be symmetric")
        if np.linalg.eigvalsh(D).min() < PSD_EIG_FLOOR:
            raise ValueError("diffusion matrix must be positive semidefinite")
        object.__setattr__(self, "diffusion", D)
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon must be a positive finite number")

    @property
    def state_dim(self) -> int:
        return self.space.dim("state")

    def drift_degree(self) -> int:
        return max((f.degree() for f in self.drift), default=0)


def apply_generator(V: Polynomial, dyn: DynamicsSpec) -> Polynomial:
    """L V for a test function V(t, x).  Errors if V touches the control block."""
    if V.space != dyn.space:
        raise ValueError("test function lives in a different space")
    if dyn.space.has_block("control"):
        for idx in dyn.space.indices("control"):
            if V.depends_on(idx):
                raise ValueError("test function must not depend on control variables")
    out = Polynomial.zero(dyn.space)
    if dyn.space.has_block("time"):
        out = out + V.diff(dyn.space.offset("time"))
    x_off = dyn.space.offset("state")
    dx = dyn.state_dim
    grads = [V.diff(x_off + i) for i in range(dx)]
    for i in range(dx):
        if not grads[i].is_zero():
            out = out + dyn.drift[i] * grads[i]
    D = dyn.diffusion
    for i in range(dx):
        for j in range(dx):
            if D[i, j] != 0.0:
                hess = grads[i].diff(x_off + j)
                if not hess.is_zero():
                    out = out + D[i, j] * hess
    return out


def generator_degree_shift(dyn: DynamicsSpec) -> int:
    """Worst-case degree increase of L: max(deg f - 1, 0).

    The time derivative and the diffusion term only lower degree; the drift
    term takes a degree-k test function to degree k - 1 + deg f.
    """
    return max(dyn.drift_degree() - 1, 0)
