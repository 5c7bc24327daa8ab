"""Reference primal-dual interior-point solver for standard-form conic programs.

Solves   min c'x  s.t.  Ax = b, x in K   (K = free x nonneg x PSD blocks)
via the homogeneous self-dual embedding with Nesterov-Todd scaling and a
Mehrotra predictor-corrector.  The embedding detects primal/dual
infeasibility through Farkas certificates instead of diverging.

Two KKT elimination paths share the same Newton equations:

* a structured path for assembled moment programs, where every cone
  variable appears in exactly one equality row (its linking row); the
  Newton system then reduces to a dense saddle system of size
  (free variables + non-linking rows), which is small;
* a general dense path for arbitrary programs.

Directions are cross-checked in the test-suite against a brute-force dense
KKT solve.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import kernels
from .conic import SQRT2, ConicProgram, ConicSolution, smat, svec

REFERENCE_SIZE_LIMIT = 2000  # beyond this, "auto" hands unstructured programs to cvxopt

_STEP_FRACTION = 0.99
_REG0 = 1e-12
_SOLVE_QUALITY = 1e-4
_BIG = 1e16


@dataclass
class SolverSettings:
    tol: float = 1e-8
    max_iters: int = 200
    verbosity: int = 0
    backend: str = "auto"  # auto | reference | cvxopt


def _norm_inf(v) -> float:
    return float(np.abs(v).max()) if np.size(v) else 0.0


class _Cones:
    """Index bookkeeping for the cone blocks of a program."""

    def __init__(self, program: ConicProgram):
        n = program.n_vars
        free, nonneg, psd = [], [], []
        off = 0
        for blk in program.cones:
            sl = slice(off, off + blk.length)
            if blk.kind == "free":
                free.extend(range(sl.start, sl.stop))
            elif blk.kind == "nonneg":
                nonneg.extend(range(sl.start, sl.stop))
            else:
                psd.append((sl, blk.size))
            off += blk.length
        self.n = n
        self.free = np.array(free, dtype=np.int64)
        self.nonneg = np.array(nonneg, dtype=np.int64)
        self.psd = psd
        cone_mask = np.ones(n, dtype=bool)
        cone_mask[self.free] = False
        self.cone = np.where(cone_mask)[0]
        self.barrier_degree = len(nonneg) + sum(side for _, side in psd)

    def init_point(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.nonneg] = 1.0
        for sl, side in self.psd:
            x[sl] = svec(np.eye(side))
        return x


@dataclass
class _PsdScaling:
    R: np.ndarray
    Rinv: np.ndarray
    gamma: np.ndarray  # scaled-point eigenvalues
    S: np.ndarray      # (R R')^{-1}
    Sinv: np.ndarray   # R R'


class _Scaling:
    """Nesterov-Todd scalings for the current strictly feasible (x, z)."""

    def __init__(self, x, z, cones: _Cones):
        self.cones = cones
        if len(cones.nonneg):
            xs = x[cones.nonneg]
            zs = z[cones.nonneg]
            if xs.min() <= 0 or zs.min() <= 0:
                raise FloatingPointError("nonnegative iterate left the cone")
            self.w = np.sqrt(xs / zs)
            self.gamma_l = np.sqrt(xs * zs)
        else:
            self.w = np.empty(0)
            self.gamma_l = np.empty(0)
        self.psd = []
        for sl, side in cones.psd:
            X = smat(x[sl], side)
            Z = smat(z[sl], side)
            wz, Qz = np.linalg.eigh(Z)
            if wz.min() <= 0:
                raise FloatingPointError("PSD dual iterate left the cone")
            Zh = (Qz * np.sqrt(wz)) @ Qz.T
            Zih = (Qz * (1.0 / np.sqrt(wz))) @ Qz.T
            M = Zh @ X @ Zh
            g2, U = np.linalg.eigh((M + M.T) / 2.0)
            if g2.min() <= 0:
                raise FloatingPointError("PSD primal iterate left the cone")
            groot = g2**0.25
            R = Zih @ (U * groot)
            Rinv = ((U / groot).T) @ Zh
            self.psd.append(
                _PsdScaling(
                    R=R,
                    Rinv=Rinv,
                    gamma=np.sqrt(g2),
                    S=Rinv.T @ Rinv,
                    Sinv=R @ R.T,
                )
            )

    # Theta is the linear map Delta-z = ... - Theta Delta-x from the scaled
    # complementarity linearization: diag(z/x) on nonneg, M -> S M S on PSD.
    def apply_theta(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        cones = self.cones
        if len(cones.nonneg):
            out[cones.nonneg] = v[cones.nonneg] / self.w**2
        for (sl, side), ps in zip(cones.psd, self.psd):
            out[sl] = svec(ps.S @ smat(v[sl], side) @ ps.S)
        return out

    def apply_theta_inv(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        cones = self.cones
        if len(cones.nonneg):
            out[cones.nonneg] = v[cones.nonneg] * self.w**2
        for (sl, side), ps in zip(cones.psd, self.psd):
            out[sl] = svec(ps.Sinv @ smat(v[sl], side) @ ps.Sinv)
        return out


def _svec_basis(side: int) -> np.ndarray:
    """Stack of unsvec'd unit vectors (the symmetric matrix basis)."""
    length = side * (side + 1) // 2
    eye = np.eye(length)
    return kernels.unsvec_stack(eye, side, SQRT2)


_BASIS_CACHE: dict[int, np.ndarray] = {}


def _theta_dense(S: np.ndarray) -> np.ndarray:
    """Dense svec-space matrix of M -> S M S (symmetric Kronecker square)."""
    side = S.shape[0]
    basis = _BASIS_CACHE.get(side)
    if basis is None:
        basis = _svec_basis(side)
        _BASIS_CACHE[side] = basis
    transformed = kernels.batch_congruence(S, basis)
    return kernels.svec_stack(transformed, SQRT2)


class _FactorBase:
    """Shared refinement logic on top of a raw saddle solve."""

    def __init__(self, A: sp.csr_matrix, scaling: _Scaling, cones: _Cones):
        self.A = A
        self.At = A.T.tocsr()
        self.scaling = scaling
        self.cones = cones

    def solve(self, rx: np.ndarray, ry: np.ndarray, refine: int = 4):
        dx, dy = self._raw_solve(rx, ry)
        scale = 1.0 + _norm_inf(rx) + _norm_inf(ry)
        best_dx, best_dy, best_res = dx, dy, np.inf
        for _ in range(refine + 1):
            # apply_theta vanishes on free coordinates, matching the free rows
            r1 = rx + self.scaling.apply_theta(dx) - self.At @ dy
            r2 = ry - self.A @ dx
            res = max(_norm_inf(r1), _norm_inf(r2))
            if res >= best_res:
                break  # refinement stopped contracting; keep the best iterate
            best_dx, best_dy, best_res = dx, dy, res
            if res < 1e-14 * scale:
                break
            ex, ey = self._raw_solve(r1, r2)
            dx = dx + ex
            dy = dy + ey
        if best_res > _SOLVE_QUALITY * scale:
            raise FloatingPointError(
                f"KKT solve residual {best_res:.2e} exceeds quality gate"
            )
        return best_dx, best_dy


class _GeneralKKT(_FactorBase):
    """Dense elimination of the cone block: saddle system on (y, x_free)."""

    def __init__(self, A, scaling, cones, reg: float):
        super().__init__(A, scaling, cones)
        m = A.shape[0]
        nf = len(cones.free)
        Af = A[:, cones.free] if nf else sp.csr_matrix((m, 0))
        self.Af = Af.tocsr()
        # G = A_c Theta^{-1} A_c'
        G = np.zeros((m, m))
        if len(cones.nonneg):
            An = A[:, cones.nonneg].tocsr()
            G += (An.multiply(scaling.w**2) @ An.T).toarray()
        self.theta_inv_psd = []
        for (sl, side), ps in zip(cones.psd, scaling.psd):
            Ab = A[:, sl].tocsr()
            Tinv = _theta_dense(ps.Sinv)
            self.theta_inv_psd.append(Tinv)
            W1 = Ab @ Tinv  # (m, len_b)
            G += W1 @ Ab.T.toarray()
        size = m + nf
        M = np.zeros((size, size))
        M[:m, :m] = G
        if nf:
            M[:m, m:] = self.Af.toarray()
            M[m:, :m] = self.Af.T.toarray()
        M[:m, :m] += reg * np.eye(m)
        M[m:, m:] -= reg * np.eye(nf)
        self.m = m
        self.nf = nf
        self.lu = sla.lu_factor(M, check_finite=False)

    def _raw_solve(self, rx, ry):
        cones = self.cones
        scal = self.scaling
        rhs1 = ry + (self.A @ scal.apply_theta_inv(_cone_only(rx, cones)))
        rhs2 = rx[cones.free]
        sol = sla.lu_solve(self.lu, np.concatenate([rhs1, rhs2]), check_finite=False)
        dy = sol[: self.m]
        dx = np.zeros(cones.n)
        dx[cones.free] = sol[self.m :]
        w = self.At @ dy - rx
        dxc = scal.apply_theta_inv(_cone_only(w, cones))
        dx[cones.cone] = dxc[cones.cone]
        return dx, dy


def _cone_only(v: np.ndarray, cones: _Cones) -> np.ndarray:
    out = np.zeros_like(v)
    out[cones.cone] = v[cones.cone]
    return out


class _StructuredPlan:
    """Static analysis for the structured path: every cone variable appears in
    exactly one row, and each such linking row holds exactly one cone variable."""

    def __init__(self, program: ConicProgram, cones: _Cones):
        A = program.A
        m, n = A.shape
        self.ok = False
        if not len(cones.cone):
            return
        Ac = A[:, cones.cone].tocsc()
        nnz_per_col = np.diff(Ac.indptr)
        if not np.all(nnz_per_col == 1):
            return
        link_row = Ac.indices.astype(np.int64)  # row of each cone column
        counts = np.bincount(link_row, minlength=m)
        if counts.max(initial=0) > 1:
            return
        self.ok = True
        beta = Ac.data.astype(float)
        nf = len(cones.free)
        Af = (A[:, cones.free] if nf else sp.csr_matrix((m, 0))).tocsr()
        self.Af = Af
        # per-block pieces, in cone-column order (svec slot order)
        pos_of_var = np.full(n, -1, dtype=np.int64)
        pos_of_var[cones.cone] = np.arange(len(cones.cone))
        self.blocks = []
        for kind, sl, side in _iter_blocks(cones):
            pos = pos_of_var[np.arange(sl.start, sl.stop)]
            rows = link_row[pos]
            bet = beta[pos]
            U = sp.diags(1.0 / bet) @ Af[rows, :]
            self.blocks.append(
                {
                    "kind": kind,
                    "slice": sl,
                    "side": side,
                    "rows": rows,
                    "beta": bet,
                    "U": U.tocsr(),
                    "Ut": U.T.tocsr(),
                }
            )
        link_mask = np.zeros(m, dtype=bool)
        link_mask[link_row] = True
        self.W_rows = np.where(~link_mask)[0]
        self.AfW = Af[self.W_rows, :].tocsr()
        self.m = m
        self.nf = nf


def _iter_blocks(cones: _Cones):
    """Yield (kind, slice, side) for nonneg runs and psd blocks in variable order."""
    items = []
    if len(cones.nonneg):
        # contiguous runs of nonneg indices
        idx = cones.nonneg
        start = idx[0]
        prev = idx[0]
        for v in idx[1:]:
            if v != prev + 1:
                items.append(("nonneg", slice(int(start), int(prev) + 1), 0))
                start = v
            prev = v
        items.append(("nonneg", slice(int(start), int(prev) + 1), 0))
    for sl, side in cones.psd:
        items.append(("psd", sl, side))
    items.sort(key=lambda t: t[1].start)
    return items


class _StructuredKKT(_FactorBase):
    def __init__(self, A, scaling, cones, plan: _StructuredPlan, reg: float):
        super().__init__(A, scaling, cones)
        self.plan = plan
        nf = plan.nf
        mw = len(plan.W_rows)
        H = np.zeros((nf, nf))
        self.thetas = []
        for blk in plan.blocks:
            theta = self._block_theta(blk)
            self.thetas.append(theta)
            Ut = blk["Ut"]
            if blk["kind"] == "psd":
                W1 = Ut @ theta  # (nf, len_b)
            else:
                W1 = Ut.multiply(theta).tocsr()  # diag theta
                W1 = W1.toarray()
            H += Ut @ W1.T
        size = nf + mw
        M = np.zeros((size, size))
        M[:nf, :nf] = -H
        if mw:
            M[:nf, nf:] = plan.AfW.T.toarray()
            M[nf:, :nf] = plan.AfW.toarray()
        M[:nf, :nf] -= reg * np.eye(nf)
        M[nf:, nf:] += reg * np.eye(mw)
        self.nf = nf
        self.mw = mw
        self.lu = sla.lu_factor(M, check_finite=False) if size else None

    def _block_theta(self, blk):
        scal = self.scaling
        if blk["kind"] == "psd":
            ps = scal.psd[[sl for sl, _ in self.cones.psd].index(blk["slice"])]
            return _theta_dense(ps.S)
        # nonneg run: positions within cones.nonneg
        idx = np.arange(blk["slice"].start, blk["slice"].stop)
        pos = np.searchsorted(self.cones.nonneg, idx)
        return 1.0 / scal.w[pos] ** 2

    def _apply_block_theta(self, k: int, v: np.ndarray) -> np.ndarray:
        theta = self.thetas[k]
        if self.plan.blocks[k]["kind"] == "psd":
            return theta @ v
        return theta * v

    def _raw_solve(self, rx, ry):
        # The elimination never applies Theta^{-1}: near convergence
        # cond(Theta) reaches 1/eps and a Theta^{-1}/Theta round trip would
        # destroy the right-hand side.  Only forward applications appear,
        # so the dominant error term is eps*|Theta|*|dx_c|, which stays
        # small because dx_c itself shrinks with the residual.
        plan = self.plan
        cones = self.cones
        rhs1 = rx[cones.free].copy()
        t_blocks = []
        for k, blk in enumerate(plan.blocks):
            sl = blk["slice"]
            ry_over_beta = ry[blk["rows"]] / blk["beta"]
            t_blocks.append(ry_over_beta)
            rhs1 -= blk["Ut"] @ (rx[sl] + self._apply_block_theta(k, ry_over_beta))
        rhs2 = ry[plan.W_rows]
        if self.lu is not None:
            sol = sla.lu_solve(self.lu, np.concatenate([rhs1, rhs2]), check_finite=False)
        else:
            sol = np.empty(0)
        dxf = sol[: self.nf]
        dyw = sol[self.nf :]
        dy = np.zeros(plan.m)
        dy[plan.W_rows] = dyw
        dx = np.zeros(cones.n)
        dx[cones.free] = dxf
        for k, blk in enumerate(plan.blocks):
            sl = blk["slice"]
            dxc = t_blocks[k] - blk["U"] @ dxf  # exact linking-row back-substitution
            dx[sl] = dxc
            dy[blk["rows"]] = (rx[sl] + self._apply_block_theta(k, dxc)) / blk["beta"]
        return dx, dy


def _factor(program, scaling, cones, plan, reg):
    if plan is not None and plan.ok:
        return _StructuredKKT(program.A, scaling, cones, plan, reg)
    return _GeneralKKT(program.A, scaling, cones, reg)


# -------------------------------------------------------------- directions


def _u_from_dc(dc_nonneg, dc_psd, scaling: _Scaling, cones: _Cones) -> np.ndarray:
    """Map the complementarity right-hand side d_c (in the scaled frame) to the
    vector u with Delta-z = u - Theta Delta-x."""
    u = np.zeros(cones.n)
    if len(cones.nonneg):
        u[cones.nonneg] = dc_nonneg / (scaling.gamma_l * scaling.w)
    for (sl, side), ps, dc in zip(cones.psd, scaling.psd, dc_psd):
        dt = 2.0 * dc / np.add.outer(ps.gamma, ps.gamma)
        u[sl] = svec(ps.Rinv.T @ dt @ ps.Rinv)
    return u


def _direction(kkt, scaling, cones, c, b, q1, q2, rp, rd, rg, dc_nonneg, dc_psd, dtk, tau, kappa):
    u = _u_from_dc(dc_nonneg, dc_psd, scaling, cones)
    rx = rd - u
    rx[cones.free] = rd[cones.free]
    p1, p2 = kkt.solve(rx, rp)
    denom = float(b @ q2 - c @ q1 + kappa / tau)
    if denom == 0.0 or not np.isfinite(denom):
        raise FloatingPointError("singular tau equation")
    dtau = float(rg + dtk / tau - b @ p2 + c @ p1) / denom
    dx = p1 + dtau * q1
    dy = p2 + dtau * q2
    dz = rd - (kkt.At @ dy) + dtau * c
    dz[cones.free] = 0.0
    dkap = (dtk - kappa * dtau) / tau
    return dx, dy, dz, dtau, dkap


def _scaled_dirs(dx, dz, scaling: _Scaling, cones: _Cones):
    """Scaled-frame directions per cone block (for steps and the corrector)."""
    out = {"nonneg": None, "psd": []}
    if len(cones.nonneg):
        p = dx[cones.nonneg] / scaling.w
        q = dz[cones.nonneg] * scaling.w
        out["nonneg"] = (p, q)
    for (sl, side), ps in zip(cones.psd, scaling.psd):
        P = ps.Rinv @ smat(dx[sl], side) @ ps.Rinv.T
        Q = ps.R.T @ smat(dz[sl], side) @ ps.R
        out["psd"].append((P, Q))
    return out


def _max_step(scaling: _Scaling, cones: _Cones, dirs, tau, kappa, dtau, dkap) -> float:
    alpha = _BIG
    if dirs["nonneg"] is not None:
        p, q = dirs["nonneg"]
        g = scaling.gamma_l
        for d in (p, q):
            neg = d < 0
            if neg.any():
                alpha = min(alpha, float((g[neg] / -d[neg]).min()))
    for ps, (P, Q) in zip(scaling.psd, dirs["psd"]):
        roots = np.sqrt(ps.gamma)
        for D in (P, Q):
            Mh = D / np.outer(roots, roots)
            lam = np.linalg.eigvalsh((Mh + Mh.T) / 2.0)
            if lam[0] < 0:
                alpha = min(alpha, 1.0 / -float(lam[0]))
    if dtau < 0:
        alpha = min(alpha, tau / -dtau)
    if dkap < 0:
        alpha = min(alpha, kappa / -dkap)
    return alpha


# ------------------------------------------------------- equilibration


class _Equilibration:
    """Ruiz diagonal equilibration of the program data.

    Rows get individual scale factors; cone variables get one factor per
    block (a PSD block must be scaled uniformly to stay a congruence, which
    preserves the cone), free/nonneg columns get individual factors.  The
    transformed problem is  min (Dc c)'x~  s.t. (Dr A Dc) x~ = Dr b,  and
    the original solution is x = Dc x~, y = Dr y~, z = Dc^{-1} z~; both
    objectives are invariant.
    """

    def __init__(self, program: ConicProgram, iters: int = 10):
        A = program.A.tocsr().astype(float)
        m, n = A.shape
        d_r = np.ones(m)
        d_c = np.ones(n)
        groups = []  # (slice, uniform?) per cone block
        off = 0
        for blk in program.cones:
            groups.append((slice(off, off + blk.length), blk.kind == "psd"))
            off += blk.length
        for _ in range(iters):
            Aabs = abs(A)
            rn = np.asarray(Aabs.max(axis=1).todense()).ravel() if m else np.zeros(0)
            rn[rn == 0] = 1.0
            sr = 1.0 / np.sqrt(rn)
            cn = np.asarray(Aabs.max(axis=0).todense()).ravel() if m else np.ones(n)
            for sl, uniform in groups:
                seg = cn[sl]
                seg[seg == 0] = 1.0
                if uniform:
                    seg[:] = seg.max()
                cn[sl] = seg
            sc = 1.0 / np.sqrt(cn)
            A = sp.diags(sr) @ A @ sp.diags(sc)
            d_r *= sr
            d_c *= sc
        self.d_r = d_r
        self.d_c = d_c
        self.scaled = ConicProgram(
            objective=program.objective * d_c,
            A=A.tocsr(),
            b=program.b * d_r,
            cones=program.cones,
        )

    def unscale(self, x, y, z):
        return x * self.d_c, y * self.d_r, z / self.d_c


# -------------------------------------------------------------- main loop


def _package(status, x, y, z, tau, program, iters, t0, backend="reference"):
    A, b, c = program.A, program.b, program.objective
    if status in ("optimal", "iteration_limit", "numerical_trouble") and tau > 0:
        xs, ys, zs = x / tau, y / tau, z / tau
    else:
        xs, ys, zs = x, y, z
    pobj = float(c @ xs)
    dobj = float(b @ ys)
    pres = _norm_inf(A @ xs - b) / (1.0 + _norm_inf(b))
    dres = _norm_inf(A.T @ ys + zs - c) / (1.0 + _norm_inf(c))
    gap = abs(pobj - dobj) / max(1.0, abs(pobj), abs(dobj))
    # Objective convention for certificates: an infeasible minimization has
    # value +inf, an infeasible dual has value -inf, so weak duality
    # (dual <= primal) holds on every returned solution regardless of status.
    if status == "primal_infeasible":
        pobj = float("inf")
    elif status == "dual_infeasible":
        dobj = float("-inf")
    return ConicSolution(
        status=status,
        primal=xs,
        equality_multipliers=ys,
        cone_duals=zs,
        primal_objective=pobj,
        dual_objective=dobj,
        residuals={
            "primal_feasibility": pres,
            "dual_feasibility": dres,
            "gap": gap,
        },
        iterations=iters,
        solve_seconds=time.perf_counter() - t0,
        backend=backend,
    )


def _solve_reference(program: ConicProgram, settings: SolverSettings) -> ConicSolution:
    t0 = time.perf_counter()
    m, n = program.A.shape

    # presolve: an all-zero row with nonzero rhs is a one-line Farkas certificate
    row_nnz = np.diff(program.A.indptr)
    zero_rows = np.where(row_nnz == 0)[0]
    if zero_rows.size:
        bad = zero_rows[np.abs(program.b[zero_rows]) > 1e-12 * (1.0 + _norm_inf(program.b))]
        if bad.size:
            r = int(bad[0])
            y = np.zeros(m)
            y[r] = 1.0 / program.b[r]
            sol = _package("primal_infeasible", np.zeros(n), y, np.zeros(n), 1.0,
                           program, 0, t0)
            return sol

    # presolve: scaled-duplicate rows would make the KKT saddle singular.
    # Consistent duplicates are dropped; an inconsistent pair is a two-row
    # Farkas certificate (y supported on the pair with b'y = 1, A'y = 0).
    keep, farkas = _duplicate_row_presolve(program)
    if farkas is not None:
        return _package("primal_infeasible", np.zeros(n), farkas, np.zeros(n), 1.0,
                        program, 0, t0)
    if not keep.all():
        kept = np.where(keep)[0]
        reduced = ConicProgram(
            objective=program.objective,
            A=program.A[kept],
            b=program.b[kept],
            cones=program.cones,
        )
        sol = _solve_reference(reduced, settings)
        y_full = np.zeros(m)
        y_full[kept] = sol.equality_multipliers
        sol.equality_multipliers = y_full
        return sol

    eq = _Equilibration(program)
    work = eq.scaled
    A, b, c = work.A, work.b, work.objective
    cones = _Cones(work)

    def finish(status, x_, y_, z_, tau_, iters):
        xs, ys, zs = eq.unscale(x_, y_, z_)
        return _package(status, xs, ys, zs, tau_, program, iters, t0)

    plan = _StructuredPlan(work, cones)
    x = cones.init_point()
    z = cones.init_point()
    y = np.zeros(m)
    tau = 1.0
    kappa = 1.0
    nu = cones.barrier_degree + 1
    tol = settings.tol
    reg0 = _REG0
    best = None
    best_score = np.inf
    small_steps = 0

    for it in range(settings.max_iters):
        rp = b * tau - A @ x
        rd = c * tau - A.T @ y - z
        rg = kappa + float(c @ x) - float(b @ y)
        cx = float(c @ x)
        by = float(b @ y)
        pobj = cx / tau
        dobj = by / tau
        pres = _norm_inf(A @ x / tau - b) / (1.0 + _norm_inf(b))
        dres = _norm_inf(A.T @ y / tau + z / tau - c) / (1.0 + _norm_inf(c))
        gap = abs(pobj - dobj) / max(1.0, abs(pobj), abs(dobj))
        mu = (float(x @ z) + tau * kappa) / nu

        if settings.verbosity >= 1:
            print(
                f"iter {it:3d}  pobj {pobj: .6e}  dobj {dobj: .6e}  "
                f"pres {pres:.2e}  dres {dres:.2e}  gap {gap:.2e}  "
                f"tau {tau:.2e}  kappa {kappa:.2e}"
            )

        score = max(pres, dres, gap)
        if score < best_score:
            best_score = score
            best = (x.copy(), y.copy(), z.copy(), tau, it)

        if pres <= tol and dres <= tol and gap <= tol:
            return finish("optimal", x, y, z, tau, it)

        # Farkas certificate checks
        if by > 1e-10:
            pinf_res = _norm_inf(A.T @ y + z) / by
            if pinf_res <= tol * max(1.0, _norm_inf(c)):
                return finish("primal_infeasible", x, y / by, z / by, 0.0, it)
        if cx < -1e-10:
            dinf_res = _norm_inf(A @ x) / -cx
            if dinf_res <= tol * max(1.0, _norm_inf(b)):
                return finish("dual_infeasible", x / -cx, y, z, 0.0, it)
        if tau <= tol * 1e-2 * max(1.0, kappa):
            if by > 0 and _norm_inf(A.T @ y + z) / by <= np.sqrt(tol):
                return finish("primal_infeasible", x, y / by, z / by, 0.0, it)
            if cx < 0 and _norm_inf(A @ x) / -cx <= np.sqrt(tol):
                return finish("dual_infeasible", x / -cx, y, z, 0.0, it)
            bx, by_, bz, btau, bit = best
            return finish("numerical_trouble", bx, by_, bz, btau, it)

        try:
            scaling = _Scaling(x, z, cones)
        except (FloatingPointError, np.linalg.LinAlgError):
            bx, by_, bz, btau, bit = best
            return finish("numerical_trouble", bx, by_, bz, btau, it)

        # The full direction computation sits inside the regularization
        # ladder: a solve whose refined residual fails the quality gate
        # retries with a stronger diagonal shift before giving up.
        step = None
        for bump in (1.0, 1e4, 1e8):
            try:
                kkt = _factor(work, scaling, cones, plan, reg0 * bump)
                q1, q2 = kkt.solve(c, b)
                if not (np.isfinite(q1).all() and np.isfinite(q2).all()):
                    raise FloatingPointError("non-finite KKT solution")

                # predictor
                dc_nonneg = -scaling.gamma_l**2 if len(cones.nonneg) else np.empty(0)
                dc_psd = [-np.diag(ps.gamma**2) for ps in scaling.psd]
                aff = _direction(kkt, scaling, cones, c, b, q1, q2, rp, rd, rg,
                                 dc_nonneg, dc_psd, -tau * kappa, tau, kappa)
                dxa, dya, dza, dtaua, dkapa = aff
                dirs_a = _scaled_dirs(dxa, dza, scaling, cones)
                alpha_aff = min(1.0, _max_step(scaling, cones, dirs_a, tau, kappa,
                                               dtaua, dkapa))
                xz_aff = float((x + alpha_aff * dxa) @ (z + alpha_aff * dza))
                mu_aff = (xz_aff + (tau + alpha_aff * dtaua)
                          * (kappa + alpha_aff * dkapa)) / nu
                sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.1

                # corrector
                smu = sigma * mu
                if len(cones.nonneg):
                    pa, qa = dirs_a["nonneg"]
                    dc_nonneg = smu - scaling.gamma_l**2 - pa * qa
                dc_psd = []
                for ps, (Pa, Qa) in zip(scaling.psd, dirs_a["psd"]):
                    eta = (Pa @ Qa + Qa @ Pa) / 2.0
                    dc_psd.append(smu * np.eye(len(ps.gamma)) - np.diag(ps.gamma**2) - eta)
                dtk = smu - tau * kappa - dtaua * dkapa
                dx, dy, dz, dtau, dkap = _direction(kkt, scaling, cones, c, b, q1, q2,
                                                    rp, rd, rg, dc_nonneg, dc_psd, dtk,
                                                    tau, kappa)
                dirs = _scaled_dirs(dx, dz, scaling, cones)
                alpha = _STEP_FRACTION * _max_step(scaling, cones, dirs, tau, kappa,
                                                   dtau, dkap)
                alpha = min(alpha, 1.0)
                if alpha < 1e-10 and bump < 1e8:
                    # an immediately-blocked step is a bad direction, not a
                    # short one: escalate the regularization instead
                    raise FloatingPointError("blocked step")
                step = (dx, dy, dz, dtau, dkap, alpha)
                break
            except (FloatingPointError, ValueError, np.linalg.LinAlgError):
                continue
        if step is None:
            bx, by_, bz, btau, bit = best
            return finish("numerical_trouble", bx, by_, bz, btau, it)
        dx, dy, dz, dtau, dkap, alpha = step

        if alpha < 1e-10:
            small_steps += 1
            if small_steps >= 3:
                bx, by_, bz, btau, bit = best
                return finish("numerical_trouble", bx, by_, bz, btau, it)
        else:
            small_steps = 0

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap
        if not (np.isfinite(x).all() and np.isfinite(z).all() and np.isfinite(tau)):
            bx, by_, bz, btau, bit = best
            return finish("numerical_trouble", bx, by_, bz, btau, it)

    bx, by_, bz, btau, bit = best
    return finish("iteration_limit", bx, by_, bz, btau, settings.max_iters)


def solve(program: ConicProgram, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve a conic program with the configured backend.

    Residuals in the returned solution are relative infinity norms
    (primal feasibility, dual feasibility, objective gap).  For infeasible
    statuses the corresponding fields carry the Farkas certificate: a
    primal-infeasible solution has equality_multipliers y and cone_duals z
    with A'y + z ~ 0 and b'y = 1; a dual-infeasible one has a primal ray x
    with A x ~ 0, x in K and c'x = -1.
    """
    settings = settings or SolverSettings()
    backend = settings.backend
    if backend == "auto":
        # the structured elimination keeps large programs cheap, so only
        # hand off unstructured ones that would hit the dense fallback
        if (
            program.n_vars > REFERENCE_SIZE_LIMIT
            and not _has_structured_form(program)
            and _cvxopt_available()
        ):
            backend = "cvxopt"
        else:
            backend = "reference"
    if backend == "reference":
        return _solve_reference(program, settings)
    if backend == "cvxopt":
        from . import cvxopt_backend

        return cvxopt_backend.solve_cvxopt(program, settings)
    raise ValueError(f"unknown solver backend {settings.backend!r}")


def _duplicate_row_presolve(program: ConicProgram):
    """Find rows that are scalar multiples of an earlier row.

    Returns (keep mask, farkas y or None).  Only rows with identical sparsity
    patterns are compared, so the scan is linear in nnz; more general rank
    deficiency (a row equal to a combination of several others) is out of
    scope — assembly never produces it.
    """
    A = program.A
    m = A.shape[0]
    keep = np.ones(m, dtype=bool)
    groups: dict[bytes, list[int]] = {}
    for i in range(m):
        sl = slice(A.indptr[i], A.indptr[i + 1])
        if sl.start == sl.stop:
            continue  # zero rows handled separately
        groups.setdefault(A.indices[sl].tobytes(), []).append(i)
    b = program.b
    b_scale = 1.0 + _norm_inf(b)
    for rows in groups.values():
        if len(rows) < 2:
            continue
        reps = [rows[0]]
        for i in rows[1:]:
            di = A.data[A.indptr[i]:A.indptr[i + 1]]
            for j in reps:
                dj = A.data[A.indptr[j]:A.indptr[j + 1]]
                alpha = di[0] / dj[0]
                if np.abs(di - alpha * dj).max() <= 1e-14 * np.abs(di).max():
                    resid = b[i] - alpha * b[j]
                    if abs(resid) > 1e-9 * b_scale * max(1.0, abs(alpha)):
                        y = np.zeros(m)
                        y[i] = 1.0 / resid
                        y[j] = -alpha / resid
                        return keep, y
                    keep[i] = False
                    break
            else:
                reps.append(i)
    return keep, None


def _has_structured_form(program: ConicProgram) -> bool:
    """Cheap static test for the structured elimination pattern: every cone
    variable appears in exactly one row, each such row in one cone variable."""
    cones = _Cones(program)
    if not len(cones.cone):
        return False
    Ac = program.A[:, cones.cone].tocsc()
    if not np.all(np.diff(Ac.indptr) == 1):
        return False
    counts = np.bincount(Ac.indices, minlength=program.A.shape[0])
    return counts.max(initial=0) <= 1


def _cvxopt_available() -> bool:
    try:
        import cvxopt  # noqa: F401

        return True
    except ImportError:
        return False
