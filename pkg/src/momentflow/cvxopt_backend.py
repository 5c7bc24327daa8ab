"""Optional conic backend that delegates to cvxopt's conelp solver.

The program variable x stays the conelp variable (free by default); cone
membership is imposed through slack rows  -x_c + s = 0,  s in C, so the
mapping is exact rather than a reformulation.  PSD slacks use cvxopt's
full column-major matrix vectorization, converted from this package's
scaled upper-triangle convention.

Dual recovery: conelp stationarity reads c + A'y_c + G'z_c = 0, so the
equality multipliers of this package's convention (A'y + z = c) are
y = -y_c and z = -G'z_c.
"""

from __future__ import annotations

import time

import numpy as np

from .conic import SQRT2, ConicProgram, ConicSolution
from .ipm import SolverSettings, _norm_inf


def solve_cvxopt(program: ConicProgram, settings: SolverSettings) -> ConicSolution:
    import cvxopt
    import cvxopt.solvers

    t0 = time.perf_counter()
    A = program.A.tocoo()
    m, n = program.A.shape

    g_rows: list[int] = []
    g_cols: list[int] = []
    g_vals: list[float] = []
    n_l = 0
    sides: list[int] = []
    row_off = 0
    off = 0
    for blk in program.cones:
        if blk.kind == "nonneg":
            for j in range(blk.length):
                g_rows.append(row_off + j)
                g_cols.append(off + j)
                g_vals.append(-1.0)
            n_l += blk.length
            row_off += blk.length
        elif blk.kind == "psd":
            sides.append(blk.size)
        off += blk.length
    off = 0
    for blk in program.cones:
        if blk.kind == "psd":
            side = blk.size
            col = off
            for i in range(side):
                for j in range(i, side):
                    val = -1.0 if i == j else -1.0 / SQRT2
                    g_rows.append(row_off + i * side + j)
                    g_cols.append(col)
                    g_vals.append(val)
                    if i != j:
                        g_rows.append(row_off + j * side + i)
                        g_cols.append(col)
                        g_vals.append(val)
                    col += 1
            row_off += side * side
        off += blk.length

    G = cvxopt.spmatrix(g_vals, g_rows, g_cols, (row_off, n))
    h = cvxopt.matrix(np.zeros(row_off))
    Ac = cvxopt.spmatrix(
        A.data.tolist(), A.row.tolist(), A.col.tolist(), (m, n)
    )
    bc = cvxopt.matrix(np.asarray(program.b, dtype=float))
    cc = cvxopt.matrix(np.asarray(program.objective, dtype=float))
    dims = {"l": n_l, "q": [], "s": sides}

    saved = dict(cvxopt.solvers.options)
    cvxopt.solvers.options.update(
        {
            "show_progress": settings.verbosity > 0,
            "maxiters": settings.max_iters,
            "abstol": settings.tol,
            "reltol": settings.tol,
            "feastol": settings.tol,
        }
    )
    try:
        sol = cvxopt.solvers.conelp(cc, G, h, dims=dims, A=Ac, b=bc)
    except (ValueError, ArithmeticError) as err:
        return _failure(program, f"conelp error: {err}", t0)
    finally:
        cvxopt.solvers.options.clear()
        cvxopt.solvers.options.update(saved)

    status_map = {
        "optimal": "optimal",
        "primal infeasible": "primal_infeasible",
        "dual infeasible": "dual_infeasible",
    }
    status = status_map.get(sol["status"], "numerical_trouble")

    def _vec(key):
        v = sol[key]
        return np.zeros(0) if v is None else np.asarray(v, dtype=float).ravel()

    x = _vec("x") if sol["x"] is not None else np.zeros(n)
    y_c = _vec("y") if sol["y"] is not None else np.zeros(m)
    z_c = _vec("z") if sol["z"] is not None else np.zeros(row_off)
    y = -y_c
    Gt = np.zeros(n)
    if z_c.size:
        Gdense = np.zeros((row_off, n))
        Gdense[g_rows, g_cols] = g_vals
        Gt = -(Gdense.T @ z_c)
    z = Gt

    c_arr = np.asarray(program.objective, dtype=float)
    b_arr = np.asarray(program.b, dtype=float)
    pobj = float(c_arr @ x)
    dobj = float(b_arr @ y)
    pres = _norm_inf(program.A @ x - b_arr) / (1.0 + _norm_inf(b_arr))
    dres = _norm_inf(program.A.T @ y + z - c_arr) / (1.0 + _norm_inf(c_arr))
    gap = abs(pobj - dobj) / max(1.0, abs(pobj), abs(dobj))
    # same certificate objective convention as the reference backend: weak
    # duality holds on every returned solution
    if status == "primal_infeasible":
        pobj = float("inf")
    elif status == "dual_infeasible":
        dobj = float("-inf")
    return ConicSolution(
        status=status,
        primal=x,
        equality_multipliers=y,
        cone_duals=z,
        primal_objective=pobj,
        dual_objective=dobj,
        residuals={
            "primal_feasibility": pres,
            "dual_feasibility": dres,
            "gap": gap,
        },
        iterations=int(sol.get("iterations", 0)),
        solve_seconds=time.perf_counter() - t0,
        backend="cvxopt",
    )


def _failure(program: ConicProgram, message: str, t0: float) -> ConicSolution:
    m, n = program.A.shape
    return ConicSolution(
        status="numerical_trouble",
        primal=np.zeros(n),
        equality_multipliers=np.zeros(m),
        cone_duals=np.zeros(n),
        # nothing is known: +inf/-inf keep weak duality vacuously true
        primal_objective=float("inf"),
        dual_objective=float("-inf"),
        residuals={
            "primal_feasibility": float("inf"),
            "dual_feasibility": float("inf"),
            "gap": float("inf"),
        },
        iterations=0,
        solve_seconds=time.perf_counter() - t0,
        backend="cvxopt",
    )
