"""Dual active-set QP solver (Goldfarb and Idnani) for strictly convex problems.

Used as an independent reference for the ADMM solver. The implementation
recomputes the reduced quantities from scratch at each step instead of
updating factorizations; it is meant for small dense instances.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from ..errors import DimensionError
from .qp import QpProblem, QpSolution


def solve_qp_active_set(problem: QpProblem, max_iter: int = 10000, tol: float = 1e-11) -> QpSolution:
    """Solve a strictly convex QP exactly (up to rounding).

    Constraints are converted to ``n_i' z >= b_i`` rows; equality rows are
    added first and never dropped.

    Returns
    -------
    QpSolution
        ``y`` holds stacked multipliers in the convention of :func:`solve_qp`.
    """
    H, g = problem.H, problem.g
    n = g.size
    try:
        chol = sla.cho_factor(H, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DimensionError("active-set oracle requires a positive definite Hessian") from exc

    A, lo, up = problem.stacked()
    m = A.shape[0]
    eq = (up - lo) < 1e-12
    # rows as n'z >= b with a back-reference (row, sign)
    normals, rhs, origin = [], [], []
    for i in range(m):
        if eq[i]:
            continue
        if np.isfinite(lo[i]):
            normals.append(A[i]); rhs.append(lo[i]); origin.append((i, 1.0))
        if np.isfinite(up[i]):
            normals.append(-A[i]); rhs.append(-up[i]); origin.append((i, -1.0))
    eq_rows = np.flatnonzero(eq)
    N_all = np.array(normals).reshape(-1, n)
    b_all = np.array(rhs)

    x = -sla.cho_solve(chol, g)
    active = []   # list of ('e', row, sign) or ('i', idx)
    u = []        # multipliers of active constraints (>= 0 for inequalities)

    def normal(c):
        return c[2] * A[c[1]] if c[0] == "e" else N_all[c[1]]

    def directions(npv):
        if not active:
            return sla.cho_solve(chol, npv), np.zeros(0)
        N = np.column_stack([normal(c) for c in active])
        HiN = sla.cho_solve(chol, N)
        S = N.T @ HiN
        r = np.linalg.lstsq(S, HiN.T @ npv, rcond=None)[0]
        z = sla.cho_solve(chol, npv) - HiN @ r
        return z, r

    def add_constraint(c, target_residual):
        """Primal/dual steps until constraint ``c`` becomes active."""
        nonlocal x, u
        npv = normal(c)
        up_ = 0.0
        for _ in range(max_iter):
            z, r = directions(npv)
            s = target_residual()
            t1, k_drop = np.inf, -1
            for j, cj in enumerate(active):
                if cj[0] == "i" and r[j] > tol:
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1, k_drop = ratio, j
            zz = z @ npv
            t2 = -s / zz if zz > tol * max(1.0, np.linalg.norm(npv)) ** 2 else np.inf
            if not np.isfinite(t1) and not np.isfinite(t2):
                return False
            t = min(t1, t2)
            if np.isfinite(t2):
                x = x + t * z
            u = [uj - t * rj for uj, rj in zip(u, r)]
            up_ += t
            if t2 <= t1:
                active.append(c)
                u.append(up_)
                return True
            del active[k_drop]
            del u[k_drop]
        return False

    for i in eq_rows:
        s0 = A[i] @ x - lo[i]
        sign = -1.0 if s0 > 0 else 1.0
        ok = add_constraint(("e", int(i), sign), lambda i=i, sign=sign: sign * (A[i] @ x - lo[i]))
        if not ok:
            return _result(problem, x, "infeasible", 0)

    it = 0
    while it < max_iter:
        it += 1
        if N_all.shape[0] == 0:
            break
        slack = N_all @ x - b_all
        in_set = {c[1] for c in active if c[0] == "i"}
        cand = [(slack[j], j) for j in range(len(slack)) if j not in in_set
                and slack[j] < -tol * (1.0 + abs(b_all[j]))]
        if not cand:
            break
        _, p = min(cand)
        ok = add_constraint(("i", p), lambda p=p: N_all[p] @ x - b_all[p])
        if not ok:
            return _result(problem, x, "infeasible", it)
    else:
        return _result(problem, x, "max-iter", it)

    y = np.zeros(m)
    for c, uj in zip(active, u):
        if c[0] == "e":
            y[c[1]] -= c[2] * uj
        else:
            row, sign = origin[c[1]]
            y[row] -= sign * uj
    sol = _result(problem, x, "optimal", it)
    sol.y = y
    return sol


def _result(problem, x, status, it):
    A, lo, up = problem.stacked()
    Az = A @ x
    viol = max(np.max(lo - Az, initial=0.0), np.max(Az - up, initial=0.0))
    obj = problem.objective(x) if status == "optimal" else np.nan
    return QpSolution(x, obj, status, it, viol, 0.0)
