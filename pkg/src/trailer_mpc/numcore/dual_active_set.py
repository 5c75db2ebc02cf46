"""Factorized dual active-set method used as a crossover for the ADMM solver.

Goldfarb-Idnani iteration with the ``J``/``R`` representation: ``J' H J = I``
and ``J' N = [R; 0]`` for the matrix ``N`` of active constraint normals.
Constraint additions use one Householder reflection, removals a sweep of
Givens rotations. An optional active-set guess only changes the order in
which violated constraints are added, so the result is exact regardless of
the quality of the guess.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

_VIOL_TOL = 1e-11
_STEP_TOL = 1e-14


def dual_active_set(H, g, A, lo, up, guess=None, guess_sides=None, max_iter=2000):
    """Minimize ``0.5 x'Hx + g'x`` s.t. ``lo <= A x <= up`` for PD ``H``.

    Parameters
    ----------
    guess : bool array, optional
        Rows expected to be active. The iteration is hot-started from the
        equality-constrained optimum on this set (after removing dependent
        rows and rows with multipliers of the wrong sign); violated rows from
        the set are then added first.
    guess_sides : array, optional
        ``+1`` for rows guessed active at ``lo``, ``-1`` at ``up``.

    Returns
    -------
    (x, y, iterations) or None
        ``y`` satisfies ``H x + g + A' y = 0``; ``None`` when the iteration
        limit is hit, the problem is infeasible or the factorization breaks down.
    """
    n = g.size
    m = A.shape[0]
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return None
    J = sla.solve_triangular(L, np.eye(n), lower=True, trans="T", check_finite=False)
    x = -sla.cho_solve((L, True), g, check_finite=False)
    R = np.zeros((n, n))
    q = 0
    rows = []    # active row index per column of R
    sides = []   # +1: lower side (a'x >= lo), -1: upper side (a'x <= up)
    u = np.zeros(n + 1)
    norms = np.maximum(np.linalg.norm(A, axis=1), 1e-300)
    eq = (up - lo) < 1e-12
    fin_lo = np.isfinite(lo)
    fin_up = np.isfinite(up)
    lo_f = np.where(fin_lo, lo, 0.0)
    up_f = np.where(fin_up, up, 0.0)
    prio = np.zeros(m) if guess is None else np.where(guess, 1.0, 0.0)
    in_set = np.zeros(m, dtype=bool)
    scale = 1.0 + np.maximum(np.abs(lo_f), np.abs(up_f))

    def drop(k):
        nonlocal q
        R[:, k:q - 1] = R[:, k + 1:q].copy()
        R[:, q - 1] = 0.0
        for i in range(k, q - 1):
            a, b = R[i, i], R[i + 1, i]
            h = np.hypot(a, b)
            if h == 0.0:
                continue
            c, s = a / h, b / h
            Ri, Ri1 = R[i, i:q - 1].copy(), R[i + 1, i:q - 1].copy()
            R[i, i:q - 1] = c * Ri + s * Ri1
            R[i + 1, i:q - 1] = -s * Ri + c * Ri1
            Ji, Ji1 = J[:, i].copy(), J[:, i + 1].copy()
            J[:, i] = c * Ji + s * Ji1
            J[:, i + 1] = -s * Ji + c * Ji1
        R[q - 1, :] = 0.0
        in_set[rows[k]] = False
        del rows[k]
        del sides[k]
        u[k:q - 1] = u[k + 1:q]
        u[q - 1] = 0.0
        q -= 1

    if guess is not None and np.any(guess):
        start = _hot_start(L, g, A, lo_f, up_f, eq, guess, guess_sides)
        if start is not None:
            Jh, Rh, xh, uh, rows_h, sides_h = start
            q = len(rows_h)
            J, x = Jh, xh
            R[:q, :q] = Rh
            u[:q] = uh
            rows[:], sides[:] = rows_h, sides_h
            in_set[rows_h] = True

    it = 0
    # equality rows first, then the guessed set, then everything else
    while it < max_iter:
        Ax = A @ x
        v_lo = np.where(fin_lo, lo_f - Ax, -np.inf) / norms
        v_up = np.where(fin_up, Ax - up_f, -np.inf) / norms
        viol = np.maximum(v_lo, v_up)
        viol[in_set] = -np.inf
        cand = viol > _VIOL_TOL * scale / norms
        if not np.any(cand):
            break
        eq_c = cand & eq
        if np.any(eq_c):
            pool = eq_c
        elif guess is not None and np.any(cand & (prio > 0)):
            pool = cand & (prio > 0)
        else:
            pool = cand
        p = int(np.argmax(np.where(pool, viol, -np.inf)))
        side = 1.0 if v_lo[p] >= v_up[p] else -1.0
        npv = side * A[p]
        bp = lo_f[p] if side > 0 else -up_f[p]
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                return None
            d = J.T @ npv
            z = J[:, q:] @ d[q:]
            if q:
                r = sla.solve_triangular(R[:q, :q], d[:q], check_finite=False)
            else:
                r = np.zeros(0)
            # partial step limit from inequality multipliers
            t1, k_drop = np.inf, -1
            if q:
                ineq = ~eq[np.array(rows)]
                pos = ineq & (r > _STEP_TOL)
                if np.any(pos):
                    ratios = np.where(pos, u[:q] / np.where(pos, r, 1.0), np.inf)
                    k_drop = int(np.argmin(ratios))
                    t1 = ratios[k_drop]
            zn = z @ npv
            s_p = npv @ x - bp
            t2 = -s_p / zn if abs(zn) > _STEP_TOL * (npv @ npv) else np.inf
            if not np.isfinite(t1) and not np.isfinite(t2):
                return None  # infeasible
            if not np.isfinite(t2):
                u[:q] -= t1 * r
                u_p += t1
                drop(k_drop)
                continue
            t = min(t1, t2)
            x = x + t * z
            u[:q] -= t * r
            u_p += t
            if t2 <= t1:
                # add p: reflect d[q:] onto its first coordinate
                d2 = d[q:]
                alpha = -np.copysign(np.linalg.norm(d2), d2[0])
                v = d2.copy()
                v[0] -= alpha
                vv = v @ v
                if vv > 0.0:
                    J[:, q:] -= np.outer(J[:, q:] @ v, v) * (2.0 / vv)
                R[:q, q] = d[:q]
                R[q, q] = alpha
                rows.append(p)
                sides.append(side)
                u[q] = u_p
                in_set[p] = True
                q += 1
                break
            drop(k_drop)
    else:
        return None
    y = np.zeros(m)
    for j in range(q):
        y[rows[j]] = -sides[j] * u[j]
    return x, y, it


def _hot_start(L, g, A, lo_f, up_f, eq, guess, guess_sides, max_rounds=20):
    """Factorization, primal and duals of the subproblem with ``guess`` active.

    Dependent rows and rows whose multipliers have the wrong sign are removed
    in rounds; returns ``None`` when no dual-feasible subset is found quickly.
    """
    n = g.size
    idx = [int(i) for i in np.flatnonzero(eq)] + [int(i) for i in np.flatnonzero(guess & ~eq)]
    if guess_sides is None:
        guess_sides = np.ones(A.shape[0])
    sides = [1.0 if eq[i] else float(np.sign(guess_sides[i]) or 1.0) for i in idx]
    Linv_g = sla.solve_triangular(L, g, lower=True, check_finite=False)
    for _ in range(max_rounds):
        if len(idx) > n:
            # more guessed rows than variables: keep the equalities and the first rows
            idx, sides = idx[:n], sides[:n]
        N = (A[idx] * np.array(sides)[:, None]).T
        b = np.array([lo_f[i] if s > 0 else -up_f[i] for i, s in zip(idx, sides)])
        M = sla.solve_triangular(L, N, lower=True, check_finite=False)
        Q, Rf = np.linalg.qr(M, mode="complete")
        q = len(idx)
        diag = np.abs(np.diag(Rf[:q, :q])) if q else np.zeros(0)
        colnorm = np.linalg.norm(M, axis=0) if q else np.zeros(0)
        dep = np.flatnonzero(diag <= 1e-10 * np.maximum(colnorm, 1.0))
        if dep.size:
            keep = sorted(set(range(q)) - set(int(k) for k in dep))
            idx = [idx[k] for k in keep]
            sides = [sides[k] for k in keep]
            continue
        J = sla.solve_triangular(L, Q, lower=True, trans="T", check_finite=False)
        R = Rf[:q, :q]
        Jtg = Q.T @ Linv_g            # = J' g
        w1 = sla.solve_triangular(R, b, trans="T", check_finite=False) if q else np.zeros(0)
        x = J[:, :q] @ w1 - J[:, q:] @ Jtg[q:]
        u = sla.solve_triangular(R, w1 + Jtg[:q], check_finite=False) if q else np.zeros(0)
        neg = [k for k in range(q) if not eq[idx[k]] and u[k] < -1e-12]
        if not neg:
            return J, R, x, u, idx, sides
        keep = set(range(q)) - set(neg)
        idx = [idx[k] for k in sorted(keep)]
        sides = [sides[k] for k in sorted(keep)]
    return None
