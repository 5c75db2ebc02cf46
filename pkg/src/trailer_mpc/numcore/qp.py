"""Dense convex QP solver based on the alternating direction method of multipliers.

Solves::

    minimize    0.5 z'Hz + g'z
    subject to  lb_in <= A_in z <= b_in
                A_eq z = b_eq

The iteration follows the operator-splitting scheme popularized by OSQP
(Ruiz equilibration, over-relaxation, adaptive step size, infeasibility
certificates) with a dense Cholesky factorization of the reduced KKT
matrix. Converged iterates are refined by an active-set polish step that
solves the equality-constrained KKT system exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ..errors import DimensionError
from .dual_active_set import dual_active_set

EPS_ABS = 1e-6
EPS_REL = 1e-6
MAX_ITER = 20000

_INF = 1e20
_SIGMA = 1e-6
_ALPHA = 1.6
_RHO0 = 0.1
_RHO_MIN, _RHO_MAX = 1e-6, 1e6
_RHO_EQ_SCALE = 1e3
_CHECK_EVERY = 5
_ADAPT_EVERY = 25
_EPS_INF = 1e-5
_ACTIVE_TOL = 1e-9
_KKT_TOL = 1e-8
CROSSOVER_AFTER = 200


@dataclass
class QpProblem:
    """Dense QP data.

    ``lb_in`` defaults to ``-inf`` so that the inequality block reads
    ``A_in z <= b_in``; infinite entries are allowed on either side.
    """

    H: np.ndarray
    g: np.ndarray
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb_in: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).ravel()
        d = self.g.size
        if self.H.shape != (d, d):
            raise DimensionError(f"H has shape {self.H.shape}, expected ({d}, {d})")
        if not np.allclose(self.H, self.H.T, atol=1e-12, rtol=0.0):
            raise DimensionError("H must be symmetric")
        self.H = 0.5 * (self.H + self.H.T)
        self.A_in, self.b_in = _block(self.A_in, self.b_in, d, "inequality")
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, d, "equality")
        if self.lb_in is None:
            self.lb_in = np.full(self.b_in.size, -np.inf)
        else:
            self.lb_in = np.asarray(self.lb_in, dtype=float).ravel()
            if self.lb_in.size != self.b_in.size:
                raise DimensionError("lb_in and b_in sizes differ")

    @property
    def n_vars(self) -> int:
        return self.g.size

    def stacked(self):
        """``(A, l, u)`` with equality rows appended after the inequality rows."""
        A = np.vstack([self.A_in, self.A_eq])
        lo = np.concatenate([self.lb_in, self.b_eq])
        up = np.concatenate([self.b_in, self.b_eq])
        return A, lo, up

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.g @ z)


def _block(A, b, d, name):
    if A is None:
        if b is not None and np.size(b):
            raise DimensionError(f"{name} vector given without matrix")
        return np.zeros((0, d)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[0] == 0:
        A = A.reshape(0, d)
    if A.shape[1] != d or A.shape[0] != b.size:
        raise DimensionError(f"{name} block has shape {A.shape} with {b.size} bounds; d = {d}")
    return A, b


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    status: str  # optimal | max-iter | infeasible | unbounded
    iterations: int
    primal_residual: float
    dual_residual: float
    y: np.ndarray = field(default=None, repr=False)  # stacked multipliers
    polished: bool = False
    active_set_iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _ruiz(H, A, g, iters=10):
    """Equilibrate the KKT matrix; returns ``(D, E, c)``."""
    n, m = H.shape[0], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Hs, As = H.copy(), A.copy()
    for _ in range(iters):
        col = np.max(np.abs(Hs), axis=0)
        if m:
            col = np.maximum(col, np.max(np.abs(As), axis=0))
            row = np.max(np.abs(As), axis=1)
        else:
            row = np.zeros(0)
        dt = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        et = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
        Hs = dt[:, None] * Hs * dt[None, :]
        As = et[:, None] * As * dt[None, :]
        D *= dt
        E *= et
    gs = D * g
    scale = max(np.mean(np.max(np.abs(Hs), axis=0)), np.max(np.abs(gs), initial=0.0))
    c = 1.0 / np.clip(scale, 1e-4, 1e4)
    return D, E, c


class _Workspace:
    def __init__(self, prob: QpProblem):
        self.prob = prob
        A, lo, up = prob.stacked()
        self.A, self.lo, self.up = A, lo, up
        self.n, self.m = prob.n_vars, A.shape[0]
        D, E, c = _ruiz(prob.H, A, prob.g)
        self.D, self.E, self.c = D, E, c
        self.Hs = c * (D[:, None] * prob.H * D[None, :])
        self.gs = c * D * prob.g
        self.As = E[:, None] * A * D[None, :]
        self.los = np.where(np.isfinite(lo), E * lo, -_INF)
        self.ups = np.where(np.isfinite(up), E * up, _INF)
        self.eq = (up - lo) < 1e-12
        self.free = (self.los <= -_INF) & (self.ups >= _INF)
        self.rho = _RHO0
        self._set_rho(_RHO0)

    def _set_rho(self, rho):
        self.rho = float(np.clip(rho, _RHO_MIN, _RHO_MAX))
        rv = np.full(self.m, self.rho)
        rv[self.eq] *= _RHO_EQ_SCALE
        rv[self.free] = _RHO_MIN
        self.rho_vec = rv
        K = self.Hs + _SIGMA * np.eye(self.n) + self.As.T @ (rv[:, None] * self.As)
        self.chol = sla.cho_factor(K, lower=True, check_finite=False)

    def unscale(self, x, z, y):
        return self.D * x, z / self.E, self.E * y / self.c

    def residuals(self, x, z, y):
        """Unscaled residuals and tolerance references."""
        p = self.prob
        xu, zu, yu = self.unscale(x, z, y)
        Ax = self.A @ xu
        Hx = p.H @ xu
        Aty = self.A.T @ yu
        r_p = np.max(np.abs(Ax - zu), initial=0.0)
        r_d = np.max(np.abs(Hx + p.g + Aty), initial=0.0)
        ref_p = max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(zu), initial=0.0))
        ref_d = max(np.max(np.abs(Hx), initial=0.0), np.max(np.abs(Aty), initial=0.0),
                    np.max(np.abs(p.g), initial=0.0))
        return r_p, r_d, ref_p, ref_d


def kkt_check(prob: QpProblem, z, y, tol: float = _KKT_TOL):
    """Return ``(ok, primal_violation, stationarity)`` for a primal/dual pair.

    ``y`` uses the sign convention ``H z + g + A' y = 0`` with ``y <= 0`` on
    active lower bounds and ``y >= 0`` on active upper bounds.
    """
    A, lo, up = prob.stacked()
    Az = A @ z
    viol = max(np.max(lo - Az, initial=0.0), np.max(Az - up, initial=0.0))
    stat = np.max(np.abs(prob.H @ z + prob.g + A.T @ y), initial=0.0)
    scale = 1.0 + np.max(np.abs(prob.g), initial=0.0) + np.max(np.abs(y), initial=0.0)
    # complementarity: positive multipliers only at the upper bound, negative at the lower
    slack_up = np.where(np.isfinite(up), up - Az, np.inf)
    slack_lo = np.where(np.isfinite(lo), Az - lo, np.inf)
    comp = max(np.max(np.maximum(y, 0.0) * np.minimum(slack_up, 1e12), initial=0.0),
               np.max(np.maximum(-y, 0.0) * np.minimum(slack_lo, 1e12), initial=0.0))
    bad_sign = np.any((y > tol) & ~np.isfinite(up)) or np.any((y < -tol) & ~np.isfinite(lo))
    ok = viol <= tol * (1.0 + np.max(np.abs(Az), initial=0.0)) and stat <= tol * scale \
        and comp <= tol * scale and not bad_sign
    return ok, viol, stat


def _polish(prob: QpProblem, A, lo, up, lower, upper, reg=1e-10):
    """Solve the KKT system with the given rows active at their bounds.

    Rows with a single nonzero that pin a variable are eliminated before the
    solve; their multipliers are recovered from stationarity.
    """
    n = prob.n_vars
    act = np.flatnonzero(lower | upper)
    rhs_b = np.where(upper[act], up[act], lo[act])
    A_act = A[act]
    nnz = np.count_nonzero(A_act, axis=1)
    fixed_val = {}
    fixed_row = {}
    general = []
    for r, i in enumerate(act):
        if nnz[r] == 1:
            j = int(np.flatnonzero(A_act[r])[0])
            if j not in fixed_val:
                fixed_val[j] = rhs_b[r] / A_act[r, j]
                fixed_row[j] = i
                continue
            if abs(fixed_val[j] - rhs_b[r] / A_act[r, j]) > 1e-12:
                return None
            continue  # duplicate bound on the same variable; multiplier stays zero
        general.append(r)
    fj = np.array(sorted(fixed_val), dtype=int)
    free = np.setdiff1d(np.arange(n), fj)
    x = np.zeros(n)
    x[fj] = [fixed_val[j] for j in fj]
    gi = act[general]
    Ag = A[gi]
    bg = rhs_b[general]
    Hff = prob.H[np.ix_(free, free)]
    q = prob.g[free] + prob.H[np.ix_(free, fj)] @ x[fj]
    Agf = Ag[:, free]
    bg = bg - Ag[:, fj] @ x[fj]
    k = len(free)
    na = len(gi)
    K = np.zeros((k + na, k + na))
    K[:k, :k] = Hff + reg * np.eye(k)
    K[:k, k:] = Agf.T
    K[k:, :k] = Agf
    K[k:, k:] = -reg * np.eye(na)
    rhs = np.concatenate([-q, bg])
    try:
        lu = sla.lu_factor(K, check_finite=False)
    except (ValueError, np.linalg.LinAlgError):
        return None
    sol = sla.lu_solve(lu, rhs, check_finite=False)
    Kt = K.copy()
    Kt[:k, :k] -= reg * np.eye(k)
    Kt[k:, k:] = 0.0
    for _ in range(3):  # iterative refinement against the unregularized system
        sol = sol + sla.lu_solve(lu, rhs - Kt @ sol, check_finite=False)
    if not np.all(np.isfinite(sol)):
        return None
    x[free] = sol[:k]
    y = np.zeros(A.shape[0])
    y[gi] = sol[k:]
    if len(fj):
        grad = prob.H @ x + prob.g + A.T @ y
        for j in fj:
            i = fixed_row[j]
            y[i] = -grad[j] / A[i, j]
    return x, y


def _active_from_dual(y, Az, lo, up, tol=_ACTIVE_TOL):
    eq = (up - lo) < 1e-12
    lower = eq | (y < -tol)
    upper = (y > tol) & ~eq
    return lower & np.isfinite(lo), upper & np.isfinite(up)


def _try_polish(prob, ws_A, lo, up, y_guess, Az):
    lower, upper = _active_from_dual(y_guess, Az, lo, up)
    res = _polish(prob, ws_A, lo, up, lower, upper)
    if res is None:
        return None
    x, y = res
    ok, viol, stat = kkt_check(prob, x, y)
    if not ok:
        return None
    return x, y, viol, stat


def _crossover(prob, A, lo, up, y_guess):
    """Exact solve by the dual active-set method hot-started from ``y_guess``."""
    eq = (up - lo) < 1e-12
    scale = _ACTIVE_TOL * (1.0 + np.max(np.abs(y_guess), initial=0.0))
    guess = eq | (np.abs(y_guess) > scale)
    sides = np.where(y_guess < 0.0, 1.0, -1.0)
    res = dual_active_set(prob.H, prob.g, A, lo, up, guess=guess, guess_sides=sides)
    if res is None:
        return None
    x, y, it = res
    ok, viol, stat = kkt_check(prob, x, y)
    if not ok:
        return None
    return x, y, viol, stat, it


def solve_qp(problem: QpProblem, warm_start=None, warm_dual=None, *, eps_abs=EPS_ABS,
             eps_rel=EPS_REL, max_iter=MAX_ITER, polish=True, crossover=True,
             crossover_after=CROSSOVER_AFTER) -> QpSolution:
    """Solve ``problem`` by ADMM.

    Parameters
    ----------
    warm_start : array, optional
        Primal initial guess.
    warm_dual : array, optional
        Stacked multipliers (inequalities then equalities). When given, the
        active set they imply is tried first; if it already satisfies the KKT
        conditions the solve returns with zero ADMM iterations.
    crossover : bool
        For strictly convex problems, hand over to an exact dual active-set
        solve hot-started from the current multiplier estimate: once up front
        when ``warm_dual`` is given, and every ``crossover_after`` ADMM
        iterations while the iteration has not converged. ADMM converges
        slowly on near-vertex solutions with many active constraints; the
        crossover removes that tail.

    Returns
    -------
    QpSolution
        ``status`` is ``"optimal"``, ``"max-iter"``, ``"infeasible"`` or
        ``"unbounded"``.
    """
    prob = problem
    A, lo, up = prob.stacked()
    n, m = prob.n_vars, A.shape[0]
    if np.any(lo > up + 1e-12):
        return QpSolution(np.zeros(n), np.nan, "infeasible", 0, np.inf, np.inf)
    if warm_start is not None:
        warm_start = np.asarray(warm_start, dtype=float).ravel()
        if warm_start.size != n:
            raise DimensionError(f"warm start has size {warm_start.size}, expected {n}")
    if warm_dual is not None:
        warm_dual = np.asarray(warm_dual, dtype=float).ravel()
        if warm_dual.size != m:
            raise DimensionError(f"warm dual has size {warm_dual.size}, expected {m}")
        if crossover:
            hit = _crossover(prob, A, lo, up, warm_dual)
            if hit is not None:
                x, y, viol, stat, k = hit
                return QpSolution(x, prob.objective(x), "optimal", 0, viol, stat, y, True, k)
        elif polish:
            hit = _try_polish(prob, A, lo, up, warm_dual, None)
            if hit is not None:
                x, y, viol, stat = hit
                return QpSolution(x, prob.objective(x), "optimal", 0, viol, stat, y, True)

    ws = _Workspace(prob)
    x = np.zeros(n) if warm_start is None else warm_start / ws.D
    z = np.clip(ws.As @ x, ws.los, ws.ups)
    y = np.zeros(m) if warm_dual is None else warm_dual * ws.c / ws.E
    status = "max-iter"
    it = 0
    r_p = r_d = np.inf
    best = None
    for it in range(1, max_iter + 1):
        y_prev = y
        x_prev = x
        rhs = _SIGMA * x - ws.gs + ws.As.T @ (ws.rho_vec * z - y)
        xt = sla.cho_solve(ws.chol, rhs, check_finite=False)
        zt = ws.As @ xt
        x = _ALPHA * xt + (1.0 - _ALPHA) * x
        zr = _ALPHA * zt + (1.0 - _ALPHA) * z
        z = np.clip(zr + y / ws.rho_vec, ws.los, ws.ups)
        y = y + ws.rho_vec * (zr - z)

        if it % _CHECK_EVERY and it != max_iter:
            continue
        r_p, r_d, ref_p, ref_d = ws.residuals(x, z, y)
        if r_p <= eps_abs + eps_rel * ref_p and r_d <= eps_abs + eps_rel * ref_d:
            status = "optimal"
            break
        cert = _infeasibility(ws, x - x_prev, y - y_prev)
        if cert:
            status = cert
            break
        if polish and it % _ADAPT_EVERY == 0 and r_p < 1e-3 * (1 + ref_p) and r_d < 1e-3 * (1 + ref_d):
            # early exit when the current active-set guess is already exact
            xu, zu, yu = ws.unscale(x, z, y)
            hit = _try_polish(prob, A, lo, up, yu, None)
            if hit is not None:
                best = hit
                status = "optimal"
                break
        if crossover and it % crossover_after == 0:
            hit = _crossover(prob, A, lo, up, ws.unscale(x, z, y)[2])
            if hit is not None:
                xc, yc, viol, stat, k = hit
                return QpSolution(xc, prob.objective(xc), "optimal", it, viol, stat, yc, True, k)
        if it % _ADAPT_EVERY == 0:
            num = r_p / (ref_p + 1e-10)
            den = r_d / (ref_d + 1e-10)
            new = ws.rho * np.sqrt(num / max(den, 1e-10)) if den > 0 else ws.rho
            if new > 5.0 * ws.rho or new < 0.2 * ws.rho:
                ws._set_rho(new)

    xu, zu, yu = ws.unscale(x, z, y)
    if status in ("infeasible", "unbounded"):
        return QpSolution(xu, np.nan, status, it, r_p, r_d, yu)
    polished = False
    if best is None and polish and status == "optimal":
        best = _try_polish(prob, A, lo, up, yu, None)
    if best is not None:
        xu, yu, r_p, r_d = best
        polished = True
    return QpSolution(xu, prob.objective(xu), status, it, r_p, r_d, yu, polished)


def _infeasibility(ws: _Workspace, dx, dy):
    """Primal/dual infeasibility certificates, evaluated on unscaled differences."""
    p = ws.prob
    dyu = ws.E * dy / ws.c
    ndy = np.max(np.abs(dyu), initial=0.0)
    if ndy > 1e-12:
        fin_up = np.isfinite(ws.up)
        fin_lo = np.isfinite(ws.lo)
        unb = np.any((dyu > 1e-12 * ndy) & ~fin_up) or np.any((dyu < -1e-12 * ndy) & ~fin_lo)
        if not unb:
            support = np.where(fin_up, ws.up, 0.0) @ np.maximum(dyu, 0.0) \
                + np.where(fin_lo, ws.lo, 0.0) @ np.minimum(dyu, 0.0)
            if np.max(np.abs(ws.A.T @ dyu)) <= _EPS_INF * ndy and support < -_EPS_INF * ndy:
                return "infeasible"
    dxu = ws.D * dx
    ndx = np.max(np.abs(dxu), initial=0.0)
    if ndx > 1e-12:
        tol = _EPS_INF * ndx
        if np.max(np.abs(p.H @ dxu)) <= tol and p.g @ dxu < -tol:
            Adx = ws.A @ dxu
            if np.all(np.where(np.isfinite(ws.up), Adx <= tol, True)) and \
                    np.all(np.where(np.isfinite(ws.lo), Adx >= -tol, True)):
                return "unbounded"
    return None
