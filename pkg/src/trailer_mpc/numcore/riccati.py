"""Discrete algebraic Riccati equation and LQ feedback."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, DimensionError

DARE_TOL = 1e-12
DARE_MAX_ITER = 1_000_000


@dataclass(frozen=True)
class RiccatiResult:
    P: np.ndarray
    K: np.ndarray
    residual: float
    iterations: int


def _gain(F, G, P, R):
    return np.linalg.solve(R + G.T @ P @ G, G.T @ P @ F)


def dare_residual(F, G, Q, R, P) -> float:
    """``max|F'PF + Q - F'PG K - P|`` with ``K = (R + G'PG)^-1 G'PF``."""
    K = _gain(F, G, P, R)
    return float(np.max(np.abs(F.T @ P @ F + Q - F.T @ P @ G @ K - P)))


def solve_dare(F, G, Q, R, tol: float = DARE_TOL, max_iter: int = DARE_MAX_ITER) -> RiccatiResult:
    """Solve the DARE by fixed-point (value) iteration from ``P0 = Q``.

    Parameters
    ----------
    F, G : array_like
        Discrete system matrices, shapes (n, n) and (n, m).
    Q, R : array_like
        Stage weights; Q PSD, R PD.

    Returns
    -------
    RiccatiResult
        ``K`` is the gain with ``u = -K x`` stabilizing ``F - G K``.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.asarray(G, dtype=float)
    if G.size % F.shape[0]:
        raise DimensionError(f"G with {G.size} entries does not fit {F.shape[0]} states")
    G = G.reshape(F.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m = G.shape
    if F.shape != (n, n) or Q.shape != (n, n) or R.shape != (m, m):
        raise DimensionError(f"inconsistent shapes F{F.shape} G{G.shape} Q{Q.shape} R{R.shape}")
    P = Q.copy()
    trace = []
    for it in range(1, max_iter + 1):
        K = _gain(F, G, P, R)
        P_new = F.T @ P @ F + Q - F.T @ P @ G @ K
        P_new = 0.5 * (P_new + P_new.T)
        step = float(np.max(np.abs(P_new - P)))
        P = P_new
        if not np.isfinite(step) or step > 1e150:
            raise ConvergenceError("Riccati iteration diverged; (F, G) may not be stabilizable",
                                   residuals=tuple(trace[-20:]))
        if it % 100 == 0:
            trace.append(step)
        if step <= tol * max(1.0, float(np.max(np.abs(P)))):
            return RiccatiResult(P, _gain(F, G, P, R), dare_residual(F, G, Q, R, P), it)
    raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} steps",
                           residuals=tuple(trace[-20:]))


def lq_control(K, x_err):
    """Feedback deviation ``u~ = -K x~`` (so that ``F - G K`` is the closed loop)."""
    from ..error_model import ControlDeviation

    xt = x_err.as_array() if hasattr(x_err, "as_array") else np.asarray(x_err, dtype=float)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[1] != xt.size:
        raise DimensionError(f"gain has {K.shape[1]} columns, error has {xt.size} entries")
    return ControlDeviation.from_array(-K @ xt)
