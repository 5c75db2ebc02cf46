"""Model predictive path-following controller and the LQ baseline.

The MPC solves, at every controller period, a condensed QP in the control
deviations ``u~_0..u~_{N-1}`` (plus joint-angle slacks) over an LTV model
evaluated along the nominal path ahead of the current projection, and
applies ``u = u_r(s*) + u~_0``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .error_model import (ControlDeviation, LinearizedModel, PathError, compute_error,
                          discretize, linearize_along, straight_path_matrices)
from .errors import ConfigError, ConvergenceError, HorizonExceedsPathError
from .numcore import QpProblem, solve_dare, solve_qp
from .path import NominalPath, Projector
from .vehicle import ControlInput, VehicleConfig, VehicleState


@dataclass(frozen=True)
class MpcConfig:
    """Design parameters of the MPC controller.

    ``q_bar`` weights the control-objective vector ``z`` (see
    :func:`build_objective_map`); ``r`` is the diagonal of ``R``.
    """

    horizon: int = 40
    delta_s: float = 0.2
    frequency: float = 10.0
    q_bar: tuple = tuple(np.array([0.5, 1, 4, 4, 0.5, 1, 0.5, 1]) / 35.0)
    r: tuple = (4.0, 3.0)
    w_q: float = 1e3
    w_l: float = 1e2
    soft_joint_constraints: bool = True

    def __post_init__(self):
        object.__setattr__(self, "q_bar", tuple(float(v) for v in np.ravel(self.q_bar)))
        object.__setattr__(self, "r", tuple(float(v) for v in np.ravel(self.r)))
        if int(self.horizon) < 1:
            raise ConfigError("horizon must be at least 1")
        object.__setattr__(self, "horizon", int(self.horizon))
        if self.delta_s <= 0 or self.frequency <= 0:
            raise ConfigError("delta_s and frequency must be positive")
        if any(v <= 0 for v in self.r):
            raise ConfigError("R must be positive definite")
        if any(v < 0 for v in self.q_bar):
            raise ConfigError("q_bar must be nonnegative")
        if self.w_q <= 0 or self.w_l <= 0:
            raise ConfigError("soft-constraint penalties must be positive")

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.r)

    @classmethod
    def from_dict(cls, data: dict) -> "MpcConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown mpc keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def ms2t_mpc_config(**overrides) -> MpcConfig:
    """Design parameters for the 2-trailer vehicle with trailer steering."""
    return replace(MpcConfig(), **overrides)


def ss2t_mpc_config(**overrides) -> MpcConfig:
    """Same design without trailer steering; ``R`` reduces to the curvature weight."""
    return replace(MpcConfig(r=(4.0,)), **overrides)


@dataclass(frozen=True)
class ControlObjectiveMap:
    """Linear map ``z = M x~`` from the error state to the control objective."""

    M: np.ndarray

    def stage_weight(self, q_bar) -> np.ndarray:
        Qb = np.diag(np.asarray(q_bar, dtype=float))
        return self.M.T @ Qb @ self.M


def build_objective_map(config: VehicleConfig) -> ControlObjectiveMap:
    """Linearized objective map ``z = [x~, z~_{N-1}, theta~_{N-1}, ..., z~_0, theta~_0]``."""
    n = config.n_trailers
    nx = n + 2
    rows = [np.eye(nx)[i] for i in range(nx)]
    z_row, th_row = np.eye(nx)[0], np.eye(nx)[1]
    for i in range(n - 1, -1, -1):
        b_row = np.eye(nx)[2 + (n - 1 - i)]
        L, M = config.segment_lengths[i], config.hitch_offsets[i]
        z_row = z_row + (L + M) * th_row + M * b_row
        th_row = th_row + b_row
        rows += [z_row, th_row]
    return ControlObjectiveMap(np.array(rows))


def build_stage_cost(obj_map: ControlObjectiveMap, q_bar, R):
    """``(Q, R)`` with ``Q = M' diag(q_bar) M``."""
    q_bar = np.ravel(np.asarray(q_bar, dtype=float))
    if q_bar.size != obj_map.M.shape[0]:
        raise ConfigError(f"q_bar has {q_bar.size} entries, objective vector has {obj_map.M.shape[0]}")
    Q = obj_map.stage_weight(q_bar)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[0] != R.shape[1]:
        raise ConfigError("R must be square")
    if R.ndim == 2 and R.shape[0] == 1 and R.size == 1:
        R = R.reshape(1, 1)
    return 0.5 * (Q + Q.T), R


def straight_riccati(config: VehicleConfig, delta_s: float, Q, R):
    """DARE solutions around a straight nominal path, keyed by direction."""
    A, B = straight_path_matrices(config)
    out = {}
    for direction in (1, -1):
        F, G = discretize(A, B, delta_s, direction)
        out[direction] = solve_dare(F, G, Q, R)
    return out


def compute_terminal_costs(config: VehicleConfig, mpc: MpcConfig, Q, R):
    """Terminal matrices ``(P_fwd, P_bwd)`` from the straight-path DARE."""
    res = straight_riccati(config, mpc.delta_s, Q, R)
    return res[1].P, res[-1].P


@dataclass
class ConstraintBlocks:
    """Constraint data of one MPC problem in deviation coordinates.

    ``u_lo``/``u_hi`` bound ``u~_k`` (input box, with the first stage also
    intersected with the slew window around ``u_prev``); ``d_lo``/``d_hi``
    bound ``u~_k - u~_{k-1}`` for ``k >= 1``; ``b_lo``/``b_hi`` bound the
    predicted joint errors ``beta~_{i,k}`` for ``k = 1..N`` in error order.
    """

    u_ref: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    d_lo: np.ndarray
    d_hi: np.ndarray
    b_lo: np.ndarray
    b_hi: np.ndarray
    slew: np.ndarray  # per-stage slew bound c_bar_k * delta_s
    u_prev: np.ndarray | None


def assemble_constraints(mpc: MpcConfig, path: NominalPath, s0: float, u_prev, v0: float,
                         nominal=None) -> ConstraintBlocks:
    """Input, slew and joint-angle constraints along ``s_k = s0 + k*delta_s``.

    Slew bounds are the time-rate bounds converted to the sampling distance
    at the nominal speed of the last trailer; the first stage is limited
    relative to ``u_prev`` with the same per-sample window. With ``u_prev``
    None (no control applied yet) the first stage is only box-constrained.
    """
    cfg = path.config
    N = mpc.horizon
    if s0 + N * mpc.delta_s > path.s_max + 1e-9:
        raise HorizonExceedsPathError(
            f"horizon end {s0 + N * mpc.delta_s:.2f} beyond path end {path.s_max:.2f}")
    if abs(v0) <= 0:
        raise ValueError("v0 must be nonzero")
    if nominal is None:
        nominal = path.interpolate(s0 + mpc.delta_s * np.arange(N + 1))
    u_ref = nominal["controls"][:N]
    ub = cfg.control_bounds()
    rate = cfg.control_rate_bounds()
    slew = rate[None, :] / (abs(v0) * nominal["f_vn"][:N, None]) * mpc.delta_s
    u_lo = -ub - u_ref
    u_hi = ub - u_ref
    if u_prev is not None:
        u_prev = np.asarray(u_prev.as_array() if hasattr(u_prev, "as_array") else u_prev, dtype=float)
        d0 = u_prev - u_ref[0]
        u_lo[0] = np.maximum(u_lo[0], d0 - slew[0])
        u_hi[0] = np.minimum(u_hi[0], d0 + slew[0])
    du_ref = u_ref[1:] - u_ref[:-1]
    d_lo = -slew[1:] - du_ref
    d_hi = slew[1:] - du_ref
    n = cfg.n_trailers
    bb = np.array(cfg.joint_angle_bounds)[::-1]          # beta_N .. beta_1
    beta_r = nominal["states"][1:N + 1, 3:3 + n][:, ::-1]
    return ConstraintBlocks(u_ref, u_lo, u_hi, d_lo, d_hi, -bb - beta_r, bb - beta_r, slew, u_prev)


@dataclass
class CondensedQp:
    """Condensed QP plus the data needed to recover predictions."""

    problem: QpProblem
    Phi: np.ndarray      # stacked x~_1..x~_N response to x~_0
    Gamma: np.ndarray    # stacked response to the input sequence
    n_inputs: int
    n_slack: int
    blocks: list         # (start, stages, width) of each row block, for dual shifting
    terminal: np.ndarray


def _prediction(models: LinearizedModel):
    F, G = models.F, models.G
    N, nx, m = G.shape
    Phi = np.zeros((N * nx, nx))
    Gam = np.zeros((N * nx, N * m))
    Pk = np.eye(nx)
    Gk = np.zeros((nx, N * m))
    for k in range(N):
        Pk = F[k] @ Pk
        Gk = F[k] @ Gk
        Gk[:, k * m:(k + 1) * m] += G[k]
        Phi[k * nx:(k + 1) * nx] = Pk
        Gam[k * nx:(k + 1) * nx] = Gk
    return Phi, Gam


def condense_qp(models: LinearizedModel, Q, P_terminal, R, constraints: ConstraintBlocks,
                x0, mpc: MpcConfig | None = None) -> CondensedQp:
    """Eliminate predicted states and build the dense QP.

    Decision vector: ``[u~_0, ..., u~_{N-1}, s_up, s_lo]`` where the slacks
    (one per joint, stage and side) exist only with soft joint constraints.
    The objective ``sum_k |x~_k|_Q^2 + |u~_k|_R^2 + |x~_N|_P^2 + w_q|s|^2 + w_l 1's``
    is expressed without its constant term.
    """
    x0 = np.asarray(x0.as_array() if hasattr(x0, "as_array") else x0, dtype=float)
    N, nx, m = models.G.shape
    Q = np.asarray(Q, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = np.asarray(P_terminal, dtype=float)
    if Q.shape != (nx, nx) or P.shape != (nx, nx) or R.shape != (m, m) or x0.size != nx:
        from .errors import DimensionError
        raise DimensionError("condense_qp: inconsistent dimensions")
    soft = True if mpc is None else mpc.soft_joint_constraints
    w_q = 1e3 if mpc is None else mpc.w_q
    w_l = 1e2 if mpc is None else mpc.w_l

    Phi, Gam = _prediction(models)
    qdiag = [Q] * (N - 1) + [P]
    # weighted Gamma and Phi, block by block
    WG = np.vstack([qdiag[k] @ Gam[k * nx:(k + 1) * nx] for k in range(N)])
    WP = np.vstack([qdiag[k] @ Phi[k * nx:(k + 1) * nx] for k in range(N)])
    nu = N * m
    nb = constraints.b_lo.shape[1] if soft else 0
    ns = N * nb
    d = nu + 2 * ns
    H = np.zeros((d, d))
    g = np.zeros(d)
    H[:nu, :nu] = 2.0 * (Gam.T @ WG + np.kron(np.eye(N), R))
    g[:nu] = 2.0 * (Gam.T @ WP @ x0)
    if ns:
        H[nu:, nu:] = 2.0 * w_q * np.eye(2 * ns)
        g[nu:] = w_l

    rows, lo, up, blocks = [], [], [], []
    # input box (single-variable rows)
    Ain = np.zeros((nu, d))
    Ain[:, :nu] = np.eye(nu)
    rows.append(Ain); lo.append(constraints.u_lo.ravel()); up.append(constraints.u_hi.ravel())
    blocks.append((0, N, m))
    start = nu
    if N > 1:
        Ad = np.zeros(((N - 1) * m, d))
        for k in range(1, N):
            for j in range(m):
                Ad[(k - 1) * m + j, k * m + j] = 1.0
                Ad[(k - 1) * m + j, (k - 1) * m + j] = -1.0
        rows.append(Ad); lo.append(constraints.d_lo.ravel()); up.append(constraints.d_hi.ravel())
        blocks.append((start, N - 1, m))
        start += (N - 1) * m
    if ns:
        # beta rows of the stacked prediction
        sel = np.concatenate([k * nx + 2 + np.arange(nb) for k in range(N)])
        base = Phi[sel] @ x0
        Gb = Gam[sel]
        Aup = np.zeros((ns, d))
        Aup[:, :nu] = Gb
        Aup[:, nu:nu + ns] = -np.eye(ns)
        Alo = np.zeros((ns, d))
        Alo[:, :nu] = Gb
        Alo[:, nu + ns:] = np.eye(ns)
        rows += [Aup, Alo]
        lo += [np.full(ns, -np.inf), constraints.b_lo.ravel() - base]
        up += [constraints.b_hi.ravel() - base, np.full(ns, np.inf)]
        blocks += [(start, N, nb), (start + ns, N, nb)]
        start += 2 * ns
        As = np.zeros((2 * ns, d))
        As[:, nu:] = np.eye(2 * ns)
        rows.append(As); lo.append(np.zeros(2 * ns)); up.append(np.full(2 * ns, np.inf))
        blocks += [(start, N, nb), (start + ns, N, nb)]
    A = np.vstack(rows)
    prob = QpProblem(H, g, A, np.concatenate(up), lb_in=np.concatenate(lo))
    return CondensedQp(prob, Phi, Gam, nu, ns, blocks, P)


def _shift(vec, blocks, steps):
    """Shift stage-structured vectors forward by ``steps`` stages, padding with zeros."""
    if steps <= 0:
        return vec.copy()
    out = np.zeros_like(vec)
    for start, stages, width in blocks:
        blk = vec[start:start + stages * width].reshape(stages, width)
        sh = np.zeros_like(blk)
        if steps < stages:
            sh[:stages - steps] = blk[steps:]
        out[start:start + stages * width] = sh.ravel()
    return out


@dataclass
class MpcStepResult:
    """Outcome of one controller period."""

    control: ControlInput
    deviation: np.ndarray
    s: float
    error: PathError
    predicted_errors: np.ndarray = field(default=None, repr=False)
    slack_max: float = 0.0
    qp_status: str = "n/a"
    qp_iterations: int = 0
    solve_time: float = 0.0
    unsaturated: np.ndarray | None = None
    terminal_direction: int = 0


class _TrackingSession:
    """Projection state shared by the MPC and LQ controllers."""

    def __init__(self, config: VehicleConfig):
        self.config = config
        self._path = None
        self._projector = None

    def _project(self, x: VehicleState, path: NominalPath, s_hint):
        if path is not self._path:
            self._path = path
            self._projector = Projector(path)
            self.reset()
        if s_hint is None and self._projector.s_last is None:
            s_hint = 0.0
        return self._projector((x.x, x.y), s_hint=s_hint, require_valid=True)

    def reset(self):
        if self._projector is not None:
            self._projector.reset()


class MpcController(_TrackingSession):
    """Receding-horizon path-following controller for one tracking session.

    Parameters
    ----------
    config : VehicleConfig
    mpc : MpcConfig
    """

    def __init__(self, config: VehicleConfig, mpc: MpcConfig | None = None):
        super().__init__(config)
        if mpc is None:
            mpc = ms2t_mpc_config() if config.steerable_set else ss2t_mpc_config()
        if len(mpc.r) != config.n_controls:
            raise ConfigError(f"R has {len(mpc.r)} entries for {config.n_controls} controls")
        self.mpc = mpc
        self.obj_map = build_objective_map(config)
        self.Q, self.R = build_stage_cost(self.obj_map, mpc.q_bar, mpc.R)
        self.riccati = straight_riccati(config, mpc.delta_s, self.Q, self.R)
        self.P = {d: r.P for d, r in self.riccati.items()}
        self.last_terminal = None  # direction of the terminal matrix used last
        self.reset()

    def reset(self):
        super().reset()
        self.u_prev = None
        self._warm = None   # (s, primal, dual, blocks)

    def step(self, x: VehicleState, path: NominalPath, v0: float, s_hint=None) -> MpcStepResult:
        t_start = time.perf_counter()
        mpc, cfg = self.mpc, self.config
        proj = self._project(x, path, s_hint)
        err = compute_error(cfg, x, path, proj)
        N = mpc.horizon
        s_grid = proj.s + mpc.delta_s * np.arange(N + 1)
        if s_grid[-1] > path.s_max + 1e-9:
            raise HorizonExceedsPathError(f"horizon end {s_grid[-1]:.2f} beyond path end {path.s_max:.2f}")
        nominal = path.interpolate(s_grid)
        u_r0 = nominal["controls"][0]
        cons = assemble_constraints(mpc, path, proj.s, self.u_prev, v0, nominal)
        models = linearize_along(path, s_grid[:N])
        self.last_terminal = path.direction
        qp = condense_qp(models, self.Q, self.P[path.direction], self.R, cons, err.as_array(), mpc)

        warm_x = warm_y = None
        if self._warm is not None:
            s_old, px, py, blocks = self._warm
            steps = int(round((proj.s - s_old) / mpc.delta_s))
            if px.size == qp.problem.n_vars and py.size == qp.problem.stacked()[0].shape[0]:
                warm_x = _shift(px, [(0, N, cfg.n_controls)] + ([(qp.n_inputs, N, qp.n_slack // N),
                                 (qp.n_inputs + qp.n_slack, N, qp.n_slack // N)] if qp.n_slack else []),
                                steps)
                warm_y = _shift(py, blocks, steps)
        sol = solve_qp(qp.problem, warm_start=warm_x, warm_dual=warm_y)
        if sol.status not in ("optimal", "max-iter"):
            raise ConvergenceError(f"MPC QP returned status {sol.status}")
        self._warm = (proj.s, sol.z, sol.y, qp.blocks)

        m = cfg.n_controls
        du0 = sol.z[:m]
        # clamp against the hard input and slew sets (guards solver tolerance)
        ub = cfg.control_bounds()
        lo, hi = -ub, ub
        if self.u_prev is not None:
            lo = np.maximum(lo, self.u_prev - cons.slew[0])
            hi = np.minimum(hi, self.u_prev + cons.slew[0])
        u = np.clip(u_r0 + du0, lo, hi)
        self.u_prev = u
        pred = np.vstack([err.as_array(), (qp.Phi @ err.as_array() + qp.Gamma @ sol.z[:qp.n_inputs])
                          .reshape(N, -1)])
        slack_max = float(np.max(sol.z[qp.n_inputs:], initial=0.0))
        return MpcStepResult(
            control=ControlInput.from_array(u), deviation=u - u_r0, s=proj.s, error=err,
            predicted_errors=pred, slack_max=slack_max, qp_status=sol.status,
            qp_iterations=sol.iterations, solve_time=time.perf_counter() - t_start,
            terminal_direction=path.direction)


class LqController(_TrackingSession):
    """Unconstrained LQ feedback ``u = u_r - K x~`` with input saturation."""

    def __init__(self, config: VehicleConfig, mpc: MpcConfig | None = None):
        super().__init__(config)
        if mpc is None:
            mpc = ms2t_mpc_config() if config.steerable_set else ss2t_mpc_config()
        self.mpc = mpc
        obj = build_objective_map(config)
        self.Q, self.R = build_stage_cost(obj, mpc.q_bar, mpc.R)
        self.riccati = straight_riccati(config, mpc.delta_s, self.Q, self.R)
        self.K = {d: r.K for d, r in self.riccati.items()}

    def step(self, x: VehicleState, path: NominalPath, v0: float, s_hint=None) -> MpcStepResult:
        t_start = time.perf_counter()
        cfg = self.config
        proj = self._project(x, path, s_hint)
        err = compute_error(cfg, x, path, proj)
        u_r = path.interpolate(np.array([proj.s]))["controls"][0]
        du = -self.K[path.direction] @ err.as_array()
        raw = u_r + du
        ub = cfg.control_bounds()
        u = np.clip(raw, -ub, ub)
        return MpcStepResult(
            control=ControlInput.from_array(u), deviation=u - u_r, s=proj.s, error=err,
            unsaturated=raw, solve_time=time.perf_counter() - t_start,
            terminal_direction=path.direction)


def mpc_step(controller, x: VehicleState, path: NominalPath, v0: float) -> MpcStepResult:
    """Functional form of ``controller.step``."""
    return controller.step(x, path, v0)


def lq_step(K, x_err, u_ref, config: VehicleConfig):
    """Saturated LQ command ``clip(u_r - K x~)``; returns ``(applied, unsaturated)``."""
    xt = x_err.as_array() if hasattr(x_err, "as_array") else np.asarray(x_err, dtype=float)
    raw = np.asarray(u_ref, dtype=float) - np.atleast_2d(K) @ xt
    ub = config.control_bounds()
    return np.clip(raw, -ub, ub), raw
