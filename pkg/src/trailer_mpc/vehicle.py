"""Kinematic model of a multi-steered N-trailer with a car-like tractor.

Trailers are indexed ``1..N`` from the tractor backwards. Joint angles are
stored in ascending order ``(beta_1, ..., beta_N)`` throughout this module;
the reversed ordering used by the path-following error vector is applied in
:mod:`trailer_mpc.error_model`.

The velocity transformation between neighbouring segments is::

    [dtheta_i, v_i]^T = J_i(beta_i, gamma_i, gamma_{i-1}) [dtheta_{i-1}, v_{i-1}]^T

and every quantity of the model (curvature of trailer N, velocity factor,
joint-angle rates) is a ratio of partial products of these 2x2 matrices
applied to ``[kappa_0, 1]^T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateConfigurationError, SingularSteeringError

#: ``|cos(gamma)|`` below this raises :class:`SingularSteeringError`.
STEERING_COS_MIN = 1e-9
#: ``f_vN`` at or below this raises :class:`DegenerateConfigurationError`.
VELOCITY_FACTOR_MIN = 1e-6


def wrap_angle(angle):
    """Wrap an angle (scalar or array) to the half-open interval (-pi, pi]."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def _wrap(a: float) -> float:
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def _as_tuple(values, name) -> tuple:
    try:
        return tuple(float(v) for v in values)
    except TypeError as exc:
        raise ConfigError(f"{name} must be a sequence of numbers") from exc


@dataclass(frozen=True)
class VehicleConfig:
    """Geometry and actuation limits of an MSNT vehicle.

    Parameters
    ----------
    tractor_wheelbase : float
        Tractor wheelbase ``L_0`` [m].
    segment_lengths : sequence of float
        Trailer lengths ``L_1..L_N`` [m].
    hitch_offsets : sequence of float
        Signed off-axle hitch offsets ``M_1..M_N`` [m]. ``M_i`` is the
        distance behind the axle of segment ``i-1`` at which trailer ``i``
        is hitched.
    steerable_set : sequence of int
        Indices (1-based) of trailers with an actively steered axle.
    joint_angle_bounds : sequence of float
        ``beta_bar_1..beta_bar_N`` in (0, pi/2) [rad].
    max_curvature, max_curvature_rate : float
        Tractor curvature bound [1/m] and curvature-rate bound [1/(m s)].
    trailer_steer_bounds, trailer_steer_rate_bounds : sequence of float
        One entry per steerable trailer, in ascending index order.
    """

    tractor_wheelbase: float
    segment_lengths: tuple
    hitch_offsets: tuple
    joint_angle_bounds: tuple
    max_curvature: float
    max_curvature_rate: float
    steerable_set: tuple = ()
    trailer_steer_bounds: tuple = ()
    trailer_steer_rate_bounds: tuple = ()
    _gamma_slot: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "segment_lengths", _as_tuple(self.segment_lengths, "segment_lengths"))
        set_(self, "hitch_offsets", _as_tuple(self.hitch_offsets, "hitch_offsets"))
        set_(self, "joint_angle_bounds", _as_tuple(self.joint_angle_bounds, "joint_angle_bounds"))
        set_(self, "trailer_steer_bounds", _as_tuple(self.trailer_steer_bounds, "trailer_steer_bounds"))
        set_(self, "trailer_steer_rate_bounds",
             _as_tuple(self.trailer_steer_rate_bounds, "trailer_steer_rate_bounds"))
        set_(self, "tractor_wheelbase", float(self.tractor_wheelbase))
        set_(self, "max_curvature", float(self.max_curvature))
        set_(self, "max_curvature_rate", float(self.max_curvature_rate))
        try:
            steer = tuple(int(a) for a in self.steerable_set)
        except TypeError as exc:
            raise ConfigError("steerable_set must be a sequence of trailer indices") from exc
        set_(self, "steerable_set", steer)

        n = len(self.segment_lengths)
        if n < 1:
            raise ConfigError("at least one trailer is required")
        if len(self.hitch_offsets) != n or len(self.joint_angle_bounds) != n:
            raise ConfigError("hitch_offsets and joint_angle_bounds need one entry per trailer")
        if self.tractor_wheelbase <= 0 or any(L <= 0 for L in self.segment_lengths):
            raise ConfigError("all lengths must be strictly positive")
        if any(not 0 < b < math.pi / 2 for b in self.joint_angle_bounds):
            raise ConfigError("joint-angle bounds must lie in (0, pi/2)")
        if self.max_curvature <= 0 or self.max_curvature_rate <= 0:
            raise ConfigError("curvature bounds must be strictly positive")
        if len(set(steer)) != len(steer) or any(not 1 <= a <= n for a in steer):
            raise ConfigError("steerable_set must hold distinct indices in 1..N")
        if list(steer) != sorted(steer):
            raise ConfigError("steerable_set must be in ascending order")
        if len(self.trailer_steer_bounds) != len(steer) or len(self.trailer_steer_rate_bounds) != len(steer):
            raise ConfigError("one steering bound and rate bound per steerable trailer")
        if any(not 0 < g < math.pi / 2 for g in self.trailer_steer_bounds):
            raise ConfigError("trailer steering bounds must lie in (0, pi/2)")
        if any(r <= 0 for r in self.trailer_steer_rate_bounds):
            raise ConfigError("trailer steering-rate bounds must be strictly positive")
        # slot[j] is the position of trailer j's steering angle inside u.gammas, or -1
        slot = [-1] * (n + 1)
        for k, a in enumerate(steer):
            slot[a] = k
        set_(self, "_gamma_slot", tuple(slot))

    @property
    def n_trailers(self) -> int:
        return len(self.segment_lengths)

    @property
    def n_states(self) -> int:
        return 3 + self.n_trailers

    @property
    def n_controls(self) -> int:
        return 1 + len(self.steerable_set)

    @property
    def last_trailer_steerable(self) -> bool:
        return self.n_trailers in self.steerable_set

    def control_bounds(self) -> np.ndarray:
        """Symmetric bounds ``[kappa_bar_0, gamma_bar_a...]``."""
        return np.array((self.max_curvature,) + self.trailer_steer_bounds)

    def control_rate_bounds(self) -> np.ndarray:
        """Time-rate bounds ``[kappa_dot_bar_0, gamma_dot_bar_a...]``."""
        return np.array((self.max_curvature_rate,) + self.trailer_steer_rate_bounds)

    def without_trailer_steering(self) -> "VehicleConfig":
        """Same geometry with every trailer passive (the single-steered variant)."""
        return replace(self, steerable_set=(), trailer_steer_bounds=(), trailer_steer_rate_bounds=())

    @classmethod
    def from_dict(cls, data: dict) -> "VehicleConfig":
        data = dict(data)
        n = data.pop("n_trailers", None)
        known = {"tractor_wheelbase", "segment_lengths", "hitch_offsets", "steerable_set",
                 "joint_angle_bounds", "max_curvature", "max_curvature_rate",
                 "trailer_steer_bounds", "trailer_steer_rate_bounds"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown vehicle keys: {sorted(unknown)}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if n is not None and int(n) != cfg.n_trailers:
            raise ConfigError("n_trailers does not match the number of segment lengths")
        return cfg


def ms2t_config() -> VehicleConfig:
    """The 2-trailer test vehicle with a steerable second trailer."""
    return VehicleConfig(
        tractor_wheelbase=4.62,
        segment_lengths=(3.87, 8.0),
        hitch_offsets=(1.66, 0.0),
        joint_angle_bounds=(0.8, 0.8),
        max_curvature=0.18,
        max_curvature_rate=0.13,
        steerable_set=(2,),
        trailer_steer_bounds=(0.35,),
        trailer_steer_rate_bounds=(0.8,),
    )


@dataclass(frozen=True)
class VehicleState:
    """Pose of the last trailer and the joint angles ``(beta_1, ..., beta_N)``."""

    x: float
    y: float
    theta: float
    betas: tuple

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", _wrap(float(self.theta)))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    def is_admissible(self, config: VehicleConfig) -> bool:
        return all(abs(b) <= bb for b, bb in zip(self.betas, config.joint_angle_bounds))

    def as_array(self) -> np.ndarray:
        """State vector ``[x_N, y_N, theta_N, beta_N, ..., beta_1]``."""
        return np.array((self.x, self.y, self.theta) + self.betas[::-1])

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        arr = [float(v) for v in arr]
        return cls(arr[0], arr[1], arr[2], tuple(arr[3:][::-1]))


@dataclass(frozen=True)
class ControlInput:
    """Tractor curvature and steering angles of the steerable trailers."""

    kappa0: float
    gammas: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kappa0", float(self.kappa0))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))

    def is_admissible(self, config: VehicleConfig, tol: float = 0.0) -> bool:
        if abs(self.kappa0) > config.max_curvature + tol:
            return False
        return all(abs(g) <= gb + tol for g, gb in zip(self.gammas, config.trailer_steer_bounds))

    def as_array(self) -> np.ndarray:
        return np.array((self.kappa0,) + self.gammas)

    @classmethod
    def from_array(cls, arr) -> "ControlInput":
        arr = [float(v) for v in arr]
        return cls(arr[0], tuple(arr[1:]))


@dataclass(frozen=True)
class StateDerivative:
    """Time derivative of a :class:`VehicleState` plus the last-trailer speed."""

    dx: float
    dy: float
    dtheta: float
    dbetas: tuple
    v_n: float
    f_vn: float


def full_steering(config: VehicleConfig, gammas: Sequence[float]) -> list:
    """Steering angles ``gamma_0..gamma_N`` with zeros for passive segments."""
    slot = config._gamma_slot
    if len(gammas) != len(config.steerable_set):
        raise ValueError(
            f"expected {len(config.steerable_set)} trailer steering angles, got {len(gammas)}")
    return [gammas[k] if k >= 0 else 0.0 for k in slot]


def _jacobian_entries(L, M, beta, g, gm1):
    cg = math.cos(g)
    if abs(cg) < STEERING_COS_MIN:
        raise SingularSteeringError(f"cos(gamma) = {cg:.3e} is singular")
    return (-M / L * math.cos(beta - g) / cg,
            math.sin(beta - g + gm1) / (L * cg),
            M * math.sin(beta) / cg,
            math.cos(beta + gm1) / cg)


def velocity_transform_matrix(config: VehicleConfig, i: int, beta_i: float,
                              gamma_i: float, gamma_im1: float) -> np.ndarray:
    """The 2x2 map from ``[dtheta_{i-1}, v_{i-1}]`` to ``[dtheta_i, v_i]``."""
    if not 1 <= i <= config.n_trailers:
        raise IndexError(f"trailer index {i} outside 1..{config.n_trailers}")
    a, b, c, d = _jacobian_entries(config.segment_lengths[i - 1], config.hitch_offsets[i - 1],
                                   beta_i, gamma_i, gamma_im1)
    return np.array([[a, b], [c, d]])


def _prefix_products(config, betas, kappa0, gam):
    """``[(dtheta_i/v0, v_i/v0) for i = 0..N]``."""
    w0, w1 = kappa0, 1.0
    out = [(w0, w1)]
    Ls, Ms = config.segment_lengths, config.hitch_offsets
    for i in range(1, len(Ls) + 1):
        a, b, c, d = _jacobian_entries(Ls[i - 1], Ms[i - 1], betas[i - 1], gam[i], gam[i - 1])
        w0, w1 = a * w0 + b * w1, c * w0 + d * w1
        out.append((w0, w1))
    return out


def chain_product(config: VehicleConfig, betas: Sequence[float], u: ControlInput,
                  from_index: int = 0) -> np.ndarray:
    """Partial chain product applied to ``[kappa_0, 1]``.

    Returns ``J_{N-f} ... J_1 [kappa_0, 1]^T`` with ``f = from_index``, i.e.
    ``[dtheta_j, v_j] / v_0`` of segment ``j = N - from_index``. An empty
    product (``from_index = N``) is the identity.
    """
    n = config.n_trailers
    if not 0 <= from_index <= n:
        raise IndexError(f"from_index {from_index} outside 0..{n}")
    gam = full_steering(config, u.gammas)
    prods = _prefix_products(config, betas, u.kappa0, gam)
    return np.array(prods[n - from_index])


def kinematics(config: VehicleConfig, betas: Sequence[float], kappa0: float,
               gam: Sequence[float]):
    """One pass over the chain returning ``(f_vN, kappa_N, [f_beta_1..f_beta_N])``.

    ``gam`` is the full steering list from :func:`full_steering`.
    """
    prods = _prefix_products(config, betas, kappa0, gam)
    w_n, f_vn = prods[-1]
    if not f_vn > VELOCITY_FACTOR_MIN:
        raise DegenerateConfigurationError(f"velocity factor f_vN = {f_vn:.3e} is not positive")
    f_betas = [(prods[i - 1][0] - prods[i][0]) / f_vn for i in range(1, len(prods))]
    return f_vn, w_n / f_vn, f_betas


def velocity_factor(config: VehicleConfig, betas: Sequence[float], u: ControlInput) -> float:
    """``f_vN`` such that ``v_N = f_vN * v_0``."""
    return kinematics(config, betas, u.kappa0, full_steering(config, u.gammas))[0]


def trailer_curvature(config: VehicleConfig, betas: Sequence[float], u: ControlInput) -> float:
    """Curvature ``kappa_N = dtheta_N / v_N`` of the last trailer."""
    return kinematics(config, betas, u.kappa0, full_steering(config, u.gammas))[1]


def joint_angle_rates(config: VehicleConfig, betas: Sequence[float], u: ControlInput) -> list:
    """``f_beta_i`` for ``i = 1..N`` such that ``dbeta_i/dt = v_N f_beta_i``."""
    return kinematics(config, betas, u.kappa0, full_steering(config, u.gammas))[2]


def state_derivative(config: VehicleConfig, x: VehicleState, u: ControlInput,
                     v0: float) -> StateDerivative:
    gam = full_steering(config, u.gammas)
    f_vn, kappa_n, f_betas = kinematics(config, x.betas, u.kappa0, gam)
    v_n = v0 * f_vn
    heading = x.theta + gam[-1]
    return StateDerivative(
        dx=v_n * math.cos(heading),
        dy=v_n * math.sin(heading),
        dtheta=v_n * kappa_n,
        dbetas=tuple(v_n * fb for fb in f_betas),
        v_n=v_n,
        f_vn=f_vn,
    )


def unit_rates(config: VehicleConfig, vec: Sequence[float], kappa0: float, gam: Sequence[float]):
    """Derivative of ``[x, y, theta, beta_1..beta_N]`` per unit of ``v_N``.

    This is the right-hand side ``f(x, u)`` of ``dx/dt = v_N f(x, u)`` with the
    joint angles in ascending order.
    """
    n = config.n_trailers
    _, kappa_n, f_betas = kinematics(config, vec[3:3 + n], kappa0, gam)
    heading = vec[2] + gam[-1]
    return [math.cos(heading), math.sin(heading), kappa_n] + f_betas


def _rk4_time(config, vec, kappa0, gam, v0, dt):
    def rhs(v):
        f_vn, kappa_n, f_betas = kinematics(config, v[3:], kappa0, gam)
        vn = v0 * f_vn
        h = v[2] + gam[-1]
        return [vn * math.cos(h), vn * math.sin(h), vn * kappa_n] + [vn * fb for fb in f_betas]

    k1 = rhs(vec)
    k2 = rhs([a + 0.5 * dt * b for a, b in zip(vec, k1)])
    k3 = rhs([a + 0.5 * dt * b for a, b in zip(vec, k2)])
    k4 = rhs([a + dt * b for a, b in zip(vec, k3)])
    return [a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(vec, k1, k2, k3, k4)]


def integrate_step(config: VehicleConfig, x: VehicleState, u: ControlInput, v0: float,
                   dt: float, substeps: int = 1) -> VehicleState:
    """Advance the plant by ``dt`` seconds with a zero-order-held input.

    Uses ``substeps`` classical RK4 steps of length ``dt / substeps``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    gam = full_steering(config, u.gammas)
    vec = [x.x, x.y, x.theta, *x.betas]
    h = dt / substeps
    for _ in range(substeps):
        vec = _rk4_time(config, vec, u.kappa0, gam, v0, h)
    return VehicleState(vec[0], vec[1], vec[2], tuple(vec[3:]))
