"""Frenet-frame path-following error model and its linearization.

The error vector is ``x~ = [z~_N, theta~_N, beta~_N, ..., beta~_1]`` (joint
errors in *descending* trailer order) and the control deviation is
``u~ = u - u_r``. In arc length ``s`` of the last trailer the error obeys::

    dx~/ds = dir * f~(s, x~, u~),      f~(s, 0, 0) = 0

which is linearized around the origin to ``dir * (A(s) x~ + B(s) u~)`` and
discretized with forward Euler.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from .errors import FrenetDomainError, ProjectionInvalidError
from .path import NominalPath, NominalPathSample, Projection
from .vehicle import VehicleConfig, VehicleState, full_steering, kinematics, wrap_angle

FD_STEP = 1e-6


@dataclass(frozen=True)
class PathError:
    z: float
    theta: float
    betas: tuple  # beta~_N, ..., beta~_1
    s: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array((self.z, self.theta) + tuple(self.betas))

    @classmethod
    def from_array(cls, arr, s: float = 0.0) -> "PathError":
        arr = [float(v) for v in arr]
        return cls(arr[0], arr[1], tuple(arr[2:]), s)


@dataclass(frozen=True)
class ControlDeviation:
    kappa0: float
    gammas: tuple = ()

    def as_array(self) -> np.ndarray:
        return np.array((self.kappa0,) + tuple(self.gammas))

    @classmethod
    def from_array(cls, arr) -> "ControlDeviation":
        arr = [float(v) for v in arr]
        return cls(arr[0], tuple(arr[1:]))


@dataclass(frozen=True)
class LinearizedModel:
    """Euler-discretized error dynamics ``x~_{k+1} = F_k x~_k + G_k u~_k``."""

    F: np.ndarray  # (K, n, n)
    G: np.ndarray  # (K, n, m)
    A: np.ndarray
    B: np.ndarray
    delta_s: float
    direction: int


def compute_error(config: VehicleConfig, x: VehicleState, path: NominalPath,
                  proj: Projection) -> PathError:
    """Path-following error of state ``x`` at the projection ``proj``."""
    if not proj.valid:
        raise ProjectionInvalidError(f"projection at s = {proj.s:.3f} is outside the Frenet domain")
    d = path.interpolate(np.array([proj.s]))
    ref = d["states"][0]
    n = config.n_trailers
    theta_err = wrap_angle(x.theta - ref[2])
    beta_err = [wrap_angle(x.betas[i] - ref[3 + i]) for i in range(n - 1, -1, -1)]
    return PathError(proj.z, theta_err, tuple(beta_err), proj.s)


def _spatial_rates(config, betas_r, u_r, kappa_r, direction, xt, ut):
    """``dx~/ds`` for plain sequences; ``betas_r`` ascending, ``xt`` in error order."""
    n = config.n_trailers
    slot = config._gamma_slot[n]
    g_err = ut[1 + slot] if slot >= 0 else 0.0
    z, th = xt[0], xt[1]
    ang = th + g_err
    if not abs(ang) < 0.5 * math.pi:
        raise FrenetDomainError(f"|theta~ + gamma~| = {abs(ang):.3f} >= pi/2")
    lat = 1.0 - kappa_r * z
    if not lat > 0.0:
        raise FrenetDomainError(f"1 - kappa_Nr z~ = {lat:.3e} <= 0")
    scale = lat / math.cos(ang)
    betas = [betas_r[i] + xt[2 + (n - 1 - i)] for i in range(n)]
    u = [a + b for a, b in zip(u_r, ut)]
    _, kappa, f_b = kinematics(config, betas, u[0], full_steering(config, u[1:]))
    _, kappa_ref, f_br = kinematics(config, betas_r, u_r[0], full_steering(config, u_r[1:]))
    out = [lat * math.tan(ang), scale * kappa - kappa_ref]
    out += [scale * f_b[i] - f_br[i] for i in range(n - 1, -1, -1)]
    return [direction * v for v in out]


def spatial_dynamics(config: VehicleConfig, s: float, x_err, u_dev, path: NominalPath) -> np.ndarray:
    """``dx~/ds`` of the nonlinear error model at arc length ``s``.

    ``x_err`` and ``u_dev`` accept :class:`PathError` / :class:`ControlDeviation`
    or plain arrays.
    """
    xt = x_err.as_array() if hasattr(x_err, "as_array") else np.asarray(x_err, dtype=float)
    ut = u_dev.as_array() if hasattr(u_dev, "as_array") else np.asarray(u_dev, dtype=float)
    return np.array(_sample_rates(config, path.sample_at(s), path.direction, list(xt), list(ut)))


def _sample_rates(config, sample: NominalPathSample, direction, xt, ut):
    return _spatial_rates(config, sample.state.betas, list(sample.control.as_array()),
                          sample.kappa_n, direction, xt, ut)


def linearize_sample(config: VehicleConfig, sample: NominalPathSample, h: float = FD_STEP):
    """Central-difference ``(A, B)`` of ``f~`` at the origin for one nominal sample.

    The result does not depend on the motion direction.
    """
    nx = config.n_trailers + 2
    m = config.n_controls
    betas_r = sample.state.betas
    u_r = list(sample.control.as_array())
    kap = sample.kappa_n
    J = np.empty((nx, nx + m))
    for j in range(nx + m):
        v = [0.0] * (nx + m)
        v[j] = h
        fp = _spatial_rates(config, betas_r, u_r, kap, 1, v[:nx], v[nx:])
        v[j] = -h
        fm = _spatial_rates(config, betas_r, u_r, kap, 1, v[:nx], v[nx:])
        J[:, j] = [(a - b) / (2.0 * h) for a, b in zip(fp, fm)]
    return J[:, :nx], J[:, nx:]


def linearize_numeric(config: VehicleConfig, path: NominalPath, s: float, h: float = FD_STEP):
    """``(A(s), B(s))`` by central finite differences of the spatial error model."""
    return linearize_sample(config, path.sample_at(s), h)


def linearize_ms2t_closed_form(config: VehicleConfig, sample: NominalPathSample):
    """Closed-form ``(A, B)`` for the 2-trailer vehicle with a steerable, on-axle second trailer.

    Entry ``a41`` carries the factor ``sin(beta_2r - gamma_2r)`` and ``a44``
    the leading minus sign that follow from differentiating the joint-angle
    kinematics; both vanish/flip relative to a literal transcription.
    """
    if (config.n_trailers != 2 or config.steerable_set != (2,)
            or config.hitch_offsets[1] != 0.0):
        raise ValueError("closed form requires N = 2, steerable set {2} and M_2 = 0")
    L1, L2 = config.segment_lengths
    M1 = config.hitch_offsets[0]
    b1, b2 = sample.state.betas
    k0, g2 = sample.control.kappa0, sample.control.gammas[0]
    c, s_ = math.cos, math.sin
    D = c(b1) + k0 * M1 * s_(b1)
    sd, cd = s_(b2 - g2), c(b2 - g2)
    cb2, cg2 = c(b2), c(g2)
    n1 = k0 * L1 - s_(b1) + M1 * c(b1) * k0

    A = np.zeros((4, 4))
    B = np.zeros((4, 2))
    A[0, 1] = 1.0
    A[1, 0] = -sd ** 2 / (L2 ** 2 * cb2 ** 2)
    A[1, 2] = cd / (L2 * cb2) + sd * math.tan(b2) / (L2 * cb2)
    A[2, 0] = -sd / (L2 * cb2 ** 2) * (cg2 * (s_(b1) - k0 * M1 * c(b1)) / (L1 * D) - sd / L2)
    A[2, 2] = cg2 * (s_(b2) * (s_(b1) - k0 * M1 * c(b1)) / (L1 * cb2 ** 2 * D) - 1.0 / (cb2 ** 2 * L2))
    A[2, 3] = cg2 * (1.0 + k0 ** 2 * M1 ** 2) / (L1 * cb2 * D ** 2)
    A[3, 0] = -sd * cg2 * n1 / (L1 * L2 * cb2 ** 2 * D)
    A[3, 2] = cg2 * math.tan(b2) / L1 * (n1 / (cb2 * D))
    A[3, 3] = -(1.0 + k0 ** 2 * M1 ** 2 + k0 ** 2 * L1 * M1 * c(b1) - k0 * L1 * s_(b1)) * cg2 / (
        L1 * cb2 * D ** 2)

    B[0, 1] = 1.0
    B[1, 1] = -cd / (L2 * cb2)
    B[2, 0] = -M1 * cg2 / (L1 * cb2 * D ** 2)
    B[2, 1] = cd / (L2 * cb2) + (k0 * M1 * c(b1) - s_(b1)) * s_(g2) / (cb2 * L1 * D)
    B[3, 0] = cg2 * (M1 + L1 * c(b1)) / (cb2 * L1 * D ** 2)
    B[3, 1] = -n1 * s_(g2) / (cb2 * L1 * D)
    return A, B


def straight_path_matrices(config: VehicleConfig):
    """``(A, B)`` around a straight nominal path with all angles and inputs zero."""
    n = config.n_trailers
    zero = NominalPathSample(0.0, VehicleState(0.0, 0.0, 0.0, (0.0,) * n),
                             _zero_control(config), 0.0, 1.0)
    return linearize_sample(config, zero)


def _zero_control(config):
    from .vehicle import ControlInput
    return ControlInput(0.0, (0.0,) * len(config.steerable_set))


def discretize(A, B, delta_s: float, direction: int):
    """Forward-Euler map ``F = I + ds*dir*A``, ``G = ds*dir*B`` (broadcasts over stacks)."""
    if delta_s <= 0:
        raise ValueError("delta_s must be positive")
    if direction not in (-1, 1):
        raise ValueError("direction must be +1 or -1")
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    F = np.eye(A.shape[-1]) + delta_s * direction * A
    G = delta_s * direction * B
    return F, G


_PATH_CACHE: "weakref.WeakKeyDictionary[NominalPath, tuple]" = weakref.WeakKeyDictionary()


def path_linearization(path: NominalPath):
    """``(A_k, B_k)`` stacked over every grid sample of ``path`` (cached per path)."""
    hit = _PATH_CACHE.get(path)
    if hit is None:
        cfg = path.config
        pairs = [linearize_sample(cfg, smp) for smp in path.samples]
        hit = (np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))
        _PATH_CACHE[path] = hit
    return hit


def linearize_along(path: NominalPath, s_values) -> LinearizedModel:
    """LTV prediction model at arc lengths ``s_values``.

    Jacobians are computed once per grid sample and linearly interpolated in
    between.
    """
    A_all, B_all = path_linearization(path)
    idx, lam = path._locate(np.asarray(s_values, dtype=float))
    lam = lam[:, None, None]
    A = A_all[idx] + lam * (A_all[idx + 1] - A_all[idx])
    B = B_all[idx] + lam * (B_all[idx + 1] - B_all[idx])
    F, G = discretize(A, B, path.delta_s, path.direction)
    return LinearizedModel(F=F, G=G, A=A, B=B, delta_s=path.delta_s, direction=path.direction)


def auxiliary_errors(config: VehicleConfig, x_err) -> np.ndarray:
    """Lateral and heading errors of the remaining segments.

    Propagates ``z~_i = z~_{i+1} + L_{i+1} sin(theta~_{i+1}) + M_{i+1} sin(theta~_{i+1} + beta~_{i+1})``
    and ``theta~_i = theta~_{i+1} + beta~_{i+1}`` from the last trailer to the
    tractor. Returns ``[z~_{N-1}, theta~_{N-1}, ..., z~_0, theta~_0]``.
    """
    xt = x_err.as_array() if hasattr(x_err, "as_array") else np.asarray(x_err, dtype=float)
    n = config.n_trailers
    z, th = float(xt[0]), float(xt[1])
    out = []
    for i in range(n - 1, -1, -1):
        beta = float(xt[2 + (n - 1 - i)])  # beta~_{i+1}
        L, M = config.segment_lengths[i], config.hitch_offsets[i]
        z = z + L * math.sin(th) + M * math.sin(th + beta)
        th = th + beta
        out += [z, th]
    return np.array(out)
