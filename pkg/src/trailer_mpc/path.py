"""Nominal paths parametrized by the arc length of the last trailer.

A :class:`NominalPath` stores full state and control information on a uniform
arc-length grid. Paths are produced either analytically (straight line) or by
integrating ``dx/ds = dir * f(x, u)`` forward in ``s`` under a control
schedule, which makes them feasible by construction.
"""
from __future__ import annotations

import bisect
import csv
import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import (DegenerateConfigurationError, InfeasiblePathError, OutOfRangeError,
                     ProjectionInvalidError)
from .vehicle import (ControlInput, VehicleConfig, VehicleState, full_steering, kinematics,
                      unit_rates, wrap_angle)

DEFAULT_DELTA_S = 0.2
PROJECTION_WINDOW = 5.0


@dataclass(frozen=True)
class NominalPathSample:
    s: float
    state: VehicleState
    control: ControlInput
    kappa_n: float
    f_vn: float


class NominalPath:
    """Immutable arc-length indexed nominal path.

    Parameters
    ----------
    config : VehicleConfig
    direction : int
        Nominal motion direction of the last trailer, +1 or -1.
    delta_s : float
        Grid spacing [m]; sample ``k`` sits at ``s = k * delta_s``.
    states : (K, 3 + N) array
        Rows ``[x_N, y_N, theta_N, beta_1, ..., beta_N]`` (ascending joints).
    controls : (K, m) array
        Rows ``[kappa_0, gamma_a...]``.
    """

    def __init__(self, config: VehicleConfig, direction: int, delta_s: float,
                 states, controls):
        if direction not in (-1, 1):
            raise ValueError("direction must be +1 or -1")
        if delta_s <= 0:
            raise ValueError("delta_s must be positive")
        states = np.array(states, dtype=float)
        controls = np.array(controls, dtype=float).reshape(len(states), -1)
        if states.ndim != 2 or states.shape[1] != config.n_states or len(states) < 2:
            raise ValueError("states must be a (K >= 2, 3 + N) array")
        if controls.shape[1] != config.n_controls:
            raise ValueError("controls must have one column per control input")
        self.config = config
        self.direction = int(direction)
        self.delta_s = float(delta_s)
        self.s = np.arange(len(states)) * self.delta_s
        theta_cont = np.unwrap(states[:, 2])
        states[:, 2] = wrap_angle(states[:, 2])
        self._states = states
        self._theta = theta_cont
        self._controls = controls
        n = config.n_trailers
        kap = np.empty(len(states))
        fvn = np.empty(len(states))
        for k in range(len(states)):
            gam = full_steering(config, controls[k, 1:])
            fvn[k], kap[k], _ = kinematics(config, states[k, 3:3 + n], controls[k, 0], gam)
        self.kappa_n = kap
        self.f_vn = fvn
        slot = config._gamma_slot[n]
        gamma_n = controls[:, 1 + slot] if slot >= 0 else np.zeros(len(states))
        self._heading = theta_cont + gamma_n
        for arr in (self._states, self._theta, self._controls, self.kappa_n, self.f_vn,
                    self._heading, self.s):
            arr.setflags(write=False)
        self._samples = None
        self.figure_eight_length = None

    # ------------------------------------------------------------------ access
    def __len__(self):
        return len(self.s)

    @property
    def s_max(self) -> float:
        return float(self.s[-1])

    @property
    def states(self) -> np.ndarray:
        return self._states

    @property
    def controls(self) -> np.ndarray:
        return self._controls

    @property
    def positions(self) -> np.ndarray:
        return self._states[:, :2]

    @property
    def samples(self) -> list:
        if self._samples is None:
            self._samples = [self._make_sample(k) for k in range(len(self))]
        return self._samples

    def _make_sample(self, k):
        st = self._states[k]
        return NominalPathSample(
            s=float(self.s[k]),
            state=VehicleState(st[0], st[1], st[2], tuple(st[3:])),
            control=ControlInput(self._controls[k, 0], tuple(self._controls[k, 1:])),
            kappa_n=float(self.kappa_n[k]),
            f_vn=float(self.f_vn[k]),
        )

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 2)
        lam = (s - self.s[idx]) / self.delta_s
        return idx, lam

    def interpolate(self, s):
        """Vectorized linear interpolation at arc lengths ``s``.

        Returns a dict with ``states`` (continuous heading, ascending joints),
        ``controls``, ``kappa_n``, ``f_vn`` and ``heading`` (``theta_N + gamma_N``).
        Values outside the grid are extrapolated; range checks are the
        caller's job.
        """
        idx, lam = self._locate(s)
        lam_c = lam[..., None]

        def lerp(arr):
            lo, hi = arr[idx], arr[idx + 1]
            return lo + (lam_c if arr.ndim == 2 else lam) * (hi - lo)

        states = lerp(self._states)
        states[..., 2] = lerp(self._theta)
        return {
            "states": states,
            "controls": lerp(self._controls),
            "kappa_n": lerp(self.kappa_n),
            "f_vn": lerp(self.f_vn),
            "heading": lerp(self._heading),
        }

    def sample_at(self, s: float, clamp: bool = False) -> NominalPathSample:
        """Nominal sample at arc length ``s`` (exact at grid points)."""
        if not 0.0 <= s <= self.s_max:
            if not clamp:
                raise OutOfRangeError(f"s = {s:.4f} outside [0, {self.s_max:.4f}]")
            s = min(max(s, 0.0), self.s_max)
        k = int(np.searchsorted(self.s, s, side="right") - 1)
        if k >= len(self.s) - 1 or self.s[k] == s:
            return self.samples[min(k, len(self.s) - 1)]
        d = self.interpolate(np.array([s]))
        st = d["states"][0]
        ctrl = d["controls"][0]
        return NominalPathSample(
            s=float(s),
            state=VehicleState(st[0], st[1], st[2], tuple(st[3:])),
            control=ControlInput(ctrl[0], tuple(ctrl[1:])),
            kappa_n=float(d["kappa_n"][0]),
            f_vn=float(d["f_vn"][0]),
        )

    # ----------------------------------------------------------- transforms
    def reversed(self) -> "NominalPath":
        """The same geometry traversed in the opposite direction."""
        rev = NominalPath(self.config, -self.direction, self.delta_s,
                          self._states[::-1].copy(), self._controls[::-1].copy())
        rev.figure_eight_length = self.figure_eight_length
        return rev

    def restrict_to(self, config: VehicleConfig) -> "NominalPath":
        """Re-express the path for a vehicle with fewer steerable trailers.

        Dropped steering channels must be identically zero on the path.
        """
        if config.segment_lengths != self.config.segment_lengths or \
                config.hitch_offsets != self.config.hitch_offsets:
            raise ValueError("restrict_to requires identical vehicle geometry")
        cols = [0]
        for k, a in enumerate(self.config.steerable_set):
            if a in config.steerable_set:
                cols.append(1 + k)
            elif np.any(self._controls[:, 1 + k] != 0.0):
                raise ValueError(f"steering of trailer {a} is not zero along the path")
        missing = set(config.steerable_set) - set(self.config.steerable_set)
        if missing:
            raise ValueError(f"path carries no steering for trailers {sorted(missing)}")
        return NominalPath(config, self.direction, self.delta_s, self._states.copy(),
                           self._controls[:, cols].copy())

    def check_feasible(self, nominal_speed: float = 1.0, tol: float = 1e-9) -> None:
        """Raise :class:`InfeasiblePathError` at the first violating sample."""
        cfg = self.config
        bb = np.array(cfg.joint_angle_bounds)
        ub = cfg.control_bounds()
        rate = cfg.control_rate_bounds()
        n = cfg.n_trailers
        for k in range(len(self)):
            if np.any(np.abs(self._states[k, 3:3 + n]) > bb + tol):
                raise InfeasiblePathError("joint angle outside its bound", s=float(self.s[k]))
            if np.any(np.abs(self._controls[k]) > ub + tol):
                raise InfeasiblePathError("control outside its bound", s=float(self.s[k]))
            if k > 0:
                cbar = rate / (abs(nominal_speed) * self.f_vn[k])
                if np.any(np.abs(self._controls[k] - self._controls[k - 1]) > cbar * self.delta_s + tol):
                    raise InfeasiblePathError("control slew rate exceeded", s=float(self.s[k]))


# ---------------------------------------------------------------- builders
def build_straight(config: VehicleConfig, length: float, direction: int = 1,
                   delta_s: float = DEFAULT_DELTA_S) -> NominalPath:
    """Straight path of the last trailer along the x-axis, starting at the origin.

    The vehicle always points along +x; in backward motion the last trailer
    travels towards negative x.
    """
    if length <= 0:
        raise ValueError("length must be positive")
    k = int(round(length / delta_s)) + 1
    states = np.zeros((k, config.n_states))
    states[:, 0] = direction * np.arange(k) * delta_s
    return NominalPath(config, direction, delta_s, states, np.zeros((k, config.n_controls)))


def build_from_controls(config: VehicleConfig, initial_state: VehicleState,
                        control_schedule: Callable[[float], ControlInput], v0_sign: int,
                        total_length: float, delta_s: float = DEFAULT_DELTA_S,
                        substeps: int = 10, nominal_speed: float = 1.0) -> NominalPath:
    """Integrate the spatial model ``dx/ds = v0_sign * f(x, u(s))`` with RK4.

    ``control_schedule`` maps arc length to a :class:`ControlInput`. Samples
    are emitted every ``delta_s``; the result is checked against state, input
    and slew-rate bounds (the latter at ``nominal_speed``).
    """
    if v0_sign not in (-1, 1):
        raise ValueError("v0_sign must be +1 or -1")
    n_samples = int(round(total_length / delta_s)) + 1
    h = delta_s / substeps
    vec = [initial_state.x, initial_state.y, initial_state.theta, *initial_state.betas]

    def rhs(s, v):
        u = control_schedule(s)
        gam = full_steering(config, u.gammas)
        try:
            f = unit_rates(config, v, u.kappa0, gam)
        except DegenerateConfigurationError as exc:
            raise InfeasiblePathError(f"degenerate configuration: {exc}", s=s) from exc
        return [v0_sign * fi for fi in f]

    states = [list(vec)]
    controls = [control_schedule(0.0).as_array()]
    s = 0.0
    for k in range(1, n_samples):
        for j in range(substeps):
            s0 = (k - 1) * delta_s + j * h
            k1 = rhs(s0, vec)
            k2 = rhs(s0 + 0.5 * h, [a + 0.5 * h * b for a, b in zip(vec, k1)])
            k3 = rhs(s0 + 0.5 * h, [a + 0.5 * h * b for a, b in zip(vec, k2)])
            k4 = rhs(s0 + h, [a + h * b for a, b in zip(vec, k3)])
            vec = [a + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
                   for a, b1, b2, b3, b4 in zip(vec, k1, k2, k3, k4)]
        s = k * delta_s
        states.append(list(vec))
        controls.append(control_schedule(s).as_array())
    path = NominalPath(config, v0_sign, delta_s, np.array(states), np.array(controls))
    path.check_feasible(nominal_speed=nominal_speed)
    return path


def ramp_schedule(breakpoints, values, n_gammas: int = 0) -> Callable[[float], ControlInput]:
    """Piecewise-linear tractor-curvature schedule with zero trailer steering."""
    bp = [float(b) for b in breakpoints]
    vals = [float(v) for v in values]
    zeros = (0.0,) * n_gammas

    def schedule(s: float) -> ControlInput:
        j = bisect.bisect_right(bp, s)
        if j == 0:
            k = vals[0]
        elif j == len(bp):
            k = vals[-1]
        else:
            lam = (s - bp[j - 1]) / (bp[j] - bp[j - 1])
            k = vals[j - 1] + lam * (vals[j] - vals[j - 1])
        return ControlInput(k, zeros)

    return schedule


def _lobe_breakpoints(start, sign, kappa_hat, ramp, plateau, settle):
    b = [start, start + ramp, start + ramp + plateau, start + 2 * ramp + plateau,
         start + 2 * ramp + plateau + settle]
    v = [0.0, sign * kappa_hat, sign * kappa_hat, 0.0, 0.0]
    return b, v


def build_figure_eight(config: VehicleConfig, kappa_hat: float = 0.07, direction: int = 1,
                       delta_s: float = DEFAULT_DELTA_S, ramp_rate: float = 0.05,
                       settle: float = 30.0, lead_out: float = 20.0) -> NominalPath:
    """Figure-eight made of two mirrored lobes with ramped tractor curvature.

    Each lobe ramps the tractor curvature to ``+-kappa_hat`` at ``ramp_rate``
    [1/m^2], holds it, ramps back to zero and drives ``settle`` metres
    straight. The plateau length is chosen so that two mirrored lobes close
    on themselves, i.e. the chord of one lobe is perpendicular to the bisector
    of its heading change. A straight lead-out gives room for the prediction
    horizon. Backward paths are the reversed forward path.
    """
    path = _figure_eight_forward(config, kappa_hat, delta_s, ramp_rate, settle, lead_out)
    return path if direction == 1 else path.reversed()


@functools.lru_cache(maxsize=16)
def _figure_eight_forward(config, kappa_hat, delta_s, ramp_rate, settle, lead_out):
    ramp = kappa_hat / ramp_rate
    n_gam = len(config.steerable_set)
    zero = VehicleState(0.0, 0.0, 0.0, (0.0,) * config.n_trailers)

    def lobe_end(plateau):
        b, v = _lobe_breakpoints(0.0, 1.0, kappa_hat, ramp, plateau, settle)
        length = b[-1]
        p = build_from_controls(config, zero, ramp_schedule(b, v, n_gam), 1,
                                math.ceil(length / delta_s) * delta_s, delta_s)
        end = p.states[-1]
        return end[0], end[1], p._theta[-1]

    def closure(plateau):
        dx, dy, psi = lobe_end(plateau)
        return dx * math.cos(0.5 * psi) + dy * math.sin(0.5 * psi), psi

    # lobes turning between pi and 2 pi give a crossing figure-eight
    grid = np.linspace(math.pi / kappa_hat, 3.0 * math.pi / kappa_hat, 9)
    evals = [closure(p) for p in grid]
    plateau = None
    for a, b, (fa, pa), (fb, pb) in zip(grid[:-1], grid[1:], evals[:-1], evals[1:]):
        if fa * fb <= 0.0 and math.pi < pa < 2.0 * math.pi and math.pi < pb <= 2.0 * math.pi:
            plateau = brentq(lambda p: closure(p)[0], a, b, xtol=1e-9)
            break
    if plateau is None:
        raise InfeasiblePathError("no closing plateau length found for the figure-eight")

    b1, v1 = _lobe_breakpoints(0.0, 1.0, kappa_hat, ramp, plateau, settle)
    b2, v2 = _lobe_breakpoints(b1[-1], -1.0, kappa_hat, ramp, plateau, settle)
    bp = b1 + b2[1:] + [b2[-1] + lead_out]
    vals = v1 + v2[1:] + [0.0]
    total = math.ceil(bp[-1] / delta_s) * delta_s
    path = build_from_controls(config, zero, ramp_schedule(bp, vals, n_gam), 1, total, delta_s)
    path.figure_eight_length = b2[-1]
    return path


# -------------------------------------------------------------- projection
@dataclass(frozen=True)
class Projection:
    """Result of projecting the last-trailer position onto a nominal path.

    ``z`` is positive when the point lies to the left of the nominal heading
    ``theta_Nr + gamma_Nr`` of the last trailer (which coincides with the
    direction of increasing ``s`` for forward paths).
    """

    s: float
    z: float
    index: int
    valid: bool


def _heading_dot(path, p, s):
    d = path.interpolate(np.array([s]))
    pos = d["states"][0, :2]
    psi = d["heading"][0]
    diff = p - pos
    return diff, psi, d["kappa_n"][0]


def project(path: NominalPath, position, s_hint: float, s_min: Optional[float] = None,
            window: float = PROJECTION_WINDOW) -> Projection:
    """Closest point on the nominal last-trailer path near ``s_hint``.

    Candidates are searched over ``[s_hint - window, s_hint + window]``: the
    orthogonality condition ``(p - pos(s)) . t(s) = 0`` is bracketed on the
    polyline grid and refined with Brent's method on the interpolated path.
    ``s_min`` enforces a non-decreasing arc length within a tracking session.
    """
    p = np.asarray(position, dtype=float)
    i0 = max(0, int(math.floor((s_hint - window) / path.delta_s)))
    i1 = min(len(path) - 1, int(math.ceil((s_hint + window) / path.delta_s)))
    if i1 <= i0:
        i0, i1 = max(0, min(i0, len(path) - 2)), min(len(path) - 1, max(i0, 0) + 1)
    pos = path.positions[i0:i1 + 1]
    psi = path._heading[i0:i1 + 1]
    t = path.direction * np.column_stack((np.cos(psi), np.sin(psi)))
    g = np.einsum("ij,ij->i", p - pos, t)

    def g_of(s):
        diff, ps, _ = _heading_dot(path, p, s)
        return path.direction * (diff[0] * math.cos(ps) + diff[1] * math.sin(ps))

    cands = [float(path.s[i0]), float(path.s[i1])]
    for j in np.nonzero((g[:-1] >= 0.0) & (g[1:] <= 0.0))[0]:
        a, b = float(path.s[i0 + j]), float(path.s[i0 + j + 1])
        if g[j] == 0.0:
            cands.append(a)
        elif g[j + 1] == 0.0:
            cands.append(b)
        else:
            cands.append(brentq(g_of, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps))
    d = path.interpolate(np.array(cands))
    dist = np.hypot(p[0] - d["states"][:, 0], p[1] - d["states"][:, 1])
    s_star = cands[int(np.argmin(dist))]
    if s_min is not None and s_star < s_min:
        s_star = s_min
    diff, ps, kappa = _heading_dot(path, p, s_star)
    z = float(-diff[0] * math.sin(ps) + diff[1] * math.cos(ps))
    idx = int(min(max(np.searchsorted(path.s, s_star, side="right") - 1, 0), len(path) - 2))
    return Projection(s=float(s_star), z=z, index=idx, valid=bool(1.0 - kappa * z > 0.0))


class Projector:
    """Projection session that never moves backwards along the path."""

    def __init__(self, path: NominalPath, window: float = PROJECTION_WINDOW):
        self.path = path
        self.window = window
        self.s_last = None

    def reset(self):
        self.s_last = None

    def __call__(self, position, s_hint: Optional[float] = None, require_valid: bool = False) -> Projection:
        hint = self.s_last if s_hint is None else s_hint
        if hint is None:
            raise ValueError("first projection of a session needs an s_hint")
        proj = project(self.path, position, hint, s_min=self.s_last, window=self.window)
        self.s_last = proj.s
        if require_valid and not proj.valid:
            raise ProjectionInvalidError(
                f"1 - kappa_Nr z = {1.0 - self.path.interpolate(np.array([proj.s]))['kappa_n'][0] * proj.z:.3e}")
        return proj


# --------------------------------------------------------------------- CSV
def _csv_header(config: VehicleConfig):
    n = config.n_trailers
    return (["s", "x", "y", "theta"] + [f"beta{i}" for i in range(n, 0, -1)] + ["kappa0"]
            + [f"gamma{a}" for a in config.steerable_set] + [f"kappa{n}r", "direction"])


def write_path_csv(path: NominalPath, filename) -> None:
    n = path.config.n_trailers
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_csv_header(path.config))
        for k in range(len(path)):
            st = path.states[k]
            row = [path.s[k], st[0], st[1], st[2], *st[3:3 + n][::-1], *path.controls[k],
                   path.kappa_n[k], path.direction]
            w.writerow([repr(float(v)) for v in row[:-1]] + [str(path.direction)])


def read_path_csv(filename, config: VehicleConfig) -> NominalPath:
    n = config.n_trailers
    with open(filename, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    if header != _csv_header(config):
        raise ValueError(f"unexpected path CSV header {header}")
    data = np.array([[float(v) for v in r] for r in body])
    direction = int(data[0, -1])
    if np.any(data[:, -1] != direction):
        raise ValueError("motion direction must be constant along a path")
    s = data[:, 0]
    ds = s[1] - s[0]
    if not np.allclose(np.diff(s), ds, atol=1e-9):
        raise ValueError("path CSV must use a uniform arc-length grid")
    states = np.column_stack([data[:, 1:4], data[:, 4:4 + n][:, ::-1]])
    controls = data[:, 4 + n:4 + n + config.n_controls]
    return NominalPath(config, direction, ds, states, controls)
