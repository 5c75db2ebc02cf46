"""Closed-loop episodes: plant integration, logging and metrics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..controller import LqController, MpcController
from ..error_model import auxiliary_errors
from ..errors import (ConvergenceError, DegenerateConfigurationError, FrenetDomainError,
                      HorizonExceedsPathError, OutOfRangeError, ProjectionInvalidError)
from ..vehicle import VehicleState, integrate_step
from .config import Scenario, build_path

CONVERGENCE_TOL = 0.02
CONVERGENCE_HOLD = 2.0
JACKKNIFE_MARGIN = 0.05
JACKKNIFE_GROWTH_STEPS = 10
PLANT_SUBSTEPS = 10

STATUSES = ("converged", "jackknife", "projection-lost", "horizon-exhausted", "timeout",
            "solver-failure")


@dataclass
class EpisodeLog:
    """Per-step records of one closed-loop run.

    Array fields share the leading step dimension. ``states`` rows are
    ``[x_N, y_N, theta_N, beta_N, ..., beta_1]``; ``errors`` rows follow the
    error-vector order and ``aux`` holds ``[z~_{N-1}, theta~_{N-1}, ..., z~_0, theta~_0]``.
    """

    scenario: Scenario
    t: np.ndarray
    s: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    commands: np.ndarray         # unsaturated commands (LQ) or applied controls (MPC)
    deviations: np.ndarray       # applied u - u_r(s*)
    errors: np.ndarray
    aux: np.ndarray
    qp_iters: np.ndarray
    qp_status: list
    slack_max: np.ndarray
    solve_time: np.ndarray
    status: str
    t_conv: float = math.nan
    positions: np.ndarray = field(default=None, repr=False)  # trailer-N path incl. final state

    def __len__(self):
        return len(self.t)

    # ------------------------------------------------------------------ CSV
    def csv_header(self) -> list:
        cfg = self.scenario.vehicle
        n = cfg.n_trailers
        cols = ["t", "s", f"x{n}", f"y{n}", f"theta{n}"] + [f"beta{i}" for i in range(n, 0, -1)]
        cols += ["kappa0"] + [f"gamma{a}" for a in cfg.steerable_set]
        cols += [f"z{n}", f"th{n}"] + [f"bt{i}" for i in range(n, 0, -1)]
        for i in range(n - 1, -1, -1):
            cols += [f"z{i}", f"th{i}"]
        cols += ["qp_iters", "qp_status", "slack_max"]
        if self.scenario.controller == "lq":
            cols += ["kappa0_cmd"] + [f"gamma{a}_cmd" for a in cfg.steerable_set]
        return cols

    def _full_controls(self, arr):
        """Controls expanded to the base vehicle's steering channels (zeros if absent)."""
        m = self.scenario.vehicle.n_controls
        if arr.shape[1] == m:
            return arr
        out = np.zeros((arr.shape[0], m))
        out[:, :arr.shape[1]] = arr
        return out

    def write_csv(self, filename) -> None:
        ctrl = self._full_controls(self.controls)
        cmd = self._full_controls(self.commands)
        n = self.scenario.vehicle.n_trailers
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.csv_header())
            for k in range(len(self.t)):
                st = self.states[k]
                row = [self.t[k], self.s[k], st[0], st[1], st[2], *st[3:3 + n], *ctrl[k],
                       *self.errors[k], *self.aux[k], int(self.qp_iters[k]), self.qp_status[k],
                       self.slack_max[k]]
                if self.scenario.controller == "lq":
                    row += list(cmd[k])
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def initial_state(scenario: Scenario, path) -> VehicleState:
    """Global pose for the perturbed start at ``scenario.start_s``.

    The last trailer is offset by ``z~`` along the left normal of the nominal
    heading; heading and joint angles are nominal plus perturbation.
    """
    n = scenario.plant_config.n_trailers
    d = path.interpolate(np.array([scenario.start_s]))
    ref = d["states"][0]
    psi = d["heading"][0]
    p = scenario.perturbation
    z, th = p[0], p[1]
    betas_err = p[2:][::-1]  # ascending
    x = ref[0] - z * math.sin(psi)
    y = ref[1] + z * math.cos(psi)
    betas = tuple(ref[3 + i] + betas_err[i] for i in range(n))
    return VehicleState(x, y, ref[2] + th, betas)


def make_controller(scenario: Scenario):
    cfg = scenario.plant_config
    if scenario.controller == "lq":
        return LqController(cfg, scenario.mpc)
    return MpcController(cfg, scenario.mpc)


class _JackknifeMonitor:
    """Flags a joint angle that is beyond its bound plus a margin and has kept
    growing in magnitude for a number of consecutive steps while out there."""

    def __init__(self, bounds, use_bounds=True):
        self.bounds = np.asarray(bounds, dtype=float)
        if not use_bounds:
            self.bounds = np.full_like(self.bounds, np.inf)
        self.prev = None
        self.growth = np.zeros(len(bounds), dtype=int)

    def update(self, betas) -> bool:
        a = np.abs(np.asarray(betas, dtype=float))
        if np.any(a >= 0.5 * math.pi):
            return True
        outside = a > self.bounds + JACKKNIFE_MARGIN
        if self.prev is not None:
            self.growth = np.where(outside & (a > self.prev), self.growth + 1, 0)
        self.prev = a
        return bool(np.any(outside & (self.growth >= JACKKNIFE_GROWTH_STEPS)))


def run_episode(scenario: Scenario, path=None, controller=None) -> EpisodeLog:
    """Simulate ``scenario`` in closed loop.

    Terminates on the episode length, jack-knife, projection loss, path end
    or (with ``stop_on_convergence``) after the convergence hold time.
    """
    cfg = scenario.plant_config
    if path is None:
        path = build_path(scenario)
    if controller is None:
        controller = make_controller(scenario)
    controller.reset()
    fs = scenario.mpc.frequency
    dt = 1.0 / fs
    n_steps = int(round(scenario.duration * fs))
    hold = int(round(CONVERGENCE_HOLD * fs))
    x = initial_state(scenario, path)
    monitor = _JackknifeMonitor(cfg.joint_angle_bounds, scenario.bound_jackknife)
    rec = {k: [] for k in ("t", "s", "states", "controls", "commands", "deviations", "errors", "aux",
                           "qp_iters", "qp_status", "slack_max", "solve_time")}
    positions = []
    status = None
    inside = 0
    t_conv = math.nan
    s_hint = scenario.start_s
    for k in range(n_steps):
        t = k * dt
        try:
            res = controller.step(x, path, scenario.v0, s_hint=s_hint)
        except (ProjectionInvalidError, FrenetDomainError, OutOfRangeError, DegenerateConfigurationError):
            status = "projection-lost"
            break
        except HorizonExceedsPathError:
            status = "horizon-exhausted"
            break
        except ConvergenceError:
            status = "solver-failure"
            break
        s_hint = None
        err = res.error.as_array()
        u = res.control
        rec["t"].append(t)
        rec["s"].append(res.s)
        rec["states"].append([x.x, x.y, x.theta, *x.betas[::-1]])
        rec["controls"].append(u.as_array())
        rec["commands"].append(res.unsaturated if res.unsaturated is not None else u.as_array())
        rec["deviations"].append(res.deviation)
        rec["errors"].append(err)
        rec["aux"].append(auxiliary_errors(cfg, err))
        rec["qp_iters"].append(res.qp_iterations)
        rec["qp_status"].append(res.qp_status)
        rec["slack_max"].append(res.slack_max)
        rec["solve_time"].append(res.solve_time)
        positions.append((x.x, x.y))

        if monitor.update(x.betas):
            status = "jackknife"
            break
        if np.max(np.abs(err)) < CONVERGENCE_TOL:
            inside += 1
            if inside == 1:
                t_conv = t
        else:
            inside = 0
            t_conv = math.nan
        if scenario.stop_on_convergence and inside >= hold:
            status = "converged"
            break
        try:
            x = integrate_step(cfg, x, u, scenario.v0, dt, substeps=PLANT_SUBSTEPS)
        except DegenerateConfigurationError:
            status = "jackknife"
            break
    if status is None:
        status = "converged" if inside >= hold else "timeout"
    if status != "converged":
        t_conv = math.nan
    positions.append((x.x, x.y))
    m = cfg.n_controls
    nx = cfg.n_trailers + 2
    arr = {k: np.array(v, dtype=float) for k, v in rec.items() if k != "qp_status"}
    return EpisodeLog(
        scenario=scenario, t=arr["t"], s=arr["s"],
        states=arr["states"].reshape(-1, 1 + nx), controls=arr["controls"].reshape(-1, m),
        commands=arr["commands"].reshape(-1, m), deviations=arr["deviations"].reshape(-1, m),
        errors=arr["errors"].reshape(-1, nx),
        aux=arr["aux"].reshape(-1, 2 * cfg.n_trailers), qp_iters=arr["qp_iters"].astype(int),
        qp_status=rec["qp_status"], slack_max=arr["slack_max"], solve_time=arr["solve_time"],
        status=status, t_conv=t_conv, positions=np.array(positions))


def _peak(values):
    """Peak magnitude, skipping the initial sample when it is nonzero."""
    if len(values) == 0:
        return math.nan
    v = np.abs(values)
    if v[0] > 0 and len(v) > 1:
        return float(np.max(v[1:]))
    return float(np.max(v))


def compute_metrics(log: EpisodeLog) -> dict:
    """Flat metrics record of an episode."""
    cfg = log.scenario.plant_config
    n = cfg.n_trailers
    bounds = np.array(cfg.joint_angle_bounds)[::-1]
    betas = log.states[:, 3:3 + n] if len(log) else np.zeros((0, n))
    viol = float(np.max(np.abs(betas) - bounds, initial=0.0)) if len(log) else 0.0
    return {
        "controller": log.scenario.controller,
        "status": log.status,
        "steps": len(log),
        "duration": float(log.t[-1]) if len(log) else 0.0,
        f"max_z{n}": _peak(log.errors[:, 0]),
        f"max_th{n}": _peak(log.errors[:, 1]),
        "t_conv": log.t_conv,
        "max_joint_violation": max(viol, 0.0),
        "control_effort": float(np.sum(log.deviations ** 2)),
        "max_slack": float(np.max(log.slack_max, initial=0.0)),
        "mean_solve_time": float(np.mean(log.solve_time)) if len(log) else 0.0,
        "max_solve_time": float(np.max(log.solve_time, initial=0.0)),
    }


def write_metrics(metrics: dict, filename) -> None:
    """Write ``metrics`` as JSON; NaN values (e.g. no convergence) become null."""
    clean = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in metrics.items()}
    with open(filename, "w") as fh:
        json.dump(clean, fh, indent=2, sort_keys=True)
        fh.write("\n")
