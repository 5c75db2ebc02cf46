"""Scenario definitions and the INI-style scenario file format.

A scenario file has the sections ``vehicle``, ``path``, ``mpc`` and
``scenario`` (plus an optional ``sweep``). Values are JSON literals, so
tuples are written as ``[3.87, 8.0]`` and flags as ``true``/``false``::

    [scenario]
    controller = "ms2t-mpc"
    v0 = -1.0
    perturbation = [0.0, 0.0, 0.6, -0.6]
"""
from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..controller import MpcConfig
from ..errors import ConfigError, TrailerMpcError
from ..path import build_figure_eight, build_straight, read_path_csv
from ..vehicle import VehicleConfig, ms2t_config

CONTROLLER_KINDS = ("ms2t-mpc", "ss2t-mpc", "lq")
PATH_KINDS = ("straight", "figure-eight", "from-file")
START_OFFSET = 5.0


@dataclass(frozen=True)
class PathSpec:
    kind: str = "straight"
    length: float | None = None       # straight only; sized from the episode when None
    kappa_hat: float = 0.07           # figure-eight plateau curvature
    file: str | None = None           # from-file

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise ConfigError(f"path kind must be one of {PATH_KINDS}, got {self.kind!r}")
        if self.kind == "from-file" and not self.file:
            raise ConfigError("from-file paths need a 'file' entry")


@dataclass(frozen=True)
class SweepSpec:
    beta1_range: tuple = (-0.8, 0.8)
    beta2_range: tuple = (-0.8, 0.8)
    cells: int = 25
    controllers: tuple = CONTROLLER_KINDS
    duration: float = 60.0

    def __post_init__(self):
        for kind in self.controllers:
            if kind not in CONTROLLER_KINDS:
                raise ConfigError(f"unknown controller {kind!r}")
        if int(self.cells) < 1:
            raise ConfigError("cells must be positive")


@dataclass(frozen=True)
class Scenario:
    """One closed-loop simulation setup.

    ``perturbation`` is the initial error in error-vector order
    ``[z~_N, theta~_N, beta~_N, ..., beta~_1]``. With ``bound_jackknife``
    off, joint angles past their bounds are not flagged; only folding
    (``|beta| >= pi/2`` or a degenerate chain) ends the episode early.
    """

    vehicle: VehicleConfig = field(default_factory=ms2t_config)
    path: PathSpec = field(default_factory=PathSpec)
    controller: str = "ms2t-mpc"
    mpc: MpcConfig = field(default_factory=MpcConfig)
    v0: float = -1.0
    perturbation: tuple = ()
    duration: float = 20.0
    seed: int = 0
    start_s: float = START_OFFSET
    stop_on_convergence: bool = False
    bound_jackknife: bool = True      # False: only physical folding ends an episode

    def __post_init__(self):
        if self.controller not in CONTROLLER_KINDS:
            raise ConfigError(f"controller must be one of {CONTROLLER_KINDS}, got {self.controller!r}")
        if not abs(self.v0) > 0:
            raise ConfigError("v0 must be nonzero")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        nx = self.vehicle.n_trailers + 2
        pert = tuple(float(v) for v in self.perturbation) or (0.0,) * nx
        if len(pert) != nx:
            raise ConfigError(f"perturbation needs {nx} entries, got {len(pert)}")
        object.__setattr__(self, "perturbation", pert)
        if self.controller == "ss2t-mpc" and len(self.mpc.r) > 1:
            object.__setattr__(self, "mpc", replace(self.mpc, r=self.mpc.r[:1]))
        if self.controller != "ss2t-mpc" and len(self.mpc.r) != self.vehicle.n_controls:
            raise ConfigError(f"mpc.r needs {self.vehicle.n_controls} entries")

    @property
    def direction(self) -> int:
        return 1 if self.v0 > 0 else -1

    @property
    def plant_config(self) -> VehicleConfig:
        if self.controller == "ss2t-mpc":
            return self.vehicle.without_trailer_steering()
        return self.vehicle

    def with_controller(self, kind: str) -> "Scenario":
        r = self.mpc.r
        if kind != "ss2t-mpc" and len(r) != self.vehicle.n_controls:
            r = r + (3.0,) * (self.vehicle.n_controls - len(r))
        return replace(self, controller=kind, mpc=replace(self.mpc, r=r))


def build_path(scenario: Scenario):
    """Nominal path for ``scenario`` expressed for the plant's control set."""
    spec = scenario.path
    cfg = scenario.vehicle
    if spec.kind == "straight":
        length = spec.length
        if length is None:
            horizon = scenario.mpc.horizon * scenario.mpc.delta_s
            length = scenario.start_s + 1.5 * abs(scenario.v0) * scenario.duration + horizon + 10.0
        path = build_straight(cfg, length, scenario.direction, scenario.mpc.delta_s)
    elif spec.kind == "figure-eight":
        path = build_figure_eight(cfg, spec.kappa_hat, scenario.direction, scenario.mpc.delta_s)
    else:
        path = read_path_csv(spec.file, cfg)
        if path.direction != scenario.direction:
            raise ConfigError("sign(v0) must match the direction stored in the path file")
    if scenario.plant_config is not cfg:
        path = path.restrict_to(scenario.plant_config)
    return path


def _parse_section(cp, name):
    out = {}
    if not cp.has_section(name):
        return out
    for key, raw in cp.items(name):
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw.strip()
    return out


def _tuples(d):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def load_scenario(filename) -> tuple:
    """Parse a scenario file; returns ``(Scenario, SweepSpec or None)``.

    Raises
    ------
    ConfigError
        For unreadable files, unknown sections or keys, and invalid values.
    """
    filename = Path(filename)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(filename) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read {filename}: {exc}") from exc
    allowed = {"vehicle", "path", "mpc", "scenario", "sweep"}
    extra = set(cp.sections()) - allowed
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")
    try:
        vehicle = VehicleConfig.from_dict(_tuples(_parse_section(cp, "vehicle"))) \
            if cp.has_section("vehicle") else ms2t_config()
        pdata = _parse_section(cp, "path")
        if "file" in pdata and not Path(pdata["file"]).is_absolute():
            pdata["file"] = str(filename.parent / pdata["file"])
        path = _build(PathSpec, pdata, "path")
        mpc = MpcConfig.from_dict(_tuples(_parse_section(cp, "mpc")))
        sdata = _tuples(_parse_section(cp, "scenario"))
        scen = _build(Scenario, dict(sdata, vehicle=vehicle, path=path, mpc=mpc), "scenario")
        sweep = _build(SweepSpec, _tuples(_parse_section(cp, "sweep")), "sweep") \
            if cp.has_section("sweep") else None
    except ConfigError:
        raise
    except (TypeError, ValueError, TrailerMpcError) as exc:
        raise ConfigError(str(exc)) from exc
    return scen, sweep


def _build(cls, data, section):
    known = set(cls.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc
