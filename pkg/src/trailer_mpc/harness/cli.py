"""Command line entry point: ``trailer-mpc <command> [options]``.

Commands
--------
simulate   one closed-loop episode -> ``episode.csv`` and ``metrics.json``
sweep      joint-angle grid -> ``roa_<controller>.csv`` per controller
path       export the scenario's nominal path -> ``path.csv``
linearize  print ``A, B, F, G`` of the error model at arc length ``--s``
bench      per-step MPC solve-time statistics

Exit codes: 0 on success, 2 for configuration errors, 3 for runtime failures.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..error_model import discretize, linearize_sample
from ..errors import ConfigError, TrailerMpcError
from ..path import write_path_csv
from ..vehicle import integrate_step
from .config import CONTROLLER_KINDS, Scenario, SweepSpec, build_path, load_scenario
from .simulate import (PLANT_SUBSTEPS, compute_metrics, initial_state, make_controller, run_episode,
                       write_metrics)
from .sweep import controller_slug, run_sweep, summarize

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trailer-mpc", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="scenario file (defaults apply when omitted)")
        sp.add_argument("--controller", choices=CONTROLLER_KINDS, help="override the controller kind")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        if out:
            sp.add_argument("--out", default=".", help="output directory")

    common(sub.add_parser("simulate", help="run one episode"))
    sp = sub.add_parser("sweep", help="region-of-attraction sweep")
    common(sp)
    sp.add_argument("--parallel", type=int, default=1, help="worker processes")
    sp.add_argument("--cells", type=int, help="override grid cells per axis")
    common(sub.add_parser("path", help="export the nominal path"))
    sp = sub.add_parser("linearize", help="print linearized error model matrices")
    common(sp, out=False)
    sp.add_argument("--s", type=float, default=0.0, help="arc length of the sample [m]")
    sp = sub.add_parser("bench", help="MPC solve-time statistics")
    common(sp, out=False)
    sp.add_argument("--steps", type=int, default=100, help="closed-loop steps to time")
    return p


def _scenario(args) -> tuple:
    if args.config:
        scen, sweep = load_scenario(args.config)
    else:
        scen, sweep = Scenario(), None
    if args.controller:
        scen = scen.with_controller(args.controller)
    if args.seed is not None:
        scen = replace(scen, seed=args.seed)
    return scen, sweep


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    scen, _ = _scenario(args)
    out = _outdir(args)
    log = run_episode(scen)
    log.write_csv(out / "episode.csv")
    metrics = dict(compute_metrics(log), seed=scen.seed)
    write_metrics(metrics, out / "metrics.json")
    print(f"{scen.controller}: {log.status} after {len(log)} steps "
          f"(max |z|={metrics[f'max_z{scen.vehicle.n_trailers}']:.3f} m)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scen, spec = _scenario(args)
    spec = spec or SweepSpec()
    if args.controller:
        spec = replace(spec, controllers=(args.controller,))
    if args.cells:
        spec = replace(spec, cells=args.cells)
    out = _outdir(args)
    res = run_sweep(scen, spec, parallel=max(1, args.parallel))
    for kind in spec.controllers:
        res.write_csv(kind, out / f"roa_{controller_slug(kind)}.csv")
    summary = summarize(res)
    with open(out / "roa_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for kind, s in summary.items():
        print(f"{kind}: {s['converged']}/{s['cells']} cells converged")
    return EXIT_OK


def cmd_path(args) -> int:
    scen, _ = _scenario(args)
    out = _outdir(args)
    path = build_path(scen)
    write_path_csv(path, out / "path.csv")
    print(f"{len(path)} samples, s_max = {path.s_max:.2f} m, direction {path.direction:+d}")
    return EXIT_OK


def cmd_linearize(args) -> int:
    scen, _ = _scenario(args)
    path = build_path(scen)
    sample = path.sample_at(args.s)
    A, B = linearize_sample(scen.plant_config, sample)
    F, G = discretize(A, B, scen.mpc.delta_s, path.direction)
    with np.printoptions(precision=6, suppress=True, linewidth=120):
        for name, mat in (("A", A), ("B", B), ("F", F), ("G", G)):
            print(f"{name} =\n{mat}")
    return EXIT_OK


def cmd_bench(args) -> int:
    scen, _ = _scenario(args)
    if scen.controller == "lq":
        raise ConfigError("bench times the MPC controllers")
    path = build_path(scen)
    ctrl = make_controller(scen)
    ctrl.reset()
    x = initial_state(scen, path)
    times, iters = [], []
    s_hint = scen.start_s
    dt = 1.0 / scen.mpc.frequency
    for _ in range(args.steps):
        t0 = time.perf_counter()
        res = ctrl.step(x, path, scen.v0, s_hint=s_hint)
        times.append(time.perf_counter() - t0)
        iters.append(res.qp_iterations)
        s_hint = None
        x = integrate_step(scen.plant_config, x, res.control, scen.v0, dt, PLANT_SUBSTEPS)
    t = np.array(times) * 1e3
    print(f"{scen.controller}: {len(t)} steps, mean {t.mean():.2f} ms, median {np.median(t):.2f} ms, "
          f"p95 {np.percentile(t, 95):.2f} ms, max {t.max():.2f} ms, "
          f"mean ADMM iterations {np.mean(iters):.1f}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "path": cmd_path,
            "linearize": cmd_linearize, "bench": cmd_bench}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrailerMpcError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
