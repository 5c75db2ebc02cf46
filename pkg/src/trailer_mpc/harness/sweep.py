"""Region-of-attraction sweeps over initial joint-angle errors."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .config import Scenario, SweepSpec, build_path
from .simulate import compute_metrics, run_episode

SWEEP_CSV_HEADER = ("beta1_i", "beta2_i", "status", "max_z2", "max_th2", "t_conv")


@dataclass
class SweepResult:
    """Per-controller outcome maps on a ``beta1 x beta2`` grid.

    ``status[kind]`` has shape ``(len(beta2), len(beta1))``; row ``i`` holds
    ``beta2[i]``. ``hulls[kind]`` is the convex hull (counter-clockwise
    vertices) of all last-trailer positions visited from converged cells.
    """

    beta1: np.ndarray
    beta2: np.ndarray
    status: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    hulls: dict = field(default_factory=dict)

    def converged(self, kind: str) -> np.ndarray:
        return self.status[kind] == "converged"

    def inclusion_exceptions(self, outer: str, inner: str) -> int:
        """Number of cells converged for ``inner`` but not for ``outer``."""
        return int(np.sum(self.converged(inner) & ~self.converged(outer)))

    def cell_index(self, beta1: float, beta2: float) -> tuple:
        return int(np.argmin(np.abs(self.beta2 - beta2))), int(np.argmin(np.abs(self.beta1 - beta1)))

    def cell_edges(self, axis: str) -> np.ndarray:
        """Edges of the disjoint cells around the grid nodes along ``axis``."""
        v = self.beta1 if axis == "beta1" else self.beta2
        if v.size == 1:
            return np.array([v[0], v[0]])
        mid = 0.5 * (v[1:] + v[:-1])
        return np.concatenate(([v[0]], mid, [v[-1]]))

    def write_csv(self, kind: str, filename) -> None:
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_CSV_HEADER)
            for i, b2 in enumerate(self.beta2):
                for j, b1 in enumerate(self.beta1):
                    m = self.metrics[kind][i][j]
                    w.writerow([repr(float(b1)), repr(float(b2)), self.status[kind][i, j],
                                repr(m["max_z2"]), repr(m["max_th2"]), repr(m["t_conv"])])


def grid_nodes(spec: SweepSpec) -> tuple:
    n = int(spec.cells)
    return (np.linspace(*spec.beta1_range, n), np.linspace(*spec.beta2_range, n))


def sweep_scenario(base: Scenario, kind: str, spec: SweepSpec) -> Scenario:
    """Scenario used for every cell: joint-angle constraints removed, stop on convergence."""
    sc = base.with_controller(kind)
    return replace(sc, mpc=replace(sc.mpc, soft_joint_constraints=False), duration=spec.duration,
                   stop_on_convergence=True, bound_jackknife=False)


def _run_cell(args):
    scenario, b1, b2 = args
    z, th = scenario.perturbation[:2]
    sc = replace(scenario, perturbation=(z, th, b2, b1))
    path = _PATH_CACHE.get(_path_key(sc))
    log = run_episode(sc, path=path if path is not None else build_path(sc))
    return log.status, compute_metrics(log), log.positions


_PATH_CACHE = {}


def _path_key(sc: Scenario):
    return (sc.controller == "ss2t-mpc", sc.path, sc.v0, sc.duration, sc.start_s, sc.mpc.horizon,
            sc.mpc.delta_s)


def run_sweep(base: Scenario, spec: SweepSpec, parallel: int = 1, progress=None) -> SweepResult:
    """Run every controller of ``spec`` on every grid cell.

    Cells are independent; with ``parallel > 1`` they are distributed over a
    process pool and merged in grid order, so the result does not depend on
    the degree of parallelism.
    """
    if base.vehicle.n_trailers != 2:
        raise ValueError("joint-angle sweeps are defined for the two-trailer layout")
    b1s, b2s = grid_nodes(spec)
    result = SweepResult(beta1=b1s, beta2=b2s)
    for kind in spec.controllers:
        sc = sweep_scenario(base, kind, spec)
        _PATH_CACHE[_path_key(sc)] = build_path(sc)
        jobs = [(sc, float(b1), float(b2)) for b2 in b2s for b1 in b1s]
        if parallel > 1:
            with ProcessPoolExecutor(max_workers=parallel) as pool:
                outs = list(pool.map(_run_cell, jobs, chunksize=max(1, len(jobs) // (8 * parallel))))
        else:
            outs = []
            for k, job in enumerate(jobs):
                outs.append(_run_cell(job))
                if progress is not None:
                    progress(kind, k + 1, len(jobs))
        n1 = b1s.size
        status = np.array([o[0] for o in outs], dtype=object).reshape(b2s.size, n1)
        result.status[kind] = status
        result.metrics[kind] = [[outs[i * n1 + j][1] for j in range(n1)] for i in range(b2s.size)]
        pts = [o[2] for o in outs if o[0] == "converged"]
        result.hulls[kind] = convex_hull(np.vstack(pts)) if pts else np.zeros((0, 2))
    return result


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices of a 2-D point cloud."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        return pts.copy()
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return pts[[np.argmin(pts[:, 0]), np.argmax(pts[:, 0])]]
    return pts[hull.vertices]


def hull_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def controller_slug(kind: str) -> str:
    return kind.replace("-", "_")


def summarize(result: SweepResult) -> dict:
    out = {}
    for kind, st in result.status.items():
        out[kind] = {"converged": int(np.sum(st == "converged")), "cells": int(st.size),
                     "hull_area": hull_area(result.hulls.get(kind, ())) if kind in result.hulls else math.nan}
    return out
