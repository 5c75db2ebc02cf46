"""Closed-loop simulation harness: scenarios, episodes, metrics and sweeps."""
from .config import PathSpec, Scenario, SweepSpec, build_path, load_scenario
from .simulate import EpisodeLog, compute_metrics, initial_state, make_controller, run_episode, write_metrics
from .sweep import SweepResult, convex_hull, grid_nodes, hull_area, run_sweep, sweep_scenario

__all__ = [
    "PathSpec", "Scenario", "SweepSpec", "build_path", "load_scenario",
    "EpisodeLog", "compute_metrics", "initial_state", "make_controller", "run_episode",
    "write_metrics", "SweepResult", "run_sweep", "sweep_scenario", "grid_nodes", "convex_hull",
    "hull_area",
]
