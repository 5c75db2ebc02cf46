"""Path-following MPC for tractors with multiple (optionally steered) trailers.

Subpackages and modules:

- ``vehicle``: kinematic model of the tractor and trailer chain.
- ``path``: nominal paths, projection and path files.
- ``error_model``: Frenet-frame error dynamics and their linearization.
- ``numcore``: QP solvers, Riccati equation, LQ feedback.
- ``controller``: condensed MPC and the LQ baseline.
- ``harness``: closed-loop episodes, sweeps and the command line.
"""
from .errors import (ConfigError, ConvergenceError, DegenerateConfigurationError, DimensionError,
                     FrenetDomainError, HorizonExceedsPathError, InfeasiblePathError, OutOfRangeError,
                     ProjectionInvalidError, SingularSteeringError, TrailerMpcError)
from .vehicle import ControlInput, VehicleConfig, VehicleState, ms2t_config

__version__ = "0.1.0"

__all__ = [
    "VehicleConfig", "VehicleState", "ControlInput", "ms2t_config",
    "TrailerMpcError", "ConfigError", "ConvergenceError", "DegenerateConfigurationError",
    "DimensionError", "FrenetDomainError", "HorizonExceedsPathError", "InfeasiblePathError",
    "OutOfRangeError", "ProjectionInvalidError", "SingularSteeringError",
]
