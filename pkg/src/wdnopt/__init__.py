"""Pressure-control and flushing valve placement and scheduling for water distribution networks."""

__version__ = "0.1.0"

from .control import ControlSolution, Objective, SCPOptions, ValveConfig, enumerate_directions, solve_vc_nlp
from .errors import (
    ConvergenceError,
    InfeasibleError,
    InputError,
    ParseError,
    SolverError,
    ValidationError,
    WdnoptError,
)
from .hydraulics import ControlSettings, HydraulicState, solve_eps, solve_timestep
from .inp import parse_network, read_network
from .kernels import BACKEND
from .network import NetworkModel, Scenario, build_scenario
from .objectives import evaluate
from .placement import PlacementOptions, PlacementSolution, solve_vp_minlp

__all__ = [
    "BACKEND", "ControlSettings", "ControlSolution", "ConvergenceError", "HydraulicState", "InfeasibleError",
    "InputError", "NetworkModel", "Objective", "ParseError", "PlacementOptions", "PlacementSolution",
    "SCPOptions", "Scenario", "SolverError", "ValidationError", "ValveConfig", "WdnoptError", "build_scenario",
    "enumerate_directions", "evaluate", "parse_network", "read_network", "solve_eps", "solve_timestep",
    "solve_vc_nlp", "solve_vp_minlp",
]
