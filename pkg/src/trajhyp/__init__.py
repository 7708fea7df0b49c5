"""Behavior-hypothesis generation for a sparsely observed agent on a grid.

The engine grows a tree of candidate futures from a generator, enriches the
feasible ones with counterfactual perturbations, filters everything through
a world model and feeds rejections back to the generator. A brute-force
oracle enumerates the ground-truth set so coverage can be measured exactly.
"""

from .core import AgentState, Observation, RunConfig, Trajectory, TrajectoryTree
from .errors import (CapacityExceeded, EmptyGroundTruth, ExternalGeneratorFailure, ParseError,
                     ValidationError)
from .generators import ExternalGenerator, ScriptedGenerator, ScriptedWeights
from .oracle_eval import CoverageReport, coverage, enumerate_gamma_star
from .runner import run_method, run_windows
from .scenarios import Scenario, bundled, load_scenario, resolve
from .world_model import EnvMap, is_feasible, load_map, parse_map, successors

__all__ = [
    "AgentState", "Observation", "RunConfig", "Trajectory", "TrajectoryTree",
    "CapacityExceeded", "EmptyGroundTruth", "ExternalGeneratorFailure", "ParseError",
    "ValidationError", "ExternalGenerator", "ScriptedGenerator", "ScriptedWeights",
    "CoverageReport", "coverage", "enumerate_gamma_star", "run_method", "run_windows",
    "Scenario", "bundled", "load_scenario", "resolve", "EnvMap", "is_feasible", "load_map",
    "parse_map", "successors",
]
