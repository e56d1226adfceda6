"""Multi-channel operation simulator for ITS-G5 style vehicular networks."""

from .engine import World, build_scenario, run, simulate
from .metrics import Metrics, prr_range
from .scenario import AppSpec, RoadConfig, Scenario, ScenarioError, StationTemplate, r1_template

__version__ = "0.1.0"

__all__ = [
    "AppSpec", "Metrics", "RoadConfig", "Scenario", "ScenarioError", "StationTemplate", "World",
    "build_scenario", "prr_range", "r1_template", "run", "simulate",
]
