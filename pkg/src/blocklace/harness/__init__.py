"""Scenario-driven simulation harness: scripted agents and adversaries over
the simulated network, with trace-based safety/liveness/privacy oracles."""

from .runner import RunResult, run_scenario
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario

__all__ = [
    "RunResult",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
]
