"""Scenario configs, Monte-Carlo runner, benchmarks, reports and the CLI."""

from .config import ScenarioConfig, load_scenario, parse_scenario
from .runner import SCHEMES, run_experiment, simulate_all, simulate_run

__all__ = ["ScenarioConfig", "load_scenario", "parse_scenario", "SCHEMES", "run_experiment", "simulate_all",
           "simulate_run"]
