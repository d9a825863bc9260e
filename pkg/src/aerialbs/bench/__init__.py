"""Experiment harness: scenarios, static baselines, sweeps, plots and the CLI."""

from .baselines import static_fdma_baseline, static_tdma_baseline
from .experiments import ExperimentConfig, ExperimentResult, Technique, run_experiments
from .metrics import MetricsRow
from .scenarios import ScenarioConfig, generate_scenario, load_scenario, save_scenario

__all__ = ["ExperimentConfig", "ExperimentResult", "MetricsRow", "ScenarioConfig", "Technique",
           "generate_scenario", "load_scenario", "run_experiments", "save_scenario",
           "static_fdma_baseline", "static_tdma_baseline"]
