"""Experiment configuration, orchestration and the command line interface."""
from .config import PRESETS, ConfigError, ExperimentConfig, load_config, parse_config, preset_config
from .experiment import ExperimentError, figure1_curves, figure2_curves, run_experiment

__all__ = [
    "PRESETS",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentError",
    "figure1_curves",
    "figure2_curves",
    "load_config",
    "parse_config",
    "preset_config",
    "run_experiment",
]
