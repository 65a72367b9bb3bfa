"""Config-driven experiment runs, sweeps and plot data."""
from .config import ExperimentConfig, config_from_dict, load_config
from .plots import emit_plot_data
from .runner import run
from .sweeps import GAMMA_COARSE, GAMMA_FINE, RATIO_GRID, sweep_gamma, sweep_step1, sweep_step2

__all__ = [
    "ExperimentConfig", "config_from_dict", "load_config", "emit_plot_data", "run",
    "GAMMA_COARSE", "GAMMA_FINE", "RATIO_GRID", "sweep_gamma", "sweep_step1", "sweep_step2",
]
