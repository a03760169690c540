"""Federated spectrum sensing simulator for UAV swarms."""

__version__ = "0.1.0"

from .config import SimulationConfig, desk_scale, parse_config
from .federated import (
    BaselineResult,
    ClientUpdate,
    RoundResult,
    baseline_independent,
    fed_avg,
    fed_snr,
    run_experiment,
    run_round,
)
from .harness import SweepResult, export_csv, headline_accuracy, sweep
from .neuralnet import Hyperparams, ModelWeights, TrainReport

__all__ = [
    "BaselineResult",
    "ClientUpdate",
    "Hyperparams",
    "ModelWeights",
    "RoundResult",
    "SimulationConfig",
    "SweepResult",
    "TrainReport",
    "baseline_independent",
    "desk_scale",
    "export_csv",
    "fed_avg",
    "fed_snr",
    "headline_accuracy",
    "parse_config",
    "run_experiment",
    "run_round",
    "sweep",
]
