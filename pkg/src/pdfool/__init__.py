"""Partial-dependence explanations and adversarial models that manipulate them.

The package builds PD / ICE / PFI explanations for tabular predictors and
the composite model a(x) that keeps predictions on real-looking rows while
reshaping the PD curves of chosen features.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .attack import AdversarialModel, CompensationTable, ExtrapolationClassifier, TargetPd
from .data import Dataset, FeatureSchema, SimulationConfig, load_csv, simulate_correlated_gaussian
from .errors import ConfigError, DataError, NumericError, PdFoolError
from .explain import GridSpec, PdCurve, compute_ice, compute_pd, compute_pfi
from .learner import MlpConfig, TrainedMlp, train_mlp
from .metrics import accuracy_of_attack, threshold_sweep, true_positive_rate
from .pipeline import StudyConfig, TargetSpec
from .study import run_study

__all__ = [
    "AdversarialModel",
    "CompensationTable",
    "ConfigError",
    "DataError",
    "Dataset",
    "ExtrapolationClassifier",
    "FeatureSchema",
    "GridSpec",
    "MlpConfig",
    "NumericError",
    "PdCurve",
    "PdFoolError",
    "SimulationConfig",
    "StudyConfig",
    "TargetPd",
    "TargetSpec",
    "TrainedMlp",
    "accuracy_of_attack",
    "compute_ice",
    "compute_pd",
    "compute_pfi",
    "load_csv",
    "run_study",
    "simulate_correlated_gaussian",
    "threshold_sweep",
    "train_mlp",
    "true_positive_rate",
]
