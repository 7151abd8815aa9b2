"""Simulation lab and analytic bounds for noise-robust verifiable blind
delegated quantum computation on interleaved test and computation rounds."""

from .pattern import (Graph, Coloring, MeasurementPattern, builtin_pattern,
                      greedy_coloring, validate_coloring, derive_dependencies)
from .rounds import ProtocolParams, Verdict, run_protocol, verify_and_vote
from .threat import Adversary, AttackScript, EmAttack, NoiseModel
from .harness import ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "Graph", "Coloring", "MeasurementPattern", "builtin_pattern",
    "greedy_coloring", "validate_coloring", "derive_dependencies",
    "ProtocolParams", "Verdict", "run_protocol", "verify_and_vote",
    "Adversary", "AttackScript", "EmAttack", "NoiseModel",
    "ExperimentConfig", "run_experiment",
    "__version__",
]
