"""Cucker-Smale flocking under randomly switching directed topologies."""

from .certify import FlockingCertificate, TheoremParameters, certify, check_conditions
from .dynamics import CommunicationWeight, EnsembleState, integrate, integrate_transitions
from .graph import Digraph, GraphLibrary, has_spanning_tree, validate_library
from .harness import ExperimentConfig, MonteCarloReport, RunSummary, monte_carlo, run_once
from .kernels import BACKEND
from .matrix_analysis import ergodicity_coefficient, is_scrambling, is_stochastic
from .switching import IncrementDistribution, SwitchingSchedule, block_indices, sample_schedule

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CommunicationWeight",
    "Digraph",
    "EnsembleState",
    "ExperimentConfig",
    "FlockingCertificate",
    "GraphLibrary",
    "IncrementDistribution",
    "MonteCarloReport",
    "RunSummary",
    "SwitchingSchedule",
    "TheoremParameters",
    "block_indices",
    "certify",
    "check_conditions",
    "ergodicity_coefficient",
    "has_spanning_tree",
    "integrate",
    "integrate_transitions",
    "is_scrambling",
    "is_stochastic",
    "monte_carlo",
    "run_once",
    "sample_schedule",
    "validate_library",
]
