"""Age-of-information scheduling for generate-at-will sources.

Analysis of cyclic transmission patterns, frequency optimization, pattern
synthesis (SPMS/SAMS), reference schedulers and a Monte Carlo simulator.
"""
from .analysis import Pattern, PatternReport, evaluate_pattern
from .baselines import (IsConfig, TransmissionProbabilities, insertion_search, pgaw_report,
                        pgaw_star, round_robin)
from .errors import InfeasiblePatternError, InternalInvariantError, ValidationError
from .model import ServiceDistribution, SourceSpec, SystemSpec, validate_system
from .optimize import aoi_frequencies, paoi_frequencies
from .simulator import SimConfig, agreement, simulate
from .synthesis import SAMS_1, SAMS_2, SAMS_3, SamsConfig, quantize_frequencies, sams, spread_pattern, spms

__version__ = "0.1.0"

__all__ = [
    "Pattern", "PatternReport", "evaluate_pattern",
    "IsConfig", "TransmissionProbabilities", "insertion_search", "pgaw_report", "pgaw_star", "round_robin",
    "InfeasiblePatternError", "InternalInvariantError", "ValidationError",
    "ServiceDistribution", "SourceSpec", "SystemSpec", "validate_system",
    "aoi_frequencies", "paoi_frequencies",
    "SimConfig", "agreement", "simulate",
    "SAMS_1", "SAMS_2", "SAMS_3", "SamsConfig", "quantize_frequencies", "sams", "spread_pattern", "spms",
]
