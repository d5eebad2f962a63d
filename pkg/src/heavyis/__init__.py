"""Importance sampling for rare events driven by several heavy-tailed jumps."""

from .estimator_core import EstimationReport, MixtureConfig, estimate
from .heavy_tails import TailDistribution

__version__ = "0.1.0"

__all__ = ["EstimationReport", "MixtureConfig", "TailDistribution", "estimate"]
