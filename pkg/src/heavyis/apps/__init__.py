"""Ruin, barrier and fluid-network applications of the mixture estimator."""

from . import barrier, fluid, ruin

__all__ = ["barrier", "fluid", "ruin"]
