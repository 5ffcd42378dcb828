"""Simulation and analysis layer for dynbinval."""

from __future__ import annotations

from .bitpop import BitString, Population  # noqa: F401
from .drift import DriftEstimate, EstimationError, StateSpec  # noqa: F401
from .ea import EaParams, RunResult  # noqa: F401
from .seeding import SeedStream  # noqa: F401

__all__ = [
    "BitString",
    "DriftEstimate",
    "EaParams",
    "EstimationError",
    "Population",
    "RunResult",
    "SeedStream",
    "StateSpec",
]
