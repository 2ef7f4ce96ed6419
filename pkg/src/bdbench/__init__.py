"""Brownian dynamics integrators and a weak-convergence benchmark harness."""

__version__ = "0.1.0"

from .backend import BACKEND
from .integrators import RunSpec, Scheme, StepperState, run_trajectory
from .model import (
    Configuration,
    Cosine,
    LennardJonesBox,
    PeriodicBox,
    PeriodicInterval,
    Quadratic,
    Unbounded,
    energy,
    force,
    minimum_image,
    wrap,
)
from .noise import NoiseStream

__all__ = [
    "BACKEND",
    "Configuration",
    "Cosine",
    "LennardJonesBox",
    "NoiseStream",
    "PeriodicBox",
    "PeriodicInterval",
    "Quadratic",
    "RunSpec",
    "Scheme",
    "StepperState",
    "Unbounded",
    "energy",
    "force",
    "minimum_image",
    "run_trajectory",
    "wrap",
    "__version__",
]
