"""Simulator for two-party distributed quantum machine-learning protocols."""

from .config import (
    TOL,
    CapacityError,
    DistQMLError,
    PoolExhaustedError,
    StructuralError,
    UnsupportedSlotError,
    ValidationError,
)
from .statevec import PauliString, StateVector, apply, expectation, sample_pm

__version__ = "0.1.0"
