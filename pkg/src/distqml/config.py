"""Numerical tolerances and error types shared across the package."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    norm: float = 1e-12
    unitary_check: float = 1e-8
    unitary_strict: float = 1e-10
    hermitian: float = 1e-10
    involution: float = 1e-10
    imag_residue: float = 1e-10
    unit_input: float = 1e-9
    frequency_merge: float = 1e-9
    coefficient_zero: float = 1e-12
    svd_relative: float = 1e-8


TOL = Tolerances()

# Largest register the dense backend will allocate.
MAX_QUBITS = 20


class DistQMLError(Exception):
    """Base class for errors raised by this package."""


class StructuralError(DistQMLError, ValueError):
    """Shapes, qubit indices or parameter counts do not line up."""


class ValidationError(DistQMLError, ValueError):
    """An input violates a numerical precondition (unitarity, norm, ...)."""


class UnsupportedSlotError(DistQMLError, TypeError):
    """A trainable slot is not a Pauli rotation."""


class PoolExhaustedError(DistQMLError, RuntimeError):
    """A pre-built pool of state copies ran out."""


class CapacityError(DistQMLError, RuntimeError):
    """A brute-force enumeration would exceed its configured budget."""
