"""Dense statevector simulation.

Basis convention: qubit 0 is the most significant bit of the basis index, so
for ``n`` qubits the label ``|q0 q1 ... q_{n-1}>`` is the integer
``sum_q q_bit * 2**(n-1-q)``. Every module in the package uses this order.

Unitaries are described by small immutable records (``PauliRotation``,
``DenseMatrix``, ``DiagonalPhase``, ``Permutation``, ``AncillaControlled``,
``Product`` and plain ``PauliString``) and realized lazily by :func:`apply`,
so trainable angles and data-dependent phases are bound at call time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .config import MAX_QUBITS, TOL, StructuralError, ValidationError

_PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def make_rng(seed=None) -> np.random.Generator:
    """Seeded generator; accepts an int, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def split_rng(rng: np.random.Generator, n: int) -> list:
    """Independent child streams derived from ``rng``."""
    return [np.random.default_rng(s) for s in rng.bit_generator.seed_seq.spawn(n)]


# --------------------------------------------------------------------------
# States


@dataclass(frozen=True, eq=False)
class StateVector:
    n_qubits: int
    amps: np.ndarray

    def __post_init__(self):
        if not 0 <= self.n_qubits <= MAX_QUBITS:
            raise StructuralError(f"n_qubits={self.n_qubits} outside [0, {MAX_QUBITS}]")
        amps = np.asarray(self.amps, dtype=complex)
        if amps.shape != (2**self.n_qubits,):
            raise StructuralError(
                f"expected {2**self.n_qubits} amplitudes, got shape {amps.shape}"
            )
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def from_amplitudes(cls, amps, normalize: bool = False) -> "StateVector":
        amps = np.asarray(amps, dtype=complex).ravel()
        n = int(round(np.log2(amps.size))) if amps.size else -1
        if n < 0 or 2**n != amps.size:
            raise StructuralError(f"length {amps.size} is not a power of two")
        norm = np.linalg.norm(amps)
        if normalize:
            if norm == 0:
                raise ValidationError("cannot normalize the zero vector")
            amps = amps / norm
        elif abs(norm - 1.0) > TOL.unit_input:
            raise ValidationError(f"amplitudes have norm {norm!r}, expected 1")
        return cls(n, amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int = 0) -> "StateVector":
        if not 0 <= index < 2**n_qubits:
            raise StructuralError(f"basis index {index} out of range for {n_qubits} qubits")
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def random(cls, n_qubits: int, rng) -> "StateVector":
        rng = make_rng(rng)
        v = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
        return cls(n_qubits, v / np.linalg.norm(v))

    @property
    def dim(self) -> int:
        return self.amps.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def inner(self, other: "StateVector") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amps, other.amps))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.inner(other)) ** 2

    def tensor(self, other: "StateVector") -> "StateVector":
        """|self> (x) |other>, with ``self`` on the leading qubits."""
        return StateVector(self.n_qubits + other.n_qubits, np.kron(self.amps, other.amps))

    def reduced_density_matrix(self, keep: Sequence[int]) -> np.ndarray:
        keep = list(keep)
        t = self.amps.reshape((2,) * self.n_qubits)
        rest = [q for q in range(self.n_qubits) if q not in keep]
        t = np.transpose(t, keep + rest).reshape(2 ** len(keep), -1)
        return t @ t.conj().T


# --------------------------------------------------------------------------
# Pauli strings


@lru_cache(maxsize=512)
def _pauli_action(labels: str):
    """(flip mask, phase per source index) so that P|i> = phase[i] |i ^ mask>."""
    n = len(labels)
    idx = np.arange(2**n)
    flip = 0
    phase = np.ones(2**n, dtype=complex)
    for q, lab in enumerate(labels):
        bit = n - 1 - q
        b = (idx >> bit) & 1
        if lab == "X":
            flip |= 1 << bit
        elif lab == "Z":
            phase = phase * (1 - 2 * b)
        elif lab == "Y":
            flip |= 1 << bit
            phase = phase * 1j * (1 - 2 * b)
    phase.setflags(write=False)
    return flip, phase


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, e.g. ``PauliString("XIZ")``."""

    labels: str

    def __post_init__(self):
        labels = str(self.labels).upper()
        if not labels or any(c not in "IXYZ" for c in labels):
            raise StructuralError(f"invalid Pauli labels {self.labels!r}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def single(cls, n_qubits: int, qubit: int, label: str) -> "PauliString":
        if not 0 <= qubit < n_qubits:
            raise StructuralError(f"qubit {qubit} out of range for {n_qubits} qubits")
        labels = ["I"] * n_qubits
        labels[qubit] = label
        return cls("".join(labels))

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    def is_identity(self) -> bool:
        return set(self.labels) == {"I"}

    def act(self, amps: np.ndarray) -> np.ndarray:
        flip, phase = _pauli_action(self.labels)
        out = np.empty_like(amps, dtype=complex)
        out[np.arange(amps.size) ^ flip] = phase * amps
        return out

    def matrix(self) -> np.ndarray:
        m = np.array([[1.0 + 0j]])
        for lab in self.labels:
            m = np.kron(m, _PAULI_1Q[lab])
        return m


# --------------------------------------------------------------------------
# Unitary descriptions


@dataclass(frozen=True)
class PauliRotation:
    """exp(-i/2 * coeff * theta[slot] * P)."""

    pauli: PauliString
    coeff: float
    slot: int


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Explicit unitary on ``qubits`` (listed order = matrix index order)."""

    matrix: np.ndarray
    qubits: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        k = len(self.qubits)
        if m.shape != (2**k, 2**k):
            raise StructuralError(f"matrix shape {m.shape} does not match {k} qubits")
        if len(set(self.qubits)) != k:
            raise StructuralError(f"repeated qubits {self.qubits}")
        err = np.linalg.norm(m.conj().T @ m - np.eye(2**k))
        if err > TOL.unitary_check:
            raise ValidationError(f"matrix is not unitary (||U^dag U - I|| = {err:.3e})")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))


@dataclass(frozen=True, eq=False)
class DiagonalPhase:
    """diag(exp(i * angle_k)) with angle_k = phases_k + sign*2*pi*freqs_k*data[variables_k].

    ``qubits=None`` means the whole register. ``freqs``/``variables`` are
    optional; without them the phase is data independent.
    """

    phases: np.ndarray
    qubits: tuple | None = None
    freqs: np.ndarray | None = None
    variables: np.ndarray | None = None
    sign: float = -1.0

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float).ravel()
        object.__setattr__(self, "phases", phases)
        if self.qubits is not None:
            object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
            if phases.size != 2 ** len(self.qubits):
                raise StructuralError("phase list length does not match qubit count")
        if self.freqs is not None:
            freqs = np.asarray(self.freqs, dtype=float).ravel()
            if freqs.shape != phases.shape:
                raise StructuralError("freqs and phases must have equal length")
            variables = (
                np.zeros(freqs.size, dtype=int)
                if self.variables is None
                else np.asarray(self.variables, dtype=int).ravel()
            )
            if variables.shape != freqs.shape:
                raise StructuralError("variables and freqs must have equal length")
            object.__setattr__(self, "freqs", freqs)
            object.__setattr__(self, "variables", variables)

    def angles(self, data=None) -> np.ndarray:
        if self.freqs is None:
            return self.phases
        if data is None:
            raise StructuralError("data-dependent phase applied without data")
        x = np.atleast_1d(np.asarray(data, dtype=float))
        if self.variables.max(initial=0) >= x.size:
            raise StructuralError("data has too few components for this phase")
        return self.phases + self.sign * 2 * np.pi * self.freqs * x[self.variables]


@dataclass(frozen=True, eq=False)
class Permutation:
    """U|i> = |perm[i]> on ``qubits`` (None = whole register)."""

    perm: np.ndarray
    qubits: tuple | None = None

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=int).ravel()
        if sorted(perm.tolist()) != list(range(perm.size)):
            raise ValidationError("index map is not a bijection")
        if self.qubits is not None:
            object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
            if perm.size != 2 ** len(self.qubits):
                raise StructuralError("permutation size does not match qubit count")
        object.__setattr__(self, "perm", perm)


@dataclass(frozen=True)
class AncillaControlled:
    """Apply ``inner`` on the branch where ``control`` equals ``value``.

    Qubit indices inside ``inner`` refer to the register with the control
    qubit removed.
    """

    inner: object
    control: int = 0
    value: int = 1


@dataclass(frozen=True)
class Product:
    """Sequence of unitaries; ``ops[0]`` acts first."""

    ops: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))


UnitarySpec = Union[
    PauliString, PauliRotation, DenseMatrix, DiagonalPhase, Permutation, AncillaControlled, Product
]

IDENTITY = Product(())


def _apply_on_qubits(amps, n, matrix, qubits):
    k = len(qubits)
    if any(not 0 <= q < n for q in qubits):
        raise StructuralError(f"qubits {qubits} out of range for {n} qubits")
    t = amps.reshape((2,) * n)
    m = matrix.reshape((2,) * (2 * k))
    t = np.tensordot(m, t, axes=(list(range(k, 2 * k)), list(qubits)))
    t = np.moveaxis(t, list(range(k)), list(qubits))
    return np.ascontiguousarray(t).reshape(-1)


def _diag_on_qubits(amps, n, diag, qubits):
    if qubits is None or tuple(qubits) == tuple(range(n)):
        if diag.size != amps.size:
            raise StructuralError("diagonal length does not match register")
        return amps * diag
    if any(not 0 <= q < n for q in qubits):
        raise StructuralError(f"qubits {qubits} out of range for {n} qubits")
    k = len(qubits)
    d = diag.reshape((2,) * k).transpose(np.argsort(qubits))
    shape = [1] * n
    for q in qubits:
        shape[q] = 2
    return (amps.reshape((2,) * n) * d.reshape(shape)).reshape(-1)


def _apply_amps(amps, n, u, params, data):
    if isinstance(u, PauliString):
        if u.n_qubits != n:
            raise StructuralError(f"Pauli string on {u.n_qubits} qubits, register has {n}")
        return u.act(amps)
    if isinstance(u, PauliRotation):
        if u.pauli.n_qubits != n:
            raise StructuralError(f"rotation on {u.pauli.n_qubits} qubits, register has {n}")
        if params is None or not 0 <= u.slot < len(params):
            raise StructuralError(f"parameter slot {u.slot} not supplied")
        half = 0.5 * u.coeff * params[u.slot]
        return np.cos(half) * amps - 1j * np.sin(half) * u.pauli.act(amps)
    if isinstance(u, DenseMatrix):
        return _apply_on_qubits(amps, n, u.matrix, u.qubits)
    if isinstance(u, DiagonalPhase):
        return _diag_on_qubits(amps, n, np.exp(1j * u.angles(data)), u.qubits)
    if isinstance(u, Permutation):
        if u.qubits is None:
            if u.perm.size != amps.size:
                raise StructuralError("permutation size does not match register")
            out = np.empty_like(amps)
            out[u.perm] = amps
            return out
        m = np.zeros((u.perm.size, u.perm.size), dtype=complex)
        m[u.perm, np.arange(u.perm.size)] = 1.0
        return _apply_on_qubits(amps, n, m, u.qubits)
    if isinstance(u, AncillaControlled):
        if not 0 <= u.control < n:
            raise StructuralError(f"control qubit {u.control} out of range")
        t = amps.reshape((2,) * n).copy()
        index = [slice(None)] * n
        index[u.control] = u.value
        branch = t[tuple(index)].reshape(-1)
        t[tuple(index)] = _apply_amps(branch, n - 1, u.inner, params, data).reshape(
            (2,) * (n - 1)
        )
        return t.reshape(-1)
    if isinstance(u, Product):
        for op in u.ops:
            amps = _apply_amps(amps, n, op, params, data)
        return amps
    raise StructuralError(f"unknown unitary description {type(u).__name__}")


def apply(state: StateVector, u, params=None, data=None) -> StateVector:
    """Return U|state>, binding trainable angles from ``params`` and features from ``data``."""
    if params is not None:
        params = np.asarray(params, dtype=float)
    return StateVector(state.n_qubits, _apply_amps(state.amps, state.n_qubits, u, params, data))


def adjoint(u):
    """Description of U^dagger."""
    if isinstance(u, PauliString):
        return u
    if isinstance(u, PauliRotation):
        return PauliRotation(u.pauli, -u.coeff, u.slot)
    if isinstance(u, DenseMatrix):
        return DenseMatrix(u.matrix.conj().T, u.qubits)
    if isinstance(u, DiagonalPhase):
        return DiagonalPhase(-u.phases, u.qubits, u.freqs, u.variables, -u.sign)
    if isinstance(u, Permutation):
        return Permutation(np.argsort(u.perm), u.qubits)
    if isinstance(u, AncillaControlled):
        return AncillaControlled(adjoint(u.inner), u.control, u.value)
    if isinstance(u, Product):
        return Product(tuple(adjoint(op) for op in reversed(u.ops)))
    raise StructuralError(f"unknown unitary description {type(u).__name__}")


def to_matrix(u, n_qubits: int, params=None, data=None) -> np.ndarray:
    """Dense 2^n x 2^n matrix of ``u`` (columns are images of basis states)."""
    if params is not None:
        params = np.asarray(params, dtype=float)
    dim = 2**n_qubits
    cols = [_apply_amps(np.eye(dim, dtype=complex)[:, i], n_qubits, u, params, data) for i in range(dim)]
    return np.stack(cols, axis=1)


# --------------------------------------------------------------------------
# Observables and sampling


def _as_matrix(obs, n_qubits: int) -> np.ndarray:
    m = np.asarray(obs, dtype=complex)
    if m.shape != (2**n_qubits, 2**n_qubits):
        raise StructuralError(f"observable shape {m.shape} does not match {n_qubits} qubits")
    return m


def check_hermitian(m: np.ndarray, tol: float = TOL.hermitian) -> None:
    if np.max(np.abs(m - m.conj().T), initial=0.0) > tol:
        raise ValidationError("observable is not Hermitian")


def expectation(state: StateVector, obs) -> float:
    """<state|obs|state> for a PauliString or a dense Hermitian matrix."""
    if isinstance(obs, PauliString):
        if obs.n_qubits != state.n_qubits:
            raise StructuralError("observable and state sizes differ")
        val = np.vdot(state.amps, obs.act(state.amps))
    else:
        m = _as_matrix(obs, state.n_qubits)
        check_hermitian(m)
        val = np.vdot(state.amps, m @ state.amps)
    if abs(val.imag) > TOL.imag_residue:
        raise ValidationError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def _involution_expectation(state, obs) -> float:
    if not isinstance(obs, PauliString):
        m = _as_matrix(obs, state.n_qubits)
        if np.max(np.abs(m @ m - np.eye(m.shape[0])), initial=0.0) > TOL.involution:
            raise ValidationError("observable does not square to the identity")
    return expectation(state, obs)


def prob_plus(state: StateVector, obs) -> float:
    """Probability that measuring the involution ``obs`` returns +1."""
    return float(np.clip(0.5 * (1.0 + _involution_expectation(state, obs)), 0.0, 1.0))


def sample_pm(state: StateVector, obs, rng) -> int:
    """One projective measurement of an involution; returns -1 or +1."""
    p = prob_plus(state, obs)
    return 1 if make_rng(rng).random() < p else -1


def sample_pm_counts(state: StateVector, obs, rng, shots: int) -> int:
    """Number of +1 outcomes in ``shots`` independent measurements."""
    return int(make_rng(rng).binomial(shots, prob_plus(state, obs)))


def sample_observable(state: StateVector, obs, rng, shots: int) -> np.ndarray:
    """Eigenvalue outcomes of ``shots`` projective measurements of a Hermitian matrix."""
    m = _as_matrix(obs, state.n_qubits)
    check_hermitian(m)
    evals, evecs = np.linalg.eigh(m)
    probs = np.abs(evecs.conj().T @ state.amps) ** 2
    # eigenvalues differing by rounding noise are one outcome
    keys = np.round(evals, 10)
    values, inverse = np.unique(keys, return_inverse=True)
    grouped = np.zeros(values.size)
    np.add.at(grouped, inverse, probs)
    grouped /= grouped.sum()
    counts = make_rng(rng).multinomial(shots, grouped)
    return np.repeat(values, counts)
