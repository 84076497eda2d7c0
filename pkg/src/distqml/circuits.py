"""Layered two-party circuit models, data encoders and preset constructions.

A model acts as ``|phi> = A_L B_L ... A_1 B_1 |psi(x)>``: within every layer
the B unitary acts first. The loss is ``<phi|P0|phi>`` for a Pauli string
``P0`` (usually on qubit 0).

Trainable parameters are Pauli rotations ``exp(-i/2 beta theta P)``; each
rotation names a parameter slot, and ``param_layout`` records which side,
layer and position inside that layer's product the slot occupies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import TOL, StructuralError, ValidationError
from .statevec import (
    HADAMARD,
    IDENTITY,
    AncillaControlled,
    DenseMatrix,
    DiagonalPhase,
    PauliRotation,
    PauliString,
    Permutation,
    Product,
    StateVector,
    _apply_amps,
    make_rng,
    to_matrix,
)

SIDES = ("A", "B")


# --------------------------------------------------------------------------
# Model records


@dataclass(frozen=True)
class DataEncoderSpec:
    """How Alice turns the input into the initial register state.

    kinds: ``amplitude`` (x is the amplitude vector), ``fixed_basis`` (basis
    state ``index``, x only feeds data-dependent phases), ``plus_zero``
    (|+>|0...0>), ``data_parallel`` (x is a pair (x_A, x_B) of matrix
    halves stacked row-wise).
    """

    kind: str = "fixed_basis"
    index: int = 0

    def __post_init__(self):
        if self.kind not in ("amplitude", "fixed_basis", "plus_zero", "data_parallel"):
            raise StructuralError(f"unknown encoder kind {self.kind!r}")


def encode(encoder: DataEncoderSpec, n_qubits: int, x=None) -> StateVector:
    if encoder.kind == "fixed_basis":
        return StateVector.basis(n_qubits, encoder.index)
    if encoder.kind == "plus_zero":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = amps[2 ** (n_qubits - 1)] = 1 / np.sqrt(2)
        return StateVector(n_qubits, amps)
    if encoder.kind == "data_parallel":
        if x is None or len(x) != 2:
            raise ValidationError("data_parallel encoder needs x = (x_A, x_B)")
        vec = np.vstack([np.atleast_2d(x[0]), np.atleast_2d(x[1])]).ravel()
    else:
        if x is None:
            raise ValidationError("amplitude encoder needs an input vector")
        vec = np.asarray(x, dtype=complex).ravel()
    if vec.size != 2**n_qubits:
        raise ValidationError(f"input of length {vec.size} does not fill {n_qubits} qubits")
    norm = np.linalg.norm(vec)
    if abs(norm - 1.0) > TOL.unit_input:
        raise ValidationError(f"input has norm {norm!r}, expected 1")
    return StateVector(n_qubits, vec / norm)


@dataclass(frozen=True)
class Layer:
    b: object = IDENTITY
    a: object = IDENTITY


@dataclass(frozen=True)
class ParamSlot:
    slot: int
    side: str
    layer: int
    index: int
    coeff: float


@dataclass(frozen=True)
class Gate:
    """One element of the flattened circuit, in application order."""

    side: str
    layer: int
    op: object
    position: int  # index inside the layer's product


def _flatten(u):
    if isinstance(u, Product):
        out = []
        for op in u.ops:
            out.extend(_flatten(op))
        return out
    return [u]


def _rotations(u):
    if isinstance(u, PauliRotation):
        yield u
    elif isinstance(u, Product):
        for op in u.ops:
            yield from _rotations(op)
    elif isinstance(u, AncillaControlled):
        if any(True for _ in _rotations(u.inner)):
            raise StructuralError("trainable rotations inside controlled blocks are not supported")


@dataclass(frozen=True)
class ModelSpec:
    n_qubits: int
    layers: tuple
    encoder: DataEncoderSpec = field(default_factory=DataEncoderSpec)
    loss_obs: PauliString | None = None
    param_layout: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "param_layout", tuple(self.param_layout))
        if self.loss_obs is None:
            object.__setattr__(self, "loss_obs", PauliString.single(self.n_qubits, 0, "Z"))
        if self.loss_obs.n_qubits != self.n_qubits:
            raise StructuralError("loss observable size does not match the register")
        if not self.layers:
            raise StructuralError("a model needs at least one layer")
        self._check_layout()

    def _check_layout(self):
        found = {}
        for ell, layer in enumerate(self.layers, start=1):
            for side, u in (("B", layer.b), ("A", layer.a)):
                for pos, op in enumerate(_flatten(u)):
                    for rot in _rotations(op):
                        if rot.slot in found:
                            raise StructuralError(f"parameter slot {rot.slot} used twice")
                        if rot.pauli.n_qubits != self.n_qubits:
                            raise StructuralError("rotation size does not match the register")
                        found[rot.slot] = (side, ell, pos, rot.coeff, isinstance(op, PauliRotation))
        slots = sorted(p.slot for p in self.param_layout)
        if slots != list(range(len(slots))):
            raise StructuralError("param_layout slots must be exactly 0..K-1, each once")
        for p in self.param_layout:
            if p.slot not in found:
                raise StructuralError(f"slot {p.slot} is not referenced by any rotation")
            side, ell, pos, coeff, _ = found[p.slot]
            if (p.side, p.layer, p.index) != (side, ell, pos) or abs(p.coeff - coeff) > 1e-15:
                raise StructuralError(f"slot {p.slot} layout entry disagrees with the circuit")
        if len(found) != len(self.param_layout):
            raise StructuralError("circuit references slots missing from param_layout")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_params(self) -> int:
        return len(self.param_layout)

    def slot(self, k: int) -> ParamSlot:
        return self.param_layout[k]

    def gates(self) -> list:
        """Flattened circuit (excluding the encoder) in application order."""
        out = []
        for ell, layer in enumerate(self.layers, start=1):
            for side, u in (("B", layer.b), ("A", layer.a)):
                for pos, op in enumerate(_flatten(u)):
                    out.append(Gate(side, ell, op, pos))
        return out

    def gate_index_of_slot(self, k: int) -> int:
        p = self.param_layout[k]
        for i, g in enumerate(self.gates()):
            if (g.side, g.layer, g.position) == (p.side, p.layer, p.index):
                return i
        raise StructuralError(f"slot {k} not found")  # unreachable after validation

    def check_params(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float).ravel()
        if params.size != self.n_params:
            raise StructuralError(f"expected {self.n_params} parameters, got {params.size}")
        return params


@dataclass(frozen=True, eq=False)
class BetaVector:
    entries: np.ndarray
    sides: tuple = ()

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float).ravel().copy()
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "sides", tuple(self.sides))
        if self.sides and len(self.sides) != e.size:
            raise StructuralError("sides must align with entries")

    @classmethod
    def from_model(cls, model: ModelSpec) -> "BetaVector":
        return cls([p.coeff for p in model.param_layout], [p.side for p in model.param_layout])

    @property
    def norm1(self) -> float:
        return float(np.abs(self.entries).sum())

    def side_norm1(self, side: str) -> float:
        mask = np.array([s == side for s in self.sides], dtype=bool)
        return float(np.abs(self.entries[mask]).sum()) if mask.size else 0.0

    def __len__(self):
        return self.entries.size


# --------------------------------------------------------------------------
# Evaluation


def initial_state(model: ModelSpec, x=None) -> StateVector:
    return encode(model.encoder, model.n_qubits, x)


def run_gates(amps: np.ndarray, model: ModelSpec, gates, params, x) -> np.ndarray:
    for g in gates:
        amps = _apply_amps(amps, model.n_qubits, g.op, params, x)
    return amps


def forward(model: ModelSpec, params, x=None) -> StateVector:
    """|phi(params, x)>."""
    params = model.check_params(params)
    psi = initial_state(model, x)
    return StateVector(model.n_qubits, run_gates(psi.amps, model, model.gates(), params, x))


def loss(model: ModelSpec, params, x=None) -> float:
    """<phi|P0|phi>."""
    phi = forward(model, params, x)
    val = np.vdot(phi.amps, model.loss_obs.act(phi.amps))
    return float(val.real)


def forward_state_before(model: ModelSpec, params, x, layer: int, side: str) -> StateVector:
    """Register state just before the ``side`` unitary of ``layer`` (1-based) acts."""
    params = model.check_params(params)
    gates = [g for g in model.gates() if (g.layer, g.side == "A") < (layer, side == "A")]
    psi = initial_state(model, x)
    return StateVector(model.n_qubits, run_gates(psi.amps, model, gates, params, x))


def layer_matrices(model: ModelSpec, params, x=None) -> list:
    """Dense (B_l, A_l) matrices per layer, for independent checks."""
    params = model.check_params(params)
    return [
        (to_matrix(layer.b, model.n_qubits, params, x), to_matrix(layer.a, model.n_qubits, params, x))
        for layer in model.layers
    ]


# --------------------------------------------------------------------------
# Smooth circuits


def smooth_model(n_qubits: int, layers, encoder=None, loss_obs=None) -> ModelSpec:
    """Build a rotation-product model from explicit (pauli, beta) lists.

    ``layers`` is a sequence of ``(b_rotations, a_rotations)``, each a list of
    ``(PauliString | str, beta)``; slots are numbered in application order.
    """
    built, layout = [], []
    for ell, (b_rots, a_rots) in enumerate(layers, start=1):
        sides = {}
        for side, rots in (("B", b_rots), ("A", a_rots)):
            ops = []
            for j, (pauli, beta) in enumerate(rots):
                pauli = pauli if isinstance(pauli, PauliString) else PauliString(pauli)
                slot = len(layout)
                ops.append(PauliRotation(pauli, float(beta), slot))
                layout.append(ParamSlot(slot, side, ell, j, float(beta)))
            sides[side] = Product(ops)
        built.append(Layer(b=sides["B"], a=sides["A"]))
    return ModelSpec(
        n_qubits,
        built,
        encoder or DataEncoderSpec("amplitude"),
        loss_obs,
        layout,
    )


def random_unit_vector(N: int, rng) -> np.ndarray:
    v = make_rng(rng).normal(size=N)
    return v / np.linalg.norm(v)


def random_pauli(n_qubits: int, rng) -> PauliString:
    rng = make_rng(rng)
    while True:
        labels = "".join(rng.choice(list("IXYZ"), size=n_qubits))
        if set(labels) != {"I"}:
            return PauliString(labels)


def preset_smooth(n, L, P, rng, beta_low=-1.0, beta_high=1.0, encoder=None, loss_obs=None):
    """Random smooth circuit: every A_l and B_l is a product of P Pauli rotations.

    Pauli strings are uniform over non-identity labels, coefficients uniform
    on [beta_low, beta_high]. Returns ``(model, beta)``.
    """
    rng = make_rng(rng)
    layers = []
    for _ in range(L):
        b = [(random_pauli(n, rng), rng.uniform(beta_low, beta_high)) for _ in range(P)]
        a = [(random_pauli(n, rng), rng.uniform(beta_low, beta_high)) for _ in range(P)]
        layers.append((b, a))
    model = smooth_model(n, layers, encoder, loss_obs)
    return model, BetaVector.from_model(model)


def preset_cos(beta: float = 1.0) -> ModelSpec:
    """One qubit, A = exp(-i beta theta X / 2), B = I, start |0>, loss Z: L(theta) = cos(beta theta)."""
    return smooth_model(1, [([], [("X", beta)])], DataEncoderSpec("fixed_basis", 0))


# --------------------------------------------------------------------------
# Presets from the reductions


def random_orthogonal(N: int, rng) -> np.ndarray:
    rng = make_rng(rng)
    q, r = np.linalg.qr(rng.normal(size=(N, N)))
    return q * np.sign(np.diag(r))


def householder(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unitary reflection-type map sending unit vector ``a`` to unit vector ``b``.

    For complex vectors the reflection is multiplied by a phase so that the
    overlap condition of the real construction holds.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    ov = np.vdot(a, b)
    phase = ov / abs(ov) if abs(ov) > 1e-15 else 1.0
    a_ph = phase * a
    v = a_ph - b
    nv = np.vdot(v, v).real
    dim = a.size
    H = np.eye(dim, dtype=complex)
    if nv > 1e-30:
        H -= 2 * np.outer(v, v.conj()) / nv
    return phase * H


def _log2_exact(N: int, what: str) -> int:
    n = int(round(np.log2(N))) if N > 0 else -1
    if n < 1 or 2**n != N:
        raise ValidationError(f"{what}={N} is not a power of two")
    return n


def preset_raz(N: int, subspace_seed, x, target: str = "M1", rng=None) -> ModelSpec:
    """Planted subspace instance: loss is +1 if the rotated input lies in M1, -1 for M2.

    M1/M2 are spanned by the first/second half of the columns of a random
    orthogonal matrix Q drawn from ``subspace_seed``; A_1 = Q^T sends the
    first half to |0>|j> and the second to |1>|j>. B_1 = O is a random
    orthogonal matrix adjusted so that O x is a unit vector inside the target.
    """
    n = _log2_exact(N, "N")
    if N < 4:
        raise ValidationError("the planted-subspace instance needs N >= 4")
    if target not in ("M1", "M2"):
        raise ValidationError(f"target must be 'M1' or 'M2', got {target!r}")
    x = np.asarray(x, dtype=float).ravel()
    if x.size != N or abs(np.linalg.norm(x) - 1) > TOL.unit_input:
        raise ValidationError("x must be a unit vector of length N")
    srng = make_rng(subspace_seed)
    Q = random_orthogonal(N, srng)
    rng = make_rng(rng if rng is not None else srng)
    O0 = random_orthogonal(N, rng)
    cols = Q[:, : N // 2] if target == "M1" else Q[:, N // 2 :]
    c = rng.normal(size=N // 2)
    u = cols @ (c / np.linalg.norm(c))
    O = householder(O0 @ x, u).real @ O0
    qubits = tuple(range(n))
    return ModelSpec(
        n,
        [Layer(b=DenseMatrix(O, qubits), a=DenseMatrix(Q.T, qubits))],
        DataEncoderSpec("amplitude"),
        PauliString.single(n, 0, "Z"),
    )


def preset_raz_gradient(N: int, subspace_seed, x, target: str = "M1", rng=None):
    """Planted-subspace instance with one extra trainable X rotation on qubit 0.

    At theta = -pi/2 the derivative of the loss equals the loss of the plain
    instance, so gradient estimation is as hard as the subspace problem.
    Returns ``(model, theta_star)``.
    """
    base = preset_raz(N, subspace_seed, x, target, rng)
    n = base.n_qubits
    rot = PauliRotation(PauliString.single(n, 0, "X"), 1.0, 0)
    model = ModelSpec(
        n,
        [base.layers[0], Layer(b=IDENTITY, a=Product([rot]))],
        base.encoder,
        base.loss_obs,
        [ParamSlot(0, "A", 2, 0, 1.0)],
    )
    return model, -np.pi / 2


def _check_bijection(f, N, name):
    f = np.asarray(f, dtype=int).ravel()
    if f.size != N or sorted(f.tolist()) != list(range(N)):
        raise ValidationError(f"{name} is not a bijection on range({N})")
    return f


def compose_pointer(f_A, f_B, L0: int, x: int) -> int:
    """Classical f^(L0)(x) with f_B applied first, then alternating."""
    for step in range(L0):
        x = int((f_B if step % 2 == 0 else f_A)[x])
    return x


def swap_permutation(n_qubits: int, q1: int, q2: int) -> np.ndarray:
    idx = np.arange(2**n_qubits)
    b1 = (idx >> (n_qubits - 1 - q1)) & 1
    b2 = (idx >> (n_qubits - 1 - q2)) & 1
    diff = b1 ^ b2
    return idx ^ (diff << (n_qubits - 1 - q1)) ^ (diff << (n_qubits - 1 - q2))


def preset_pointer_chasing(N: int, f_A, f_B, L0: int, x: int) -> ModelSpec:
    """Alternating permutation circuit U_B, U_A, ... of length L0, then SWAP(0, n-1).

    Measuring Z on qubit 0 returns (-1)^b where b is the least significant
    bit of f^(L0)(x).
    """
    n = _log2_exact(N, "N")
    f_A = _check_bijection(f_A, N, "f_A")
    f_B = _check_bijection(f_B, N, "f_B")
    if L0 < 1:
        raise ValidationError("L0 must be at least 1")
    if not 0 <= x < N:
        raise ValidationError(f"x={x} out of range")
    UA, UB = Permutation(f_A), Permutation(f_B)
    swap = Permutation(swap_permutation(n, 0, n - 1))
    L = (L0 + 1) // 2
    layers = []
    for ell in range(1, L + 1):
        if ell < L:
            layers.append(Layer(b=UB, a=UA))
        elif L0 % 2:
            layers.append(Layer(b=UB, a=swap))
        else:
            layers.append(Layer(b=UB, a=Product([UA, swap])))
    return ModelSpec(n, layers, DataEncoderSpec("fixed_basis", x), PauliString.single(n, 0, "Z"))


def pointer_bit(model: ModelSpec) -> int:
    """Bit read off the pointer-chasing circuit from its exact loss."""
    return int(round((1 - loss(model, [])) / 2))


# --------------------------------------------------------------------------
# Fourier ladders


def level_index(k: int, N: int) -> int:
    """Register index of ladder level k (0-based).

    The ladder starts in the superposition of levels 0 and 1, which is
    |+>|0...0> with qubit 0 as the most significant bit, i.e. indices 0 and
    N/2. Levels 1 and N/2 are therefore exchanged.
    """
    if k == 1:
        return N // 2
    if k == N // 2:
        return 1
    return k


def _level_swap(N: int, k1: int, k2: int) -> np.ndarray:
    perm = np.arange(N)
    i, j = level_index(k1, N), level_index(k2, N)
    perm[i], perm[j] = j, i
    return perm


def ladder_phase(lam_row, N: int, variable: int = 0) -> DiagonalPhase:
    """diag(exp(-2 pi i lam_k x)) with lam indexed by ladder level."""
    freqs = np.zeros(N)
    for k in range(N):
        freqs[level_index(k, N)] = lam_row[k]
    return DiagonalPhase(np.zeros(N), None, freqs, np.full(N, variable), -1.0)


def preset_fourier_ladder(N: int, L: int, lam, path) -> ModelSpec:
    """Ladder whose loss is cos(2 pi Lambda x), Lambda = sum_l lam[l, path[l]-1].

    ``lam`` has shape (L, N) indexed by 1-based level minus one; ``path``
    lists the 1-based levels j_1..j_L visited by the moving branch, with
    j_1 = j_L = 2 (and implicitly j_0 = 2).
    """
    n = _log2_exact(N, "N'")
    lam = np.asarray(lam, dtype=float)
    path = [int(j) for j in path]
    if lam.shape != (L, N):
        raise ValidationError(f"lambda must have shape ({L}, {N})")
    if len(path) != L:
        raise ValidationError(f"path must have {L} entries")
    if any(not 2 <= j <= N for j in path):
        raise ValidationError(f"path entries must lie in 2..{N}")
    if path[0] != 2 or path[-1] != 2:
        raise ValidationError("path must start and end at level 2")
    if np.any(lam[:, 0] != 0) or lam[-1, 1] != 0:
        raise ValidationError("level-1 frequencies and the last level-2 frequency must be 0")
    layers = []
    prev = 2
    for ell in range(L):
        layers.append(
            Layer(b=Permutation(_level_swap(N, path[ell] - 1, prev - 1)), a=ladder_phase(lam[ell], N))
        )
        prev = path[ell]
    return ModelSpec(n, layers, DataEncoderSpec("plus_zero"), PauliString.single(n, 0, "X"))


def ladder_frequency(lam, path) -> float:
    lam = np.asarray(lam, dtype=float)
    return float(sum(lam[ell, j - 1] for ell, j in enumerate(path)))


def preset_hadamard_ladder(N: int, L: int, lam, variables=None) -> ModelSpec:
    """Ladder with B_l = H on every qubit, A_l = diag(exp(-2 pi i lam_l x)).

    Starts from |0...0> and measures X on qubit 0. ``lam`` has shape (L, N)
    indexed directly by register index. ``variables`` optionally assigns
    each register index to a data component (for two-variable ladders).
    """
    n = _log2_exact(N, "N'")
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (L, N):
        raise ValidationError(f"lambda must have shape ({L}, {N})")
    var = np.zeros(N, dtype=int) if variables is None else np.asarray(variables, dtype=int)
    hall = DenseMatrix(_kron_power(HADAMARD, n), tuple(range(n)))
    layers = [Layer(b=hall, a=DiagonalPhase(np.zeros(N), None, lam[ell], var, -1.0)) for ell in range(L)]
    return ModelSpec(n, layers, DataEncoderSpec("fixed_basis", 0), PauliString.single(n, 0, "X"))


def _kron_power(m, n):
    out = np.array([[1.0 + 0j]])
    for _ in range(n):
        out = np.kron(out, m)
    return out


def two_variable_variables(N: int) -> np.ndarray:
    """Variable assignment for two-variable ladders: first half of indices read y, second half z."""
    return np.where(np.arange(N) < N // 2, 0, 1)


# --------------------------------------------------------------------------
# Universal approximation


def fourier_state(fplus, fminus) -> np.ndarray:
    """Amplitudes of |f> on 2 + log2(M) qubits.

    Qubit 0 carries the interference pair, qubit 1 selects cosine (0) or sine
    (1), the remaining qubits hold the frequency m. The relative phase on
    the qubit-0 = 1 branch turns the X expectation into signed cos/sin terms.
    """
    fplus = np.asarray(fplus, dtype=float).ravel()
    fminus = np.asarray(fminus, dtype=float).ravel()
    M = fplus.size
    amp = np.zeros(4 * M, dtype=complex)
    for s, coeffs, base in ((0, fplus, 0.0), (1, fminus, -np.pi / 2)):
        mag = np.sqrt(np.abs(coeffs) / 2)
        alpha = base + np.where(coeffs < 0, np.pi, 0.0)
        amp[s * M : (s + 1) * M] = mag
        amp[2 * M + s * M : 2 * M + (s + 1) * M] = mag * np.exp(1j * alpha)
    return amp


def universal_phase(M: int) -> DiagonalPhase:
    """Flat A_1: identity on the qubit-0 = 0 half, exp(2 pi i m x) on the other half."""
    freqs = np.concatenate([np.zeros(2 * M), np.tile(np.arange(M, dtype=float), 2)])
    return DiagonalPhase(np.zeros(4 * M), None, freqs, None, +1.0)


def _check_coeffs(fplus, fminus):
    fplus = np.asarray(fplus, dtype=float).ravel()
    fminus = np.asarray(fminus, dtype=float).ravel()
    if fplus.shape != fminus.shape:
        raise ValidationError("cosine and sine coefficient lists must have equal length")
    M = fplus.size
    if M < 1 or 2 ** int(round(np.log2(M))) != M:
        raise ValidationError(f"number of frequencies M={M} must be a power of two")
    total = np.abs(fplus).sum() + np.abs(fminus).sum()
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"coefficients have l1 norm {total!r}, expected 1")
    return fplus, fminus, M


def _state_prep(fplus, fminus, n):
    amp = fourier_state(fplus, fminus)
    e0 = np.zeros(amp.size, dtype=complex)
    e0[0] = 1.0
    return DenseMatrix(householder(e0, amp), tuple(range(n)))


def preset_universal_approx(fplus, fminus) -> ModelSpec:
    """Single-layer circuit with loss sum_m fplus_m cos(2 pi m x) + fminus_m sin(2 pi m x).

    B_1 sends |0> to |f> (completed to a unitary by a Householder map; only
    the first column matters because the circuit starts in |0>). A_1 is the
    block-diagonal phase matrix. Coefficients must have unit l1 norm.
    """
    fplus, fminus, M = _check_coeffs(fplus, fminus)
    n = 2 + int(round(np.log2(M)))
    return ModelSpec(
        n,
        [Layer(b=_state_prep(fplus, fminus, n), a=universal_phase(M))],
        DataEncoderSpec("fixed_basis", 0),
        PauliString.single(n, 0, "X"),
    )


def hierarchical_phases(M: int) -> list:
    """Controlled single-qubit phases whose product is the flat A_1.

    Layer l (1-based) rotates the qubit carrying bit 2^(l-1) of m by
    exp(2 pi i 2^(l-1) x), controlled on qubit 0 being 1. With qubit 0 the
    control, qubit 1 the cos/sin flag and log2(M) frequency qubits, the
    register has log2(M) + 2 qubits.
    """
    L = int(round(np.log2(M)))
    ops = []
    for ell in range(1, L + 1):
        # register without qubit 0: flag is qubit 0, frequency bits 1..L (MSB first)
        target = L + 1 - ell
        ops.append(
            AncillaControlled(
                DiagonalPhase([0.0, 0.0], (target,), [0.0, float(2 ** (ell - 1))], None, +1.0),
                control=0,
                value=1,
            )
        )
    return ops


def preset_universal_hierarchical(fplus, fminus) -> ModelSpec:
    """Same loss as :func:`preset_universal_approx` using only single-qubit data phases."""
    fplus, fminus, M = _check_coeffs(fplus, fminus)
    n = 2 + int(round(np.log2(M)))
    phases = hierarchical_phases(M)
    if not phases:
        phases = [IDENTITY]
    layers = [Layer(b=_state_prep(fplus, fminus, n), a=phases[0])]
    layers += [Layer(b=IDENTITY, a=op) for op in phases[1:]]
    return ModelSpec(n, layers, DataEncoderSpec("fixed_basis", 0), PauliString.single(n, 0, "X"))


# --------------------------------------------------------------------------
# JSON schema


def unitary_to_dict(u) -> dict:
    if isinstance(u, PauliString):
        return {"kind": "pauli", "labels": u.labels}
    if isinstance(u, PauliRotation):
        return {"kind": "pauli_rotation", "pauli": u.pauli.labels, "coeff": u.coeff, "slot": u.slot}
    if isinstance(u, DenseMatrix):
        return {
            "kind": "dense_matrix",
            "qubits": list(u.qubits),
            "re": u.matrix.real.tolist(),
            "im": u.matrix.imag.tolist(),
        }
    if isinstance(u, DiagonalPhase):
        d = {"kind": "diagonal_phase", "phases": u.phases.tolist(), "sign": u.sign}
        d["qubits"] = None if u.qubits is None else list(u.qubits)
        d["freqs"] = None if u.freqs is None else u.freqs.tolist()
        d["variables"] = None if u.variables is None else u.variables.tolist()
        return d
    if isinstance(u, Permutation):
        return {
            "kind": "permutation",
            "perm": u.perm.tolist(),
            "qubits": None if u.qubits is None else list(u.qubits),
        }
    if isinstance(u, AncillaControlled):
        return {
            "kind": "ancilla_controlled",
            "inner": unitary_to_dict(u.inner),
            "control": u.control,
            "value": u.value,
        }
    if isinstance(u, Product):
        return {"kind": "product", "ops": [unitary_to_dict(op) for op in u.ops]}
    raise StructuralError(f"cannot serialize {type(u).__name__}")


def unitary_from_dict(d: dict):
    try:
        kind = d["kind"]
        if kind == "pauli":
            return PauliString(d["labels"])
        if kind == "pauli_rotation":
            return PauliRotation(PauliString(d["pauli"]), float(d["coeff"]), int(d["slot"]))
        if kind == "dense_matrix":
            m = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d.get("im", 0.0), dtype=float)
            return DenseMatrix(m, tuple(d["qubits"]))
        if kind == "diagonal_phase":
            q = d.get("qubits")
            return DiagonalPhase(
                d["phases"],
                None if q is None else tuple(q),
                d.get("freqs"),
                d.get("variables"),
                float(d.get("sign", -1.0)),
            )
        if kind == "permutation":
            q = d.get("qubits")
            return Permutation(d["perm"], None if q is None else tuple(q))
        if kind == "ancilla_controlled":
            return AncillaControlled(
                unitary_from_dict(d["inner"]), int(d.get("control", 0)), int(d.get("value", 1))
            )
        if kind == "product":
            return Product([unitary_from_dict(op) for op in d["ops"]])
    except KeyError as exc:
        raise StructuralError(f"unitary record missing field {exc}") from None
    raise StructuralError(f"unknown unitary kind {d.get('kind')!r}")


def model_to_dict(model: ModelSpec) -> dict:
    return {
        "n_qubits": model.n_qubits,
        "layers": [{"b": unitary_to_dict(l.b), "a": unitary_to_dict(l.a)} for l in model.layers],
        "encoder": {"kind": model.encoder.kind, "index": model.encoder.index},
        "loss_obs": model.loss_obs.labels,
        "param_layout": [
            {"slot": p.slot, "side": p.side, "layer": p.layer, "index": p.index, "coeff": p.coeff}
            for p in model.param_layout
        ],
    }


def model_from_dict(d: dict) -> ModelSpec:
    try:
        enc = d.get("encoder", {"kind": "fixed_basis", "index": 0})
        return ModelSpec(
            int(d["n_qubits"]),
            [Layer(b=unitary_from_dict(l["b"]), a=unitary_from_dict(l["a"])) for l in d["layers"]],
            DataEncoderSpec(enc["kind"], int(enc.get("index", 0))),
            PauliString(d["loss_obs"]) if d.get("loss_obs") else None,
            [
                ParamSlot(int(p["slot"]), p["side"], int(p["layer"]), int(p["index"]), float(p["coeff"]))
                for p in d.get("param_layout", [])
            ],
        )
    except KeyError as exc:
        raise StructuralError(f"model record missing field {exc}") from None
