"""Two-party execution with exact communication accounting.

Alice holds the data encoder and every A_l, Bob holds every B_l. The
register is shuttled between them: before each B_l it travels Alice -> Bob,
before each A_l it travels back. The simulator evaluates everything in one
register; the ledger charges what the shuttling would cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuits import ModelSpec, forward, initial_state, run_gates
from .config import StructuralError, ValidationError
from .statevec import StateVector, _apply_amps, adjoint, make_rng, sample_pm_counts

ALICE, BOB = "alice", "bob"
OWNER = {"A": ALICE, "B": BOB}

# Bits charged when a real scalar is sent over the classical channel.
SCALAR_BITS = 64
# Classical bits recoverable per transmitted qubit without shared entanglement.
HOLEVO_BITS_PER_QUBIT = 1


class CommLedger:
    """Running totals of quantum messages, qubits, classical bits and rounds.

    A round is a maximal run of messages from the same speaker, so rounds
    grow by one each time the speaker changes. With ``trace=True`` every
    message is also kept as an event record (capped at ``trace_limit``).
    """

    FIELDS = ("quantum_messages", "qubits_sent", "classical_bits", "rounds", "theoretical_counters")

    def __init__(self, trace: bool = False, trace_limit: int = 100_000):
        self.quantum_messages = 0
        self.qubits_sent = 0
        self.classical_messages = 0
        self.classical_bits = 0
        self.rounds = 0
        self.theoretical_counters: dict = {}
        self.last_speaker = None
        self.trace = trace
        self.trace_limit = trace_limit
        self.events: list = []
        self.dropped_events = 0
        self.checkpoints: list = []

    # -- recording ---------------------------------------------------------

    def _log(self, event, speaker, width):
        if not self.trace:
            return
        if len(self.events) < self.trace_limit:
            self.events.append({"event": event, "speaker": speaker, "width": width, "round": self.rounds})
        else:
            self.dropped_events += 1

    def _speak(self, speaker):
        if speaker not in (ALICE, BOB):
            raise StructuralError(f"unknown speaker {speaker!r}")
        if speaker != self.last_speaker:
            self.rounds += 1
            self.last_speaker = speaker

    def send_qubits(self, speaker: str, width: int):
        self._speak(speaker)
        self.quantum_messages += 1
        self.qubits_sent += int(width)
        self._log("quantum", speaker, int(width))

    def send_bits(self, speaker: str, bits: int):
        self._speak(speaker)
        self.classical_messages += 1
        self.classical_bits += int(bits)
        self._log("classical", speaker, int(bits))

    def record_many(self, pattern, repeat: int):
        """Append ``repeat`` copies of ``pattern`` = [(speaker, 'quantum'|'classical', width), ...].

        Counts are updated arithmetically; events are expanded only when
        tracing is on.
        """
        repeat = int(repeat)
        if repeat <= 0 or not pattern:
            return
        if self.trace and len(self.events) + repeat * len(pattern) <= self.trace_limit:
            for _ in range(repeat):
                for speaker, kind, width in pattern:
                    (self.send_qubits if kind == "quantum" else self.send_bits)(speaker, width)
            return
        inner = sum(1 for a, b in zip(pattern, pattern[1:]) if a[0] != b[0])
        boundary = 1 if pattern[-1][0] != pattern[0][0] else 0
        first = 1 if pattern[0][0] != self.last_speaker else 0
        self.rounds += first + repeat * inner + (repeat - 1) * boundary
        self.last_speaker = pattern[-1][0]
        for speaker, kind, width in pattern:
            if speaker not in (ALICE, BOB):
                raise StructuralError(f"unknown speaker {speaker!r}")
            if kind == "quantum":
                self.quantum_messages += repeat
                self.qubits_sent += repeat * int(width)
            elif kind == "classical":
                self.classical_messages += repeat
                self.classical_bits += repeat * int(width)
            else:
                raise StructuralError(f"unknown message kind {kind!r}")
        if self.trace:
            self.events.append(
                {"event": "batch", "speaker": pattern[0][0], "width": repeat, "round": self.rounds}
            )

    def add_counter(self, name: str, value):
        self.theoretical_counters[name] = self.theoretical_counters.get(name, 0) + value

    def mark(self, label):
        """Snapshot of the totals, used to time-stamp protocol phases."""
        self.checkpoints.append(
            {"label": label, "qubits_sent": self.qubits_sent, "classical_bits": self.classical_bits}
        )

    # -- combination -------------------------------------------------------

    def merge(self, other: "CommLedger") -> "CommLedger":
        """Totals of two independent sessions."""
        out = CommLedger()
        for name in ("quantum_messages", "qubits_sent", "classical_messages", "classical_bits", "rounds"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        for src in (self.theoretical_counters, other.theoretical_counters):
            for k, v in src.items():
                out.add_counter(k, v)
        return out

    def counts(self) -> tuple:
        return (self.quantum_messages, self.qubits_sent, self.classical_messages, self.classical_bits, self.rounds)

    def to_dict(self) -> dict:
        return {
            "quantum_messages": self.quantum_messages,
            "qubits_sent": self.qubits_sent,
            "classical_messages": self.classical_messages,
            "classical_bits": self.classical_bits,
            "rounds": self.rounds,
            "theoretical_counters": dict(sorted(self.theoretical_counters.items())),
        }

    def __repr__(self):
        return "CommLedger(%s)" % ", ".join(f"{k}={v}" for k, v in self.to_dict().items())


def shuttle_pattern(L: int, width: int) -> list:
    """One pass of a register through L layers: Alice->Bob before B_l, Bob->Alice before A_l."""
    return [(ALICE, "quantum", width), (BOB, "quantum", width)] * L


def charge_copies(ledger: CommLedger, L: int, width: int, copies: int):
    ledger.record_many(shuttle_pattern(L, width), copies)


# --------------------------------------------------------------------------
# Partition


@dataclass(frozen=True)
class Partition:
    """Who owns what: the encoder and every A_l go to Alice, every B_l to Bob."""

    side_of: dict = field(default_factory=lambda: dict(OWNER))
    encoder_owner: str = ALICE

    @classmethod
    def standard(cls) -> "Partition":
        return cls()

    def owner(self, side: str) -> str:
        return self.side_of[side]

    def check(self, model: ModelSpec):
        if self.side_of != OWNER or self.encoder_owner != ALICE:
            raise ValidationError("only the standard split (A and encoder to Alice, B to Bob) is supported")

    def holdings(self, model: ModelSpec) -> dict:
        L = model.n_layers
        return {
            ALICE: ["encoder"] + [f"A{ell}" for ell in range(1, L + 1)],
            BOB: [f"B{ell}" for ell in range(1, L + 1)],
        }


# --------------------------------------------------------------------------
# Inference


def run_inference(model, partition, x, shots, rng, params=None, share_result=False, trace=False):
    """Estimate the loss from ``shots`` +-1 measurements of P0 on fresh copies of |phi>.

    Returns ``(estimate, ledger)``.
    """
    if shots < 1:
        raise ValidationError("shots must be at least 1")
    (partition or Partition()).check(model)
    params = np.zeros(model.n_params) if params is None else params
    phi = forward(model, params, x)
    plus = sample_pm_counts(phi, model.loss_obs, make_rng(rng), shots)
    ledger = CommLedger(trace=trace)
    pattern = shuttle_pattern(model.n_layers, model.n_qubits)
    if share_result:
        pattern = pattern + [(ALICE, "classical", 1)]
    ledger.record_many(pattern, shots)
    return (2 * plus - shots) / shots, ledger


def inference_cost(L: int, n: int, shots: int, share_result: bool = False) -> dict:
    """Closed-form ledger totals for :func:`run_inference`."""
    return {
        "quantum_messages": 2 * L * shots,
        "qubits_sent": 2 * L * n * shots,
        "classical_bits": shots if share_result else 0,
    }


# --------------------------------------------------------------------------
# Feature states


@dataclass(frozen=True)
class FeatureStateRequest:
    side: str
    layer: int
    gate_cut: int = 0


def _cut_index(model: ModelSpec, req: FeatureStateRequest) -> int:
    if req.side not in ("A", "B"):
        raise ValidationError(f"side must be 'A' or 'B', got {req.side!r}")
    if not 1 <= req.layer <= model.n_layers:
        raise ValidationError(f"layer {req.layer} out of range 1..{model.n_layers}")
    gates = model.gates()
    block = [i for i, g in enumerate(gates) if g.side == req.side and g.layer == req.layer]
    if not 0 <= req.gate_cut <= len(block):
        raise ValidationError(f"gate_cut {req.gate_cut} outside 0..{len(block)}")
    if req.gate_cut < len(block):
        return block[req.gate_cut]
    if block:
        return block[-1] + 1
    # empty product: the cut sits where the block would be
    before = [i for i, g in enumerate(gates) if (g.layer, g.side == "A") < (req.layer, req.side == "A")]
    return (before[-1] + 1) if before else 0


def forward_and_backward(model, params, x, cut: int):
    """(mu, nu0): forward state before gate ``cut``, and P0|phi> pulled back to the same point."""
    params = model.check_params(params)
    gates = model.gates()
    mu = run_gates(initial_state(model, x).amps, model, gates[:cut], params, x)
    phi = run_gates(mu, model, gates[cut:], params, x)
    nu = model.loss_obs.act(phi)
    for g in reversed(gates[cut:]):
        nu = _apply_amps(nu, model.n_qubits, adjoint(g.op), params, x)
    return mu, nu


def prepare_feature_state(model, partition, params, x, req: FeatureStateRequest, ledger=None):
    """(|0>|mu> + |1>|nu0>)/sqrt(2) with the ancilla as qubit 0.

    Charges one copy: 2L messages of n+1 qubits. Returns ``(state, ledger)``.
    """
    (partition or Partition()).check(model)
    cut = _cut_index(model, req)
    mu, nu = forward_and_backward(model, params, x, cut)
    state = StateVector(model.n_qubits + 1, np.concatenate([mu, nu]) / np.sqrt(2))
    ledger = ledger if ledger is not None else CommLedger()
    charge_copies(ledger, model.n_layers, model.n_qubits + 1, 1)
    return state, ledger


def privacy_report(ledger: CommLedger) -> int:
    """Upper bound on classical bits about private inputs extractable from the transcript."""
    return HOLEVO_BITS_PER_QUBIT * ledger.qubits_sent + ledger.classical_bits


# --------------------------------------------------------------------------
# Data parallelism


def dataparallel_prepare(x_A, x_B, trace=False):
    """Amplitude encoding of the row-stacked matrix [x_A; x_B] in one message.

    Alice writes x_A into the top half and parks the weight ||x_B|| on the
    marker |N1/2, 0>; Bob's reflection moves the marker amplitude onto his
    normalized block. Returns ``(state, ledger)``.
    """
    x_A = np.atleast_2d(np.asarray(x_A, dtype=float))
    x_B = np.atleast_2d(np.asarray(x_B, dtype=float))
    if x_A.shape != x_B.shape:
        raise ValidationError("x_A and x_B must have the same shape")
    half, N2 = x_A.shape
    N1 = 2 * half
    dim = N1 * N2
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValidationError(f"N1*N2={dim} is not a power of two")
    total = np.sqrt(np.sum(x_A**2) + np.sum(x_B**2))
    if abs(total - 1) > 1e-9:
        raise ValidationError(f"[x_A; x_B] has Frobenius norm {total!r}, expected 1")

    marker = half * N2
    alice = np.zeros(dim)
    alice[:marker] = x_A.ravel()
    nb = np.linalg.norm(x_B)
    alice[marker] = nb
    ledger = CommLedger(trace=trace)
    ledger.send_qubits(ALICE, n)

    if nb > 0:
        target = np.zeros(dim)
        target[marker:] = x_B.ravel() / nb
        e = np.zeros(dim)
        e[marker] = 1.0
        v = e - target
        vv = v @ v
        out = alice - 2 * v * (v @ alice) / vv if vv > 1e-30 else alice
    else:
        out = alice
    return StateVector(n, out.astype(complex)), ledger
