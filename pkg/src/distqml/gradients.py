"""Gradient pathways: exact parameter shift, finite differences, and the
ancilla observables measured on feature states.

Feature state for a rotation slot cut just before gate j::

    psi = (|0>|mu> + |1>|nu0>) / sqrt(2)

with mu the forward state before gate j and nu0 = (gates j..end)^dag P0 |phi>.
For a rotation exp(-i/2 beta theta P) this gives
``dL/dtheta = beta * Im <nu0|P|mu>``, and the three observables read

* ``E``      = [[0, D^dag], [D, 0]], D = -i beta P / 2:   <E>     = dL/dtheta / 2
* ``E_hat``  = [[0, -iP], [iP, 0]] (an involution):        <E_hat> = -dL/dtheta / beta
* ``E_tilde``= |1><0| (x) A_L^dag P0 dA_L + h.c. on |+>|mu_L>: <E_tilde> = dL/dtheta / 2

The constants below are those ratios; :func:`calibrate` re-derives them
against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuits import BetaVector, ModelSpec, forward_state_before, loss, preset_smooth, random_unit_vector
from .config import TOL, UnsupportedSlotError, ValidationError
from .protocol import CommLedger, FeatureStateRequest, Partition, charge_copies, prepare_feature_state
from .statevec import PauliRotation, PauliString, Product, StateVector, make_rng, to_matrix

C_E = 0.5
C_HAT = -1.0
C_TILDE = 0.5


@dataclass
class GradientEstimate:
    values: np.ndarray
    provenance: str
    shots: int = 0
    ledger: CommLedger = field(default_factory=CommLedger)
    sparse_slot: int | None = None

    def to_dict(self) -> dict:
        d = {
            "values": [float(v) for v in self.values],
            "provenance": self.provenance,
            "shots": self.shots,
            "ledger": self.ledger.to_dict(),
        }
        if self.sparse_slot is not None:
            d["sparse_slot"] = self.sparse_slot
        return d


def slot_rotation(model: ModelSpec, k: int) -> PauliRotation:
    if not 0 <= k < model.n_params:
        raise ValidationError(f"slot {k} out of range 0..{model.n_params - 1}")
    op = model.gates()[model.gate_index_of_slot(k)].op
    if not isinstance(op, PauliRotation):
        raise UnsupportedSlotError(f"slot {k} is realized by {type(op).__name__}, not a Pauli rotation")
    return op


def slot_request(model: ModelSpec, k: int) -> FeatureStateRequest:
    p = model.slot(k)
    return FeatureStateRequest(p.side, p.layer, p.index)


# --------------------------------------------------------------------------
# Exact gradients


def grad_param_shift(model: ModelSpec, params, x=None) -> GradientEstimate:
    """Two-term shift rule per slot, shifting the effective angle by +-pi/2."""
    params = model.check_params(params)
    g = np.zeros(model.n_params)
    for k in range(model.n_params):
        beta = slot_rotation(model, k).coeff
        if beta == 0:
            continue
        shift = np.zeros(model.n_params)
        shift[k] = np.pi / (2 * beta)
        g[k] = 0.5 * beta * (loss(model, params + shift, x) - loss(model, params - shift, x))
    return GradientEstimate(g, "exact_shift")


def grad_finite_diff(model: ModelSpec, params, x=None, h: float = 1e-5) -> GradientEstimate:
    """Central differences of the exact loss."""
    if h <= 0:
        raise ValidationError("step h must be positive")
    params = model.check_params(params)
    g = np.zeros(model.n_params)
    for k in range(model.n_params):
        e = np.zeros(model.n_params)
        e[k] = h
        g[k] = (loss(model, params + e, x) - loss(model, params - e, x)) / (2 * h)
    return GradientEstimate(g, "finite_diff")


# --------------------------------------------------------------------------
# Observables


@dataclass(frozen=True, eq=False)
class GradObservable:
    """Observable on (ancilla qubit 0) + register.

    For ``E`` and ``E_hat`` the action is fixed by the inserted Pauli and its
    coefficient; ``E_tilde`` carries the dense block M = A_L^dag P0 dA_L.
    """

    kind: str
    target: FeatureStateRequest
    pauli: PauliString
    beta: float
    block: np.ndarray | None = None

    def act(self, amps: np.ndarray) -> np.ndarray:
        h = amps.size // 2
        a, b = amps[:h], amps[h:]
        if self.kind == "E":
            # D = -i beta P / 2, D^dag = +i beta P / 2
            return np.concatenate([0.5j * self.beta * self.pauli.act(b), -0.5j * self.beta * self.pauli.act(a)])
        if self.kind == "E_hat":
            return np.concatenate([-1j * self.pauli.act(b), 1j * self.pauli.act(a)])
        if self.kind == "E_tilde":
            return np.concatenate([self.block.conj().T @ b, self.block @ a])
        raise ValidationError(f"unknown observable kind {self.kind!r}")

    def matrix(self) -> np.ndarray:
        dim = 2 * 2**self.pauli.n_qubits
        eye = np.eye(dim, dtype=complex)
        return np.stack([self.act(eye[:, i]) for i in range(dim)], axis=1)

    def expectation(self, state) -> float:
        val = np.vdot(state.amps, self.act(state.amps))
        if abs(val.imag) > TOL.imag_residue:
            raise ValidationError(f"expectation has imaginary part {val.imag:.3e}")
        return float(val.real)

    def prob_plus(self, state) -> float:
        if self.kind != "E_hat":
            raise ValidationError("only the involutive observable can be sampled as +-1")
        return float(np.clip(0.5 * (1 + self.expectation(state)), 0.0, 1.0))


def grad_observable(model: ModelSpec, k: int, kind: str = "E") -> GradObservable:
    rot = slot_rotation(model, k)
    return GradObservable(kind, slot_request(model, k), rot.pauli, rot.coeff)


def expectation_E(model, partition, params, x, slot, ledger=None):
    """<psi|E|psi> on the slot's feature state, charging one copy. Returns (value, ledger)."""
    obs = grad_observable(model, slot, "E")
    state, ledger = prepare_feature_state(model, partition, params, x, obs.target, ledger)
    return obs.expectation(state), ledger


def expectation_E_hat(model, partition, params, x, slot, ledger=None):
    obs = grad_observable(model, slot, "E_hat")
    state, ledger = prepare_feature_state(model, partition, params, x, obs.target, ledger)
    return obs.expectation(state), ledger


def fine_tune_observable(model: ModelSpec, params, slot: int, x=None) -> GradObservable:
    """E_tilde for a slot in the last A layer, to be measured on |+>|mu_L>."""
    p = model.slot(slot)
    if p.side != "A" or p.layer != model.n_layers:
        raise ValidationError(f"slot {slot} is not in the last A layer")
    params = model.check_params(params)
    rot = slot_rotation(model, slot)
    n = model.n_qubits
    A = to_matrix(model.layers[-1].a, n, params, x)
    # dA = (gates after) (-i beta P / 2) R (gates before) = A with -i beta P / 2 inserted after R
    gates = [g for g in model.gates() if g.layer == p.layer and g.side == "A"]
    before = to_matrix(Product([g.op for g in gates[: p.index + 1]]), n, params, x)
    after = to_matrix(Product([g.op for g in gates[p.index + 1 :]]), n, params, x)
    dA = after @ (-0.5j * rot.coeff * rot.pauli.matrix()) @ before
    block = A.conj().T @ model.loss_obs.matrix() @ dA
    return GradObservable("E_tilde", FeatureStateRequest("A", p.layer, 0), rot.pauli, rot.coeff, block)


def fine_tune_state(model: ModelSpec, params, x=None):
    """|+>|mu_L>, mu_L being the register just before A_L."""
    mu = forward_state_before(model, params, x, model.n_layers, "A")
    return StateVector(model.n_qubits + 1, np.concatenate([mu.amps, mu.amps]) / np.sqrt(2))


# --------------------------------------------------------------------------
# Shot budgets


def hoeffding_shots(eps: float, delta: float, n_entries: int, beta_max: float = 1.0) -> int:
    """Shots per entry so all ``n_entries`` estimates are within eps w.p. >= 1 - delta.

    Each single-shot estimate lies in [-|beta|, |beta|]; the union bound over
    entries gives ceil(2 beta^2 ln(2K/delta) / eps^2), with beta^2 only
    applied when |beta| > 1.
    """
    if not 0 < eps < 1 or not 0 < delta < 1:
        raise ValidationError("eps and delta must lie in (0, 1)")
    scale = max(1.0, beta_max) ** 2
    return math.ceil(round(2 * scale * math.log(2 * n_entries / delta) / eps**2, 9))


def shadow_copies_theory(P: int, N: int, L: int, eps: float, delta: float) -> int:
    """Copy count (log2 P)^2 log2 N ln(L/delta) / eps^4 with all constants set to 1."""
    return math.ceil(round(math.log2(P) ** 2 * math.log2(N) * math.log(L / delta) / eps**4, 9))


def rotations_per_block(model: ModelSpec) -> int:
    counts = {}
    for p in model.param_layout:
        counts[(p.side, p.layer)] = counts.get((p.side, p.layer), 0) + 1
    return max(counts.values(), default=0)


def estimate_grad_budget(model, partition, params, x, eps, delta, rng, ledger=None) -> GradientEstimate:
    """All slot gradients from +-1 samples of E_hat on fresh feature-state copies.

    Every slot gets the same number of shots (:func:`hoeffding_shots`), so
    the L-infinity error is at most eps with probability >= 1 - delta.
    """
    (partition or Partition()).check(model)
    params = model.check_params(params)
    rng = make_rng(rng)
    K = model.n_params
    ledger = ledger if ledger is not None else CommLedger()
    if K == 0:
        return GradientEstimate(np.zeros(0), "shots(0)", 0, ledger)
    betas = BetaVector.from_model(model).entries
    shots = hoeffding_shots(eps, delta, K, float(np.abs(betas).max()))
    g = np.zeros(K)
    for k in range(K):
        obs = grad_observable(model, k, "E_hat")
        state, _ = prepare_feature_state(model, partition, params, x, obs.target, CommLedger())
        plus = rng.binomial(shots, obs.prob_plus(state))
        g[k] = betas[k] * (2 * plus - shots) / shots / C_HAT
    charge_copies(ledger, model.n_layers, model.n_qubits + 1, shots * K)
    P = max(rotations_per_block(model), 1)
    ledger.add_counter(
        "k_theory", shadow_copies_theory(P, 2**model.n_qubits, model.n_layers, eps, delta)
    )
    return GradientEstimate(g, f"shots({shots})", shots, ledger)


def budget_ledger_cost(L: int, n: int, n_slots: int, shots: int) -> dict:
    """Closed-form ledger totals for one :func:`estimate_grad_budget` call."""
    copies = shots * n_slots
    return {"quantum_messages": copies * 2 * L, "qubits_sent": copies * 2 * L * (n + 1)}


# --------------------------------------------------------------------------
# Calibration


def calibrate(kind: str, n_instances: int = 20, rng=0, h: float = 1e-5) -> float:
    """Least-squares ratio <obs> / (dL/dtheta) (times beta for E_hat) against finite differences."""
    rng = make_rng(rng)
    num = den = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(1, 4))
        L = int(rng.integers(1, 3))
        P = int(rng.integers(1, 3))
        model, _ = preset_smooth(n, L, P, rng)
        x = random_unit_vector(2**n, rng)
        params = rng.uniform(-np.pi, np.pi, model.n_params)
        fd = grad_finite_diff(model, params, x, h).values
        for k in range(model.n_params):
            p = model.slot(k)
            if kind == "E":
                v, _ = expectation_E(model, None, params, x, k)
            elif kind == "E_hat":
                v, _ = expectation_E_hat(model, None, params, x, k)
                v *= p.coeff
            elif kind == "E_tilde":
                if p.side != "A" or p.layer != model.n_layers:
                    continue
                obs = fine_tune_observable(model, params, k, x)
                v = obs.expectation(fine_tune_state(model, params, x))
            else:
                raise ValidationError(f"unknown observable kind {kind!r}")
            num += v * fd[k]
            den += fd[k] ** 2
    return num / den
