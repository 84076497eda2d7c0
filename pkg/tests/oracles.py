"""Independent dense-matrix evaluations used as test oracles."""

from functools import reduce

import numpy as np

from distqml.circuits import encode

PAULI = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]]),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1, -1]),
}


def kron_pauli(labels):
    return reduce(np.kron, [PAULI[c] for c in labels]).astype(complex)


def rotation(labels, angle):
    return np.cos(angle / 2) * np.eye(2 ** len(labels)) - 1j * np.sin(angle / 2) * kron_pauli(labels)


def gate_list(model):
    """(side, layer, index, matrix-builder) for a smooth model, in application order."""
    out = []
    for ell, layer in enumerate(model.layers, start=1):
        for side, u in (("B", layer.b), ("A", layer.a)):
            for j, rot in enumerate(u.ops):
                out.append((side, ell, j, rot))
    return out


def dense_chain(model, params, x):
    """Ordered product of explicit rotation matrices, B before A in each layer."""
    state = encode(model.encoder, model.n_qubits, x).amps
    for *_, rot in gate_list(model):
        state = rotation(rot.pauli.labels, rot.coeff * params[rot.slot]) @ state
    return state


def split_at(model, side, layer, cut):
    """Gates before and after the cut (cut counts rotations inside the block)."""
    gates = gate_list(model)
    order = {("B", l): 2 * l - 1 for l in range(1, model.n_layers + 1)}
    order.update({("A", l): 2 * l for l in range(1, model.n_layers + 1)})
    key = (order[(side, layer)], cut)
    before = [g for g in gates if (order[(g[0], g[1])], g[2]) < key]
    after = [g for g in gates if (order[(g[0], g[1])], g[2]) >= key]
    return before, after


def feature_branches(model, params, x, side, layer, cut):
    """(mu, nu0) by explicit matrix products."""
    before, after = split_at(model, side, layer, cut)
    n = model.n_qubits
    U_before = np.eye(2**n, dtype=complex)
    for *_, rot in before:
        U_before = rotation(rot.pauli.labels, rot.coeff * params[rot.slot]) @ U_before
    U_after = np.eye(2**n, dtype=complex)
    for *_, rot in after:
        U_after = rotation(rot.pauli.labels, rot.coeff * params[rot.slot]) @ U_after
    psi = encode(model.encoder, n, x).amps
    mu = U_before @ psi
    nu = U_after.conj().T @ kron_pauli(model.loss_obs.labels) @ U_after @ mu
    return mu, nu
