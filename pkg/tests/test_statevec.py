import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distqml import StructuralError, ValidationError
from distqml.statevec import (
    HADAMARD,
    AncillaControlled,
    DenseMatrix,
    DiagonalPhase,
    PauliRotation,
    PauliString,
    Permutation,
    Product,
    StateVector,
    adjoint,
    apply,
    expectation,
    make_rng,
    prob_plus,
    sample_pm,
    sample_pm_counts,
    split_rng,
    to_matrix,
)

SQ2 = np.sqrt(2)


def plus(n=1):
    return StateVector.from_amplitudes(np.ones(2**n), normalize=True)


def test_x_flips_zero():
    out = apply(StateVector.basis(1, 0), PauliString("X"))
    np.testing.assert_allclose(out.amps, [0, 1])


def test_hadamard_on_zero():
    out = apply(StateVector.basis(1, 0), DenseMatrix(HADAMARD, (0,)))
    np.testing.assert_allclose(out.amps, [1 / SQ2, 1 / SQ2], atol=1e-15)


def test_z_rotation_matches_explicit_matrix():
    rot = PauliRotation(PauliString("Z"), 1.0, 0)
    out = apply(plus(), rot, [np.pi / 2])
    m = np.array([[np.exp(-1j * np.pi / 4), 0], [0, np.exp(1j * np.pi / 4)]])
    np.testing.assert_allclose(out.amps, m @ (np.ones(2) / SQ2), atol=1e-15)
    np.testing.assert_allclose(out.amps, np.array([np.exp(-1j * np.pi / 4), np.exp(1j * np.pi / 4)]) / SQ2)


def test_qubit_zero_is_most_significant():
    # X on qubit 0 of |00> gives |10>, index 2
    out = apply(StateVector.basis(2, 0), PauliString("XI"))
    assert np.argmax(np.abs(out.amps)) == 2


def test_expectation_basics():
    assert expectation(StateVector.basis(1, 0), PauliString("Z")) == pytest.approx(1.0)
    assert expectation(plus(), PauliString("Z")) == pytest.approx(0.0, abs=1e-15)


def test_expectation_z0_amplitude_partition():
    s = StateVector.random(3, 7)
    p = np.abs(s.amps) ** 2
    direct = p[:4].sum() - p[4:].sum()
    assert expectation(s, PauliString("ZII")) == pytest.approx(direct, abs=1e-14)


def test_expectation_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        expectation(StateVector.basis(1, 0), np.array([[0, 1], [0, 0]]))


def test_dense_non_unitary_rejected():
    with pytest.raises(ValidationError):
        DenseMatrix(np.array([[1, 1], [0, 1]]), (0,))


def test_dimension_mismatch_is_structural():
    with pytest.raises(StructuralError):
        DenseMatrix(np.eye(4), (0,))
    with pytest.raises(StructuralError):
        apply(StateVector.basis(2, 0), DenseMatrix(np.eye(2), (3,)))


def test_sample_pm_eigenstates():
    rng = make_rng(0)
    assert all(sample_pm(StateVector.basis(1, 0), PauliString("Z"), rng) == 1 for _ in range(100))
    assert all(sample_pm(plus(), PauliString("X"), rng) == 1 for _ in range(100))


def test_sample_pm_plus_state_frequency():
    rng = make_rng(1)
    draws = np.array([sample_pm(plus(), PauliString("Z"), rng) for _ in range(100_000)])
    assert abs(np.mean(draws == 1) - 0.5) <= 0.005


def test_sample_pm_deterministic_given_seed():
    s = StateVector.random(2, 3)
    a = [sample_pm(s, PauliString("XZ"), r) for r in split_rng(make_rng(5), 20)]
    b = [sample_pm(s, PauliString("XZ"), r) for r in split_rng(make_rng(5), 20)]
    assert a == b


def test_sample_pm_mean_matches_expectation():
    s = StateVector.random(3, 11)
    obs = PauliString("XYZ")
    plus_count = sample_pm_counts(s, obs, make_rng(2), 100_000)
    mean = (2 * plus_count - 100_000) / 100_000
    assert abs(mean - expectation(s, obs)) <= 2 * 4 / np.sqrt(100_000)


def test_sample_pm_rejects_non_involution():
    with pytest.raises(ValidationError):
        prob_plus(plus(), np.diag([1.0, 0.5]))


def test_pauli_involution_on_random_states():
    rng = make_rng(4)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        labels = "".join(rng.choice(list("IXYZ"), size=n))
        s = StateVector.random(n, rng)
        p = PauliString(labels)
        np.testing.assert_allclose(apply(apply(s, p), p).amps, s.amps, atol=1e-12)


def test_pauli_matrix_is_hermitian_unitary():
    m = PauliString("XYZ").matrix()
    np.testing.assert_allclose(m, m.conj().T)
    np.testing.assert_allclose(m @ m, np.eye(8), atol=1e-15)


# --------------------------------------------------------------------------
# Random unitary descriptions for property tests


def _haar(k, rng):
    z = rng.normal(size=(2**k, 2**k)) + 1j * rng.normal(size=(2**k, 2**k))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_spec(n, rng, depth=0):
    kind = int(rng.integers(0, 6 if depth < 2 else 5))
    if kind == 0:
        labels = "".join(rng.choice(list("IXYZ"), size=n))
        return PauliRotation(PauliString(labels), float(rng.uniform(-1, 1)), 0)
    if kind == 1:
        k = int(rng.integers(1, min(n, 3) + 1))
        qubits = tuple(rng.choice(n, size=k, replace=False).tolist())
        return DenseMatrix(_haar(k, rng), qubits)
    if kind == 2:
        return DiagonalPhase(rng.uniform(-np.pi, np.pi, 2**n))
    if kind == 3:
        return Permutation(rng.permutation(2**n))
    if kind == 4 and n > 1:
        return AncillaControlled(random_spec(n - 1, rng, depth + 1), int(rng.integers(0, n)), int(rng.integers(0, 2)))
    return Product([random_spec(n, rng, depth + 1) for _ in range(2)])


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_norm_preserved(n, seed):
    rng = np.random.default_rng(seed)
    s = StateVector.random(n, rng)
    u = random_spec(n, rng)
    out = apply(s, u, [rng.uniform(-np.pi, np.pi)])
    assert abs(out.norm() - 1) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_apply_then_adjoint_is_identity(n, seed):
    rng = np.random.default_rng(seed)
    s = StateVector.random(n, rng)
    u = random_spec(n, rng)
    params = [rng.uniform(-np.pi, np.pi)]
    back = apply(apply(s, u, params), adjoint(u), params)
    np.testing.assert_allclose(back.amps, s.amps, atol=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_pauli_expectation_real_and_bounded(n, seed):
    rng = np.random.default_rng(seed)
    labels = "".join(rng.choice(list("IXYZ"), size=n))
    val = expectation(StateVector.random(n, rng), PauliString(labels))
    assert -1 - 1e-12 <= val <= 1 + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_realized_matrix_unitary(n, seed):
    rng = np.random.default_rng(seed)
    m = to_matrix(random_spec(n, rng), n, [0.3])
    np.testing.assert_allclose(m.conj().T @ m, np.eye(2**n), atol=1e-10)


def test_reduced_density_matrix_of_product():
    s = plus().tensor(StateVector.basis(1, 1))
    rho = s.reduced_density_matrix([0])
    np.testing.assert_allclose(rho, 0.5 * np.ones((2, 2)), atol=1e-15)


def test_from_amplitudes_checks_norm():
    with pytest.raises(ValidationError):
        StateVector.from_amplitudes([1.0, 1.0])
