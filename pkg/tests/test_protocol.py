import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import feature_branches

from distqml import StructuralError, ValidationError
from distqml.circuits import DataEncoderSpec, Layer, ModelSpec, loss, preset_smooth, random_unit_vector
from distqml.protocol import (
    ALICE,
    BOB,
    CommLedger,
    FeatureStateRequest,
    Partition,
    dataparallel_prepare,
    inference_cost,
    prepare_feature_state,
    privacy_report,
    run_inference,
    shuttle_pattern,
)
from distqml.statevec import IDENTITY, PauliString, StateVector, make_rng


def smooth(n, L, P, seed):
    rng = make_rng(seed)
    model, _ = preset_smooth(n, L, P, rng)
    return model, random_unit_vector(2**n, rng), rng.uniform(-np.pi, np.pi, model.n_params)


def test_inference_ledger_2400():
    model, x, params = smooth(4, 3, 2, 0)
    _, ledger = run_inference(model, None, x, 100, 1, params=params)
    assert ledger.qubits_sent == 2400
    assert ledger.quantum_messages == 600
    assert ledger.classical_bits == 0


def test_inference_ledger_by_event_count():
    model, x, params = smooth(4, 3, 2, 0)
    _, ledger = run_inference(model, None, x, 100, 1, params=params, trace=True)
    quantum = [e for e in ledger.events if e["event"] == "quantum"]
    assert len(quantum) == 600
    assert sum(e["width"] for e in quantum) == 2400
    # register goes Alice -> Bob before each B, Bob -> Alice before each A
    assert [e["speaker"] for e in quantum[:6]] == [ALICE, BOB] * 3


def test_inference_share_result():
    model, x, params = smooth(3, 2, 1, 2)
    _, ledger = run_inference(model, None, x, 50, 3, params=params, share_result=True)
    expected = inference_cost(2, 3, 50, share_result=True)
    assert ledger.classical_bits == 50
    assert (ledger.quantum_messages, ledger.qubits_sent) == (expected["quantum_messages"], expected["qubits_sent"])


def test_inference_eigenstate_zero_variance():
    model = ModelSpec(3, [Layer(IDENTITY, IDENTITY)], DataEncoderSpec("fixed_basis", 0))
    for seed in range(5):
        est, _ = run_inference(model, None, None, 37, seed)
        assert est == 1.0


def test_inference_concentration():
    hits = 0
    shots = 400
    for seed in range(100):
        model, x, params = smooth(3, 2, 2, 100 + seed)
        est, _ = run_inference(model, None, x, shots, seed, params=params)
        hits += abs(est - loss(model, params, x)) <= 4 / np.sqrt(shots)
    assert hits >= 95


def test_inference_rejects_zero_shots():
    model, x, params = smooth(2, 1, 1, 0)
    with pytest.raises(ValidationError):
        run_inference(model, None, x, 0, 0, params=params)


def test_nonstandard_partition_rejected():
    model, x, params = smooth(2, 1, 1, 0)
    with pytest.raises(ValidationError):
        run_inference(model, Partition({"A": BOB, "B": ALICE}), x, 1, 0, params=params)


def test_rounds_are_speaker_alternations():
    led = CommLedger()
    led.send_qubits(ALICE, 2)
    led.send_bits(ALICE, 1)
    led.send_qubits(BOB, 2)
    led.send_qubits(ALICE, 2)
    assert led.rounds == 3
    assert led.rounds <= led.quantum_messages + led.classical_messages


def test_unknown_speaker():
    with pytest.raises(StructuralError):
        CommLedger().send_bits("eve", 1)


patterns = st.lists(
    st.tuples(st.sampled_from([ALICE, BOB]), st.sampled_from(["quantum", "classical"]), st.integers(1, 9)),
    min_size=1,
    max_size=6,
)


@settings(max_examples=200, deadline=None)
@given(patterns, st.integers(0, 30), st.sampled_from([None, ALICE, BOB]))
def test_record_many_equals_expanded_sends(pattern, repeat, prior):
    fast, slow = CommLedger(), CommLedger()
    if prior:
        fast.send_bits(prior, 1)
        slow.send_bits(prior, 1)
    fast.record_many(pattern, repeat)
    for _ in range(repeat):
        for speaker, kind, width in pattern:
            (slow.send_qubits if kind == "quantum" else slow.send_bits)(speaker, width)
    assert fast.counts() == slow.counts()


def _random_ledger(seed):
    rng = make_rng(seed)
    led = CommLedger()
    for _ in range(int(rng.integers(0, 10))):
        speaker = ALICE if rng.random() < 0.5 else BOB
        if rng.random() < 0.5:
            led.send_qubits(speaker, int(rng.integers(1, 5)))
        else:
            led.send_bits(speaker, int(rng.integers(1, 5)))
    led.add_counter("k", int(rng.integers(0, 3)))
    return led


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
def test_merge_associative_commutative(a, b, c):
    la, lb, lc = (_random_ledger(s) for s in (a, b, c))
    assert la.merge(lb).to_dict() == lb.merge(la).to_dict()
    assert la.merge(lb).merge(lc).to_dict() == la.merge(lb.merge(lc)).to_dict()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_privacy_report_monotone_under_merge(a, b):
    la, lb = _random_ledger(a), _random_ledger(b)
    merged = privacy_report(la.merge(lb))
    assert merged >= max(privacy_report(la), privacy_report(lb))
    assert merged == privacy_report(la) + privacy_report(lb)


def test_privacy_report_values():
    assert privacy_report(CommLedger()) == 0
    model, x, params = smooth(4, 3, 2, 0)
    _, ledger = run_inference(model, None, x, 100, 1, params=params, share_result=True)
    assert privacy_report(ledger) == 2400 + ledger.classical_bits == 2500


def test_ledger_json_fields():
    led = CommLedger()
    led.record_many(shuttle_pattern(2, 3), 4)
    d = json.loads(json.dumps(led.to_dict()))
    for name in ("quantum_messages", "qubits_sent", "classical_bits", "rounds", "theoretical_counters"):
        assert name in d
    assert d["qubits_sent"] == 4 * 4 * 3


# --------------------------------------------------------------------------
# Feature states


def test_feature_state_identity_circuit():
    model = ModelSpec(1, [Layer(IDENTITY, IDENTITY)], DataEncoderSpec("fixed_basis", 0))
    state, _ = prepare_feature_state(model, None, [], None, FeatureStateRequest("A", 1, 0))
    expected = np.kron(np.ones(2) / np.sqrt(2), [1, 0])
    np.testing.assert_allclose(state.amps, expected, atol=1e-15)


def test_feature_state_branches_match_oracle():
    rng = make_rng(5)
    for _ in range(25):
        n, L, P = (int(v) for v in rng.integers(1, [5, 4, 4]))
        model, _ = preset_smooth(n, L, P, rng)
        x = random_unit_vector(2**n, rng)
        params = rng.uniform(-np.pi, np.pi, model.n_params)
        for side in ("A", "B"):
            for layer in range(1, L + 1):
                for cut in range(P + 1):
                    state, led = prepare_feature_state(model, None, params, x, FeatureStateRequest(side, layer, cut))
                    mu, nu = feature_branches(model, params, x, side, layer, cut)
                    h = 2**n
                    assert abs(state.norm() - 1) < 1e-12
                    np.testing.assert_allclose(np.sqrt(2) * state.amps[:h], mu, atol=1e-10)
                    np.testing.assert_allclose(np.sqrt(2) * state.amps[h:], nu, atol=1e-10)
                    assert led.quantum_messages == 2 * L
                    assert led.qubits_sent == 2 * L * (n + 1)


def test_feature_state_invalid_cut():
    model, x, params = smooth(2, 2, 2, 0)
    for req in (FeatureStateRequest("A", 1, 3), FeatureStateRequest("A", 3, 0), FeatureStateRequest("C", 1, 0)):
        with pytest.raises(ValidationError):
            prepare_feature_state(model, None, params, x, req)


# --------------------------------------------------------------------------
# Data parallel encoding


def test_dataparallel_random_split():
    rng = make_rng(6)
    for N1, N2 in [(2, 1), (4, 2), (8, 4), (16, 2)]:
        full = rng.normal(size=(N1, N2))
        full /= np.linalg.norm(full)
        x_A, x_B = full[: N1 // 2], full[N1 // 2 :]
        state, ledger = dataparallel_prepare(x_A, x_B)
        direct = StateVector.from_amplitudes(full.ravel())
        assert state.fidelity(direct) >= 1 - 1e-12
        assert ledger.quantum_messages == 1
        assert ledger.qubits_sent == int(np.log2(N1 * N2))
        assert ledger.classical_bits == 0


def test_dataparallel_zero_bob_block():
    x_A = np.array([[0.6, 0.8]])
    state, _ = dataparallel_prepare(x_A, np.zeros((1, 2)))
    np.testing.assert_allclose(state.amps, [0.6, 0.8, 0, 0])


def test_dataparallel_norm_checked():
    with pytest.raises(ValidationError):
        dataparallel_prepare(np.ones((1, 2)), np.ones((1, 2)))


def test_loss_obs_default_is_z0():
    model, _, _ = smooth(3, 1, 1, 0)
    assert model.loss_obs == PauliString("ZII")
