import json
import math

import numpy as np
import pytest

from distqml import PoolExhaustedError, ValidationError
from distqml.circuits import BetaVector, loss, preset_cos, preset_smooth, random_unit_vector
from distqml.gradients import grad_param_shift, hoeffding_shots
from distqml.protocol import SCALAR_BITS
from distqml.statevec import make_rng
from distqml.training import (
    AliasSampler,
    check_region,
    convergence_bounds,
    convex_report,
    convex_step,
    dpcd,
    dpcd_one_shot,
    stdft,
    stdft_pool_size,
    stdgd,
    strongly_convex_steps,
)


def smooth(n, L, P, seed):
    rng = make_rng(seed)
    model, beta = preset_smooth(n, L, P, rng)
    return model, beta, random_unit_vector(2**n, rng), rng.uniform(-np.pi, np.pi, model.n_params)


def test_alias_frequencies():
    w = np.array([0.05, 0.3, 0.0, 1.2, 0.45, 2.0])
    n = 1_000_000
    draws = AliasSampler(w).draw_many(make_rng(0), n)
    counts = np.bincount(draws, minlength=w.size)
    p = w / w.sum()
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 4 * sigma)
    assert counts[2] == 0


def test_alias_single_draw_agrees():
    s = AliasSampler([1.0, 3.0])
    rng = make_rng(1)
    draws = [s.draw(rng) for _ in range(20_000)]
    assert abs(np.mean(draws) - 0.75) < 4 * np.sqrt(0.75 * 0.25 / 20_000)


def test_alias_rejects_zero():
    with pytest.raises(ValidationError):
        AliasSampler([0.0, 0.0])


# --------------------------------------------------------------------------
# DPCD


def test_dpcd_zero_step_keeps_params():
    model, _, x, params = smooth(2, 2, 2, 2)
    run = dpcd(model, None, params, 0.0, 30, 3, x=x)
    assert len(run.trajectory) == 31
    for r in run.trajectory:
        np.testing.assert_array_equal(r["params"], params)
    assert np.all(run.losses == run.losses[0])


def test_dpcd_update_norm():
    model, beta, x, params = smooth(2, 2, 2, 4)
    run = dpcd(model, None, params, 0.05, 50, 5, x=x)
    for prev, cur in zip(run.trajectory, run.trajectory[1:]):
        step = cur["params"] - prev["params"]
        assert np.count_nonzero(step) == 1
        assert np.linalg.norm(step) == pytest.approx(0.05 * beta.norm1, rel=1e-12)


def test_dpcd_ledger_closed_form():
    model, _, x, params = smooth(3, 2, 2, 6)
    T = 40
    run = dpcd(model, None, params, 0.01, T, 7, x=x)
    L, n = 2, 3
    assert run.ledger.classical_bits == SCALAR_BITS + T
    assert run.ledger.quantum_messages == T * 2 * L
    assert run.ledger.qubits_sent == T * 2 * L * (n + 1)
    qubits = [r["qubits_sent"] for r in run.trajectory]
    assert qubits == sorted(qubits)


def test_dpcd_slot_frequency_proportional_to_beta():
    model, beta, x, params = smooth(2, 2, 2, 8)
    n = 100_000
    run = dpcd(model, None, params, 0.0, n, 9, x=x)
    counts = np.bincount([r["update"]["slot"] for r in run.trajectory[1:]], minlength=model.n_params)
    p = np.abs(beta.entries) / beta.norm1
    assert np.all(np.abs(counts - n * p) <= 4 * np.sqrt(n * p * (1 - p)))


def test_dpcd_one_shot_unbiased():
    model, beta, x, params = smooth(2, 2, 2, 10)
    n = 100_000
    slots, values = dpcd_one_shot(model, params, x, n, 11)
    dense = np.zeros((model.n_params,))
    np.add.at(dense, slots, values)
    mean = dense / n
    exact = grad_param_shift(model, params, x).values
    # each coordinate of a one-shot estimate takes values in {0, +-||beta||_1}
    second = np.zeros(model.n_params)
    np.add.at(second, slots, values**2)
    sigma = np.sqrt((second / n - mean**2) / n)
    assert np.all(np.abs(mean - exact) <= 4 * sigma)


def test_dpcd_requires_beta():
    model, _, x, params = smooth(1, 1, 1, 12)
    with pytest.raises(ValidationError):
        dpcd(model, None, params, 0.1, 1, 0, beta=None, x=x)


def test_dpcd_cos_convergence():
    model = preset_cos()
    theta0 = np.pi - 0.5
    check_region([theta0, np.pi])
    report = convex_report([theta0], [np.pi], BetaVector.from_model(model), 0.1)
    assert report.T_bound == 50
    eta = convex_step(report.R, report.beta_norm1, report.T_bound)
    subs = [
        loss(model, dpcd(model, None, [theta0], eta, report.T_bound, seed).averaged()) + 1 for seed in range(20)
    ]
    assert np.mean(subs) <= 0.2


def test_dpcd_schedule_length_checked():
    with pytest.raises(ValidationError):
        dpcd(preset_cos(), None, [0.0], [0.1, 0.2], 3, 0)


def test_train_run_exports():
    run = dpcd(preset_cos(), None, [2.0], 0.1, 5, 0, trace=True)
    lines = run.to_jsonl().splitlines()
    assert len(lines) == 6
    assert json.loads(lines[-1])["iteration"] == 5
    csv_rows = run.to_csv().splitlines()
    assert csv_rows[0] == "iteration,loss,cumulative_qubits"
    assert len(csv_rows) == 7


# --------------------------------------------------------------------------
# STDGD


def test_stdgd_zero_iterations():
    model, _, x, params = smooth(2, 1, 2, 13)
    run = stdgd(model, None, params, 0.1, 0, 0.1, 0.05, 0, x=x)
    np.testing.assert_array_equal(run.params, params)
    assert run.ledger.counts() == (0, 0, 0, 0, 0)


def test_stdgd_exact_matches_reference_descent():
    model, _, x, params = smooth(2, 2, 2, 14)
    eta, T = 0.1, 15
    run = stdgd(model, None, params, eta, T, 0.1, 0.05, 0, x=x, exact=True)
    ref = params.copy()
    for t in range(T):
        ref = ref - eta * grad_param_shift(model, ref, x).values
        np.testing.assert_array_equal(run.trajectory[t + 1]["params"], ref)


def test_stdgd_ledger_is_T_times_one_step():
    model, _, x, params = smooth(2, 2, 1, 15)
    T = 3
    run = stdgd(model, None, params, 0.1, T, 0.2, 0.1, 0, x=x)
    shots = hoeffding_shots(0.2, 0.1, model.n_params)
    assert run.ledger.qubits_sent == T * shots * model.n_params * 2 * 2 * 3
    assert run.ledger.quantum_messages == T * shots * model.n_params * 2 * 2


def test_stdgd_monotone_on_convex_toy():
    model = preset_cos()
    decreasing = total = 0
    for seed in range(10):
        run = stdgd(model, None, [np.pi - 0.5], 0.2, 10, 0.01, 0.05, seed)
        check_region(np.array([r["params"][0] for r in run.trajectory]))
        d = np.diff(run.losses)
        decreasing += int(np.sum(d < 0))
        total += d.size
    assert decreasing >= 0.9 * total


# --------------------------------------------------------------------------
# STDFT


def test_stdft_pool_size():
    per, total = stdft_pool_size(3, 5, 0.1, 0.05)
    assert per == math.ceil(2 * math.log(4 * 3 * 5 / 0.05) / 0.01)
    assert total == per * 15
    assert stdft_pool_size(3, 0, 0.1, 0.05) == (0, 0)


def test_stdft_communication_before_first_step():
    model, _, x, params = smooth(2, 2, 2, 16)
    frozen = params.copy()
    run = stdft(model, None, params[-2:], 0.1, 4, 0.2, 0.1, 0, x=x, frozen=frozen)
    cps = run.ledger.checkpoints
    assert cps[0]["label"] == "pool_ready"
    assert all(c["qubits_sent"] == cps[0]["qubits_sent"] for c in cps)
    per, total = stdft_pool_size(2, 4, 0.2, 0.1)
    assert run.ledger.qubits_sent == total * 2 * 2 * 2
    assert run.trajectory[-1]["update"]["pool_left"] == 0
    # trunk stays frozen
    np.testing.assert_array_equal(run.params[:-2], frozen[:-2])


def test_stdft_zero_steps():
    run = stdft(preset_cos(), None, [2.5], 0.1, 0, 0.1, 0.05, 0)
    assert run.ledger.qubits_sent == 0
    assert len(run.trajectory) == 1


def test_stdft_pool_exhausted():
    with pytest.raises(PoolExhaustedError):
        stdft(preset_cos(), None, [2.5], 0.1, 3, 0.1, 0.05, 0, pool_size=100)


def test_stdft_rejects_wrong_length():
    with pytest.raises(ValidationError):
        stdft(preset_cos(), None, [2.5, 1.0], 0.1, 3, 0.1, 0.05, 0)


def test_stdft_cos_convergence():
    model = preset_cos()
    theta0 = np.pi - 0.5
    check_region([theta0, np.pi])
    # cos is lam-strongly convex on the interval between theta0 and pi with lam = cos(0.5)
    lam = math.cos(0.5)
    T = convergence_bounds(1.0, 1.0, 0.1, "strongly_convex", lam)
    subs = []
    for seed in range(20):
        run = stdft(model, None, [theta0], strongly_convex_steps(lam, T), T, 0.1, 0.05, seed)
        subs.append(loss(model, run.averaged("linear")) + 1)
    assert np.mean(subs) <= 0.2


# --------------------------------------------------------------------------
# Bounds


def test_convergence_bound_examples():
    assert convergence_bounds(1, 2, 0.1) == 800
    assert convergence_bounds(1, 1, 0.5, "strongly_convex", 1) == 5
    assert convergence_bounds(1, 2, 0.05) == 4 * 800


def test_convergence_bound_errors():
    for args in ((0, 1, 0.1), (1, 0, 0.1), (1, 1, -0.1)):
        with pytest.raises(ValidationError):
            convergence_bounds(*args)
    with pytest.raises(ValidationError):
        convergence_bounds(1, 1, 0.1, "strongly_convex", 0)


def test_region_check():
    with pytest.raises(ValidationError):
        check_region([0.5])
