"""Distributed training loops and the bounds that size them.

* :func:`dpcd` samples one coordinate per step with probability |beta|/||beta||_1
  and moves it by a single +-1 measurement of the involutive gradient
  observable.
* :func:`stdgd` takes full gradient steps from the shot-budget estimator.
* :func:`stdft` fine-tunes only the last A layer from a pool of state copies
  that is shipped once, before the first step.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .circuits import BetaVector, ModelSpec, loss
from .config import PoolExhaustedError, ValidationError
from .gradients import (
    C_HAT,
    C_TILDE,
    estimate_grad_budget,
    fine_tune_observable,
    fine_tune_state,
    grad_observable,
    grad_param_shift,
    hoeffding_shots,
)
from .protocol import ALICE, BOB, SCALAR_BITS, CommLedger, Partition, prepare_feature_state, shuttle_pattern
from .statevec import make_rng, sample_observable


class AliasSampler:
    """Walker/Vose alias table: O(n) build, O(1) draws proportional to ``weights``."""

    def __init__(self, weights):
        w = np.abs(np.asarray(weights, dtype=float).ravel())
        n = w.size
        if n == 0 or w.sum() <= 0:
            raise ValidationError("alias sampler needs at least one positive weight")
        self.n = n
        self.probs = w / w.sum()
        scaled = self.probs * n
        self.prob = np.zeros(n)
        self.alias = np.zeros(n, dtype=int)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] = scaled[l] + scaled[s] - 1.0
            (small if scaled[l] < 1.0 else large).append(l)
        for i in large + small:
            self.prob[i] = 1.0
            self.alias[i] = i

    def draw(self, rng) -> int:
        rng = make_rng(rng)
        i = int(rng.integers(self.n))
        return i if rng.random() < self.prob[i] else int(self.alias[i])

    def draw_many(self, rng, size: int) -> np.ndarray:
        rng = make_rng(rng)
        i = rng.integers(self.n, size=size)
        keep = rng.random(size) < self.prob[i]
        return np.where(keep, i, self.alias[i])


# --------------------------------------------------------------------------
# Runs


@dataclass
class TrainRun:
    trajectory: list
    ledger: CommLedger
    seed: object = None
    schedule: list = field(default_factory=list)

    @property
    def params(self) -> np.ndarray:
        return self.trajectory[-1]["params"]

    @property
    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.trajectory])

    def averaged(self, weighting: str = "uniform") -> np.ndarray:
        """Averaged iterate over steps 1..T: uniform, or weighted 2t/(T(T+1))."""
        its = np.array([r["params"] for r in self.trajectory[1:]])
        T = len(its)
        if T == 0:
            return self.trajectory[0]["params"]
        if weighting == "uniform":
            return its.mean(axis=0)
        if weighting == "linear":
            w = 2 * np.arange(1, T + 1) / (T * (T + 1))
            return w @ its
        raise ValidationError(f"unknown weighting {weighting!r}")

    def records(self) -> list:
        return [
            {
                "iteration": r["t"],
                "params": [float(v) for v in r["params"]],
                "loss": float(r["loss"]),
                "update": r["update"],
                "qubits_sent": r["qubits_sent"],
            }
            for r in self.trajectory
        ]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.records())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "loss", "cumulative_qubits"])
        for r in self.trajectory:
            w.writerow([r["t"], repr(float(r["loss"])), r["qubits_sent"]])
        return buf.getvalue()


def _schedule(eta, T: int) -> list:
    if callable(eta):
        return [float(eta(t)) for t in range(1, T + 1)]
    arr = np.atleast_1d(np.asarray(eta, dtype=float))
    if arr.size == 1:
        return [float(arr[0])] * T
    if arr.size != T:
        raise ValidationError(f"schedule has {arr.size} entries, expected {T}")
    return [float(v) for v in arr]


def _record(t, params, value, update, ledger):
    return {"t": t, "params": params.copy(), "loss": value, "update": update, "qubits_sent": ledger.qubits_sent}


# --------------------------------------------------------------------------
# Probabilistic coordinate descent


class _EhatCache:
    """Exact <E_hat> per slot, recomputed only after the parameters move."""

    def __init__(self, model, partition, x):
        self.model, self.partition, self.x = model, partition, x
        self.params = None
        self.values = {}

    def prob_plus(self, params, k):
        if self.params is None or not np.array_equal(params, self.params):
            self.params = params.copy()
            self.values = {}
        if k not in self.values:
            obs = grad_observable(self.model, k, "E_hat")
            state, _ = prepare_feature_state(self.model, self.partition, params, self.x, obs.target, CommLedger())
            self.values[k] = obs.prob_plus(state)
        return self.values[k]


def _side_samplers(beta: BetaVector):
    out = {}
    for side in ("A", "B"):
        idx = np.array([k for k, s in enumerate(beta.sides) if s == side], dtype=int)
        if idx.size and np.abs(beta.entries[idx]).sum() > 0:
            out[side] = (idx, AliasSampler(beta.entries[idx]))
    return out


def _check_beta(model, beta):
    if beta is None:
        raise ValidationError("coordinate descent needs the rotation coefficient vector")
    if len(beta) != model.n_params or beta.norm1 <= 0:
        raise ValidationError("coefficient vector does not match the model or is zero")
    if not beta.sides:
        beta = BetaVector(beta.entries, [p.side for p in model.param_layout])
    return beta


def dpcd(model, partition, params0, schedule, T, rng, beta="model", x=None, trace=False) -> TrainRun:
    """Coordinate descent with one +-1 measurement per step.

    Bob flips the side with probability ||beta_A||_1/||beta||_1 (1 bit), the
    owner draws a slot from its alias table, the feature state for that slot
    is prepared (one copy) and E_hat is measured once. The step
    -eta * sign(beta) * ||beta||_1 * m / C_HAT is an unbiased gradient step.
    """
    (partition or Partition()).check(model)
    beta = _check_beta(model, BetaVector.from_model(model) if beta == "model" else beta)
    rng = make_rng(rng)
    params = model.check_params(params0).copy()
    etas = _schedule(schedule, T)
    norm1 = beta.norm1
    p_alice = beta.side_norm1("A") / norm1
    samplers = _side_samplers(beta)
    cache = _EhatCache(model, partition, x)

    ledger = CommLedger(trace=trace)
    ledger.send_bits(ALICE, SCALAR_BITS)  # ||beta_A||_1 to Bob
    step_pattern = [(BOB, "classical", 1)] + shuttle_pattern(model.n_layers, model.n_qubits + 1)

    value = loss(model, params, x)
    traj = [_record(0, params, value, None, ledger)]
    for t in range(1, T + 1):
        side = "A" if rng.random() < p_alice else "B"
        idx, sampler = samplers[side]
        k = int(idx[sampler.draw(rng)])
        m = 1 if rng.random() < cache.prob_plus(params, k) else -1
        ledger.record_many(step_pattern, 1)
        delta = -etas[t - 1] * np.sign(beta.entries[k]) * norm1 * m / C_HAT
        if delta != 0:
            params[k] += delta
            value = loss(model, params, x)
        traj.append(_record(t, params, value, {"slot": k, "side": side, "m": m, "delta": float(delta)}, ledger))
    return TrainRun(traj, ledger, None, etas)


def dpcd_one_shot(model, params, x, n_samples, rng, beta="model"):
    """``n_samples`` independent sparse one-shot gradient estimates at fixed params.

    Returns ``(slots, values)``; the estimate for draw i is ``values[i]`` on
    coordinate ``slots[i]`` and zero elsewhere.
    """
    beta = _check_beta(model, BetaVector.from_model(model) if beta == "model" else beta)
    rng = make_rng(rng)
    params = model.check_params(params)
    samplers = _side_samplers(beta)
    p_alice = beta.side_norm1("A") / beta.norm1
    cache = _EhatCache(model, None, x)
    probs = np.array([cache.prob_plus(params, k) for k in range(model.n_params)])

    on_alice = rng.random(n_samples) < p_alice
    slots = np.empty(n_samples, dtype=int)
    for side, mask in (("A", on_alice), ("B", ~on_alice)):
        cnt = int(mask.sum())
        if cnt:
            idx, sampler = samplers[side]
            slots[mask] = idx[sampler.draw_many(rng, cnt)]
    m = np.where(rng.random(n_samples) < probs[slots], 1.0, -1.0)
    values = np.sign(beta.entries[slots]) * beta.norm1 * m / C_HAT
    return slots, values


# --------------------------------------------------------------------------
# Full-gradient descent


def stdgd(model, partition, params0, eta, T, eps, delta, rng, x=None, exact=False) -> TrainRun:
    """Gradient descent on budget-estimated gradients (or exact shift-rule gradients if ``exact``)."""
    (partition or Partition()).check(model)
    rng = make_rng(rng)
    params = model.check_params(params0).copy()
    etas = _schedule(eta, T)
    ledger = CommLedger()
    traj = [_record(0, params, loss(model, params, x), None, ledger)]
    for t in range(1, T + 1):
        if exact:
            g = grad_param_shift(model, params, x).values
        else:
            g = estimate_grad_budget(model, partition, params, x, eps, delta, rng, ledger).values
        params = params - etas[t - 1] * g
        traj.append(_record(t, params, loss(model, params, x), {"grad": [float(v) for v in g]}, ledger))
    return TrainRun(traj, ledger, None, etas)


# --------------------------------------------------------------------------
# Fine-tuning from a state pool


def last_layer_slots(model: ModelSpec) -> list:
    return [p.slot for p in model.param_layout if p.side == "A" and p.layer == model.n_layers]


def stdft_pool_size(P: int, T: int, eps: float, delta: float, beta_max: float = 1.0) -> tuple:
    """(copies per observable estimate, total pool size) for P observables over T steps."""
    if T == 0:
        return 0, 0
    per = hoeffding_shots(eps, delta, 2 * P * T, beta_max)
    return per, per * P * T


def stdft(model, partition, params0, eta, T, eps, delta, rng, x=None, frozen=None, pool_size=None) -> TrainRun:
    """Fine-tune the last A layer using only copies of |+>|mu_L> shipped up front.

    ``params0`` holds the last-layer A parameters; every other slot keeps
    its value from ``frozen`` (a full parameter vector, default zeros).
    Each step estimates all last-layer gradients from fresh pool copies by
    measuring E_tilde and then updates. Running out of copies raises
    :class:`PoolExhaustedError`.
    """
    (partition or Partition()).check(model)
    rng = make_rng(rng)
    slots = last_layer_slots(model)
    if not slots:
        raise ValidationError("the last A layer has no trainable rotations")
    if len(slots) != model.n_params and frozen is None:
        frozen = np.zeros(model.n_params)
    params = np.zeros(model.n_params) if frozen is None else model.check_params(frozen).copy()
    theta0 = np.asarray(params0, dtype=float).ravel()
    if theta0.size != len(slots):
        raise ValidationError(f"expected {len(slots)} last-layer parameters, got {theta0.size}")
    params[slots] = theta0
    etas = _schedule(eta, T)
    P = len(slots)
    beta_max = max(abs(model.slot(k).coeff) for k in slots)
    per, default_pool = stdft_pool_size(P, T, eps, delta, beta_max)
    pool = default_pool if pool_size is None else int(pool_size)

    ledger = CommLedger()
    # each copy of mu_L passes through B_1..B_L: 2L register messages of n qubits
    ledger.record_many(shuttle_pattern(model.n_layers, model.n_qubits), pool)
    ledger.mark("pool_ready")
    remaining = pool
    # the trunk is frozen, so mu_L and the pool state never change
    state = fine_tune_state(model, params, x)

    traj = [_record(0, params, loss(model, params, x), None, ledger)]
    for t in range(1, T + 1):
        g = np.zeros(P)
        for i, k in enumerate(slots):
            if remaining < per:
                raise PoolExhaustedError(f"pool exhausted at step {t}: {remaining} copies left, {per} needed")
            remaining -= per
            obs = fine_tune_observable(model, params, k, x)
            outcomes = sample_observable(state, obs.matrix(), rng, per)
            g[i] = outcomes.mean() / C_TILDE
        params[slots] = params[slots] - etas[t - 1] * g
        ledger.mark(f"step_{t}")
        traj.append(
            _record(t, params, loss(model, params, x), {"grad": [float(v) for v in g], "pool_left": remaining}, ledger)
        )
    return TrainRun(traj, ledger, None, etas)


# --------------------------------------------------------------------------
# Bounds


@dataclass(frozen=True)
class ConvexInstanceReport:
    R: float
    beta_norm1: float
    eps0: float
    T_bound: int


def _ceil(v: float) -> int:
    # rounding first keeps 799.9999999 from becoming 800 by accident of float error
    return math.ceil(round(v, 9))


def convergence_bounds(R, G, eps0, mode: str = "convex", lam=None) -> int:
    """Iterations needed for expected suboptimality eps0.

    convex: ceil(2 R^2 G^2 / eps0^2); strongly convex: ceil(2 G^2 / (lam eps0)) + 1.
    """
    if G <= 0 or eps0 <= 0:
        raise ValidationError("G and eps0 must be positive")
    if mode == "convex":
        if R <= 0:
            raise ValidationError("R must be positive")
        return _ceil(2 * R**2 * G**2 / eps0**2)
    if mode == "strongly_convex":
        if lam is None or lam <= 0:
            raise ValidationError("strong convexity needs lam > 0")
        return _ceil(2 * G**2 / (lam * eps0)) + 1
    raise ValidationError(f"unknown mode {mode!r}")


def convex_step(R, G, T) -> float:
    return R / G * math.sqrt(2 / T)


def strongly_convex_steps(lam, T) -> list:
    return [2 / (lam * (t + 1)) for t in range(1, T + 1)]


def convex_report(params0, params_star, beta: BetaVector, eps0) -> ConvexInstanceReport:
    R = float(np.linalg.norm(np.asarray(params0) - np.asarray(params_star)))
    return ConvexInstanceReport(R, beta.norm1, eps0, convergence_bounds(R, beta.norm1, eps0))


# cos(theta) is convex on this interval (second derivative -cos >= sin 0.1)
COS_CONVEX_REGION = (np.pi / 2 + 0.1, 3 * np.pi / 2 - 0.1)


def check_region(theta, region=COS_CONVEX_REGION):
    theta = np.atleast_1d(theta)
    if np.any(theta < region[0]) or np.any(theta > region[1]):
        raise ValidationError(f"{theta} lies outside the certified convex region {region}")
