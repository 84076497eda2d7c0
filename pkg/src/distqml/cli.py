"""Command-line experiment runner.

Every experiment is described by a JSON config ``{"kind", "seed", "params",
"out_dir"}``. A run writes ``summary.json`` (results, ledger, seed and the
config echo), ``series.csv`` and ``events.log`` into the output directory.
Output is a pure function of the config: rerunning gives identical bytes.

    distqml list
    distqml run -c config.json
    distqml batch -l configs.txt
    distqml inference --seed 3 --set shots=500
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys

import jsonschema
import numpy as np

from . import baselines, circuits, expressivity, gradients, protocol, training
from .config import DistQMLError

# --------------------------------------------------------------------------
# Schemas

_INT = {"type": "integer"}
_POS_INT = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}
_UNIT = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_BOOL = {"type": "boolean"}


def _schema(props: dict, defaults: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "default": defaults}


PARAM_SCHEMAS = {
    "inference": _schema(
        {"n": _POS_INT, "L": _POS_INT, "P": _POS_INT, "shots": _POS_INT, "share_result": _BOOL},
        {"n": 4, "L": 3, "P": 2, "shots": 100, "share_result": False},
    ),
    "gradcheck": _schema(
        {"n": _POS_INT, "L": _POS_INT, "P": _POS_INT, "instances": _POS_INT, "h": _NUM},
        {"n": 3, "L": 2, "P": 2, "instances": 5, "h": 1e-5},
    ),
    "dpcd": _schema(
        {"theta0": _NUM, "eps0": _NUM, "T": _INT, "eta": _NUM, "runs": _POS_INT},
        {"theta0": math.pi - 0.5, "eps0": 0.1, "runs": 20},
    ),
    "stdgd": _schema(
        {"n": _POS_INT, "L": _POS_INT, "P": _POS_INT, "eta": _NUM, "T": _INT, "eps": _UNIT, "delta": _UNIT},
        {"n": 2, "L": 1, "P": 1, "eta": 0.2, "T": 10, "eps": 0.1, "delta": 0.05},
    ),
    "stdft": _schema(
        {"theta0": _NUM, "eps0": _NUM, "T": _INT, "eps": _UNIT, "delta": _UNIT},
        {"theta0": math.pi - 0.5, "eps0": 0.1, "eps": 0.1, "delta": 0.05},
    ),
    "linclass": _schema(
        {
            "N": {"type": "array", "items": _POS_INT, "minItems": 1},
            "gamma": {"type": "number", "minimum": 0, "maximum": 1},
            "trials": _POS_INT,
            "C": _NUM,
            "bits_per_coord": _POS_INT,
        },
        {"N": [512], "gamma": 0.2, "trials": 5, "C": 64.0, "bits_per_coord": 16},
    ),
    "spectrum": _schema(
        {"N": _POS_INT, "L": _POS_INT, "grid": _POS_INT},
        {"N": 4, "L": 2, "grid": 101},
    ),
    "seprank": _schema(
        {"N": _POS_INT, "L": _POS_INT, "grid": _POS_INT, "threshold": _NUM},
        {"N": 2, "L": 2, "grid": 64, "threshold": 1e-8},
    ),
    "universal": _schema(
        {
            "function": {"enum": ["triangle", "trig3"]},
            "M": {"type": "array", "items": _POS_INT, "minItems": 1},
            "grid": _POS_INT,
        },
        {"function": "triangle", "M": [8, 16, 32], "grid": 2000},
    ),
    "dataparallel": _schema(
        {"N1": _POS_INT, "N2": _POS_INT},
        {"N1": 4, "N2": 4},
    ),
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "params": {"type": "object"},
        "out_dir": {"type": "string"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}


class ConfigError(DistQMLError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def validate_config(cfg) -> dict:
    """Check a config against the schemas and fill defaults; returns a normalized copy."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError("invalid_config", exc.message) from None
    kind = cfg["kind"]
    if kind not in PARAM_SCHEMAS:
        raise ConfigError("unknown_kind", f"unknown experiment kind {kind!r}")
    params = cfg.get("params", {})
    try:
        jsonschema.validate(params, PARAM_SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        raise ConfigError("invalid_config", f"params: {exc.message}") from None
    full = dict(PARAM_SCHEMAS[kind]["default"])
    full.update(params)
    return {"kind": kind, "seed": int(cfg.get("seed", 0)), "params": full, "out_dir": cfg.get("out_dir", "out")}


def list_experiments() -> dict:
    return {
        kind: {"schema": copy.deepcopy(s), "fields": sorted(s["properties"]), "defaults": s["default"]}
        for kind, s in PARAM_SCHEMAS.items()
    }


# --------------------------------------------------------------------------
# Experiments. Each returns (results, ledger dict, series rows, events).


def _exp_inference(p, rng):
    model, _ = circuits.preset_smooth(p["n"], p["L"], p["P"], rng)
    x = circuits.random_unit_vector(2 ** p["n"], rng)
    params = rng.uniform(-math.pi, math.pi, model.n_params)
    est, ledger = protocol.run_inference(
        model, None, x, p["shots"], rng, params=params, share_result=p["share_result"], trace=True
    )
    exact = circuits.loss(model, params, x)
    results = {
        "estimate": est,
        "exact_loss": exact,
        "expected_ledger": protocol.inference_cost(p["L"], p["n"], p["shots"], p["share_result"]),
        "privacy_bits_bound": protocol.privacy_report(ledger),
        "holevo_bits_per_qubit": protocol.HOLEVO_BITS_PER_QUBIT,
    }
    return results, ledger, [], ledger.events


def _exp_gradcheck(p, rng):
    rows = []
    for i in range(p["instances"]):
        model, _ = circuits.preset_smooth(p["n"], p["L"], p["P"], rng)
        x = circuits.random_unit_vector(2 ** p["n"], rng)
        params = rng.uniform(-math.pi, math.pi, model.n_params)
        shift = gradients.grad_param_shift(model, params, x).values
        fd = gradients.grad_finite_diff(model, params, x, p["h"]).values
        e = np.array([gradients.expectation_E(model, None, params, x, k)[0] for k in range(model.n_params)])
        rows.append(
            {
                "instance": i,
                "max_shift_vs_fd": float(np.max(np.abs(shift - fd))),
                "max_E_vs_shift": float(np.max(np.abs(e / gradients.C_E - shift))),
            }
        )
    results = {
        "calibration": {"E": gradients.C_E, "E_hat": gradients.C_HAT, "E_tilde": gradients.C_TILDE},
        "max_shift_vs_fd": max(r["max_shift_vs_fd"] for r in rows),
        "max_E_vs_shift": max(r["max_E_vs_shift"] for r in rows),
    }
    return results, protocol.CommLedger(), rows, []


def _exp_dpcd(p, rng):
    model = circuits.preset_cos()
    theta_star = math.pi
    training.check_region([p["theta0"], theta_star])
    beta = circuits.BetaVector.from_model(model)
    R = abs(p["theta0"] - theta_star)
    T = p.get("T") or training.convergence_bounds(R, beta.norm1, p["eps0"])
    eta = p.get("eta") or training.convex_step(R, beta.norm1, T)
    subs, ledger, rows = [], protocol.CommLedger(), []
    for run_rng in _spawn(rng, p["runs"]):
        run = training.dpcd(model, None, [p["theta0"]], eta, T, run_rng)
        subs.append(circuits.loss(model, run.averaged()) + 1.0)
        ledger = ledger.merge(run.ledger)
        if not rows:
            rows = _trajectory_rows(run)
    results = {"T": T, "eta": eta, "R": R, "mean_suboptimality": float(np.mean(subs)), "suboptimality": subs}
    return results, ledger, rows, []


def _exp_stdgd(p, rng):
    model, _ = circuits.preset_smooth(p["n"], p["L"], p["P"], rng)
    x = circuits.random_unit_vector(2 ** p["n"], rng)
    params0 = rng.uniform(-math.pi, math.pi, model.n_params)
    run = training.stdgd(model, None, params0, p["eta"], p["T"], p["eps"], p["delta"], rng, x=x)
    results = {"initial_loss": run.losses[0], "final_loss": run.losses[-1], "losses": run.losses.tolist()}
    return results, run.ledger, _trajectory_rows(run), []


def _exp_stdft(p, rng):
    model = circuits.preset_cos()
    lam = math.cos(abs(p["theta0"] - math.pi))
    T = p.get("T") or training.convergence_bounds(1.0, 1.0, p["eps0"], "strongly_convex", lam)
    run = training.stdft(
        model, None, [p["theta0"]], training.strongly_convex_steps(lam, T), T, p["eps"], p["delta"], rng
    )
    results = {
        "T": T,
        "lambda": lam,
        "suboptimality": circuits.loss(model, run.averaged("linear")) + 1.0,
        "checkpoints": run.ledger.checkpoints,
    }
    return results, run.ledger, _trajectory_rows(run), []


def _exp_linclass(p, rng):
    rows, ledger = [], protocol.CommLedger()
    for N in p["N"]:
        ok = 0
        bits = None
        for _ in range(p["trials"]):
            label = int(rng.choice([-1, 1]))
            inst = baselines.gen_margin_instance(N, max(p["gamma"], 1e-12), label, rng)
            pred, led = baselines.classify_distributed(inst, p["gamma"], p["C"], p["bits_per_coord"], rng)
            ok += pred == inst.label
            bits = led.classical_bits
            ledger = ledger.merge(led)
        k = baselines.sketch_dim(p["gamma"], p["C"]) if p["gamma"] > 0 else N
        rows.append(
            {"N": N, "gamma": p["gamma"], "k": k, "bits": bits, "trials": p["trials"], "success_rate": ok / p["trials"]}
        )
    return {"rows": rows}, ledger, rows, []


def _exp_spectrum(p, rng):
    N, L = p["N"], p["L"]
    lam = rng.uniform(-3, 3, size=(L, N))
    table = expressivity.enumerate_spectrum(lam)
    model = circuits.preset_hadamard_ladder(N, L, lam)
    dev = expressivity.spectrum_vs_grid(model, table, np.linspace(0, 1, p["grid"]))
    row = {"N": N, "L": L, "predicted_count": expressivity.closed_form_count(N, L), "measured_count": len(table)}
    results = dict(row, grid_deviation=dev, frequencies=table.entries)
    return results, protocol.CommLedger(), [row], []


def _exp_seprank(p, rng):
    N, L = p["N"], p["L"]
    model = expressivity.two_variable_ladder(N, L, rng.uniform(-3, 3, size=(L, N)))
    grid = np.arange(p["grid"]) / p["grid"]
    rep = expressivity.separation_rank(model, grid, grid, p["threshold"])
    results = {
        "rank": rep.rank,
        "closed_form": expressivity.separation_rank_closed_form(N, L),
        "singular_values": rep.singular_values[: 2 * rep.rank + 2].tolist(),
    }
    return results, protocol.CommLedger(), [{"index": i, "singular_value": s} for i, s in enumerate(rep.singular_values)], []


def _trig3(x):
    x = np.asarray(x, dtype=float)
    return 0.3 + 0.2 * np.cos(2 * np.pi * x) - 0.1 * np.sin(4 * np.pi * x) + 0.4 * np.cos(6 * np.pi * x)


def _exp_universal(p, rng):
    f = expressivity.triangle_wave if p["function"] == "triangle" else _trig3
    errors = expressivity.universal_error_curve(f, p["M"], p["grid"])
    rows = [{"M": M, "sup_error": e} for M, e in zip(p["M"], errors)]
    results = {"errors": errors}
    if len(p["M"]) > 1 and min(errors) > 0:
        results["loglog_slope"] = expressivity.loglog_slope(p["M"], errors)
    return results, protocol.CommLedger(), rows, []


def _exp_dataparallel(p, rng):
    N1, N2 = p["N1"], p["N2"]
    x = rng.normal(size=(N1, N2))
    x /= np.linalg.norm(x)
    state, ledger = protocol.dataparallel_prepare(x[: N1 // 2], x[N1 // 2 :], trace=True)
    fidelity = abs(np.vdot(x.ravel(), state.amps)) ** 2
    return {"fidelity": fidelity, "register_qubits": state.n_qubits}, ledger, [], ledger.events


EXPERIMENTS = {
    "inference": _exp_inference,
    "gradcheck": _exp_gradcheck,
    "dpcd": _exp_dpcd,
    "stdgd": _exp_stdgd,
    "stdft": _exp_stdft,
    "linclass": _exp_linclass,
    "spectrum": _exp_spectrum,
    "seprank": _exp_seprank,
    "universal": _exp_universal,
    "dataparallel": _exp_dataparallel,
}


def _spawn(rng, n):
    return [np.random.default_rng(s) for s in rng.bit_generator.seed_seq.spawn(n)]


def _trajectory_rows(run):
    return [{"iteration": r["t"], "loss": r["loss"], "cumulative_qubits": r["qubits_sent"]} for r in run.trajectory]


# --------------------------------------------------------------------------
# Output


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def format_float(v: float) -> str:
    if math.isnan(v) or math.isinf(v):
        return json.dumps(str(v))
    s = "%.17g" % v
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with sorted keys and every float at 17 significant digits."""
    obj = _plain(obj) if _level == 0 else obj
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        return format_float(obj)
    return json.dumps(obj)


def _csv(rows) -> str:
    rows = _plain(rows)
    if not rows:
        return ""
    buf = io.StringIO()
    cols = list(rows[0])
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([format_float(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()


def execute(cfg: dict) -> dict:
    """Run a validated config and return the summary record (nothing written)."""
    rng = np.random.default_rng(cfg["seed"])
    results, ledger, rows, events = EXPERIMENTS[cfg["kind"]](cfg["params"], rng)
    return {
        "kind": cfg["kind"],
        "seed": cfg["seed"],
        "config": {k: v for k, v in cfg.items() if k != "out_dir"},
        "results": results,
        "ledger": ledger.to_dict(),
        "_series": rows,
        "_events": events,
    }


def run(cfg: dict, out_dir: str | None = None) -> dict:
    """Validate, execute and write summary.json, series.csv and events.log."""
    cfg = validate_config(cfg)
    if out_dir is not None:
        cfg["out_dir"] = out_dir
    summary = execute(cfg)
    rows, events = summary.pop("_series"), summary.pop("_events")
    os.makedirs(cfg["out_dir"], exist_ok=True)
    with open(os.path.join(cfg["out_dir"], "summary.json"), "w") as fh:
        fh.write(dumps(summary) + "\n")
    with open(os.path.join(cfg["out_dir"], "series.csv"), "w") as fh:
        fh.write(_csv(rows))
    with open(os.path.join(cfg["out_dir"], "events.log"), "w") as fh:
        for ev in events:
            fh.write(json.dumps(_plain(ev), sort_keys=True) + "\n")
    summary["artifacts"] = {
        name: os.path.join(cfg["out_dir"], name) for name in ("summary.json", "series.csv", "events.log")
    }
    return summary


# --------------------------------------------------------------------------
# Entry point


def _error(code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}, sort_keys=True) + "\n")
    return 2 if code in ("unknown_kind", "invalid_config", "invalid_json", "file_not_found") else 1


def _parse_set(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError("invalid_config", f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _load(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError("file_not_found", f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("invalid_json", f"{path}: {exc}") from None


def _apply_overrides(cfg, args):
    cfg = dict(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out_dir is not None:
        cfg["out_dir"] = args.out_dir
    overrides = _parse_set(getattr(args, "set", None))
    if overrides:
        cfg["params"] = dict(cfg.get("params", {}), **overrides)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distqml", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="print the experiment catalog as JSON")

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a parameter")

    p = sub.add_parser("run", help="run one JSON config")
    p.add_argument("-c", "--config", required=True)
    common(p)
    p = sub.add_parser("batch", help="run every config listed (one path per line) in a file")
    p.add_argument("-l", "--list", required=True)
    p.add_argument("--seed", type=int)
    for kind in PARAM_SCHEMAS:
        common(sub.add_parser(kind, help=f"run the {kind} experiment with default parameters"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            sys.stdout.write(dumps(list_experiments()) + "\n")
            return 0
        if args.command == "batch":
            with open(args.list) as fh:
                paths = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
            for path in paths:
                cfg = _load(path)
                if args.seed is not None:
                    cfg["seed"] = args.seed
                summary = run(cfg)
                sys.stdout.write(json.dumps({"config": path, "summary": summary["artifacts"]["summary.json"]}) + "\n")
            return 0
        if args.command == "run":
            cfg = _apply_overrides(_load(args.config), args)
        else:
            cfg = _apply_overrides({"kind": args.command}, args)
        summary = run(cfg)
        sys.stdout.write(summary["artifacts"]["summary.json"] + "\n")
        return 0
    except ConfigError as exc:
        return _error(exc.code, str(exc))
    except DistQMLError as exc:
        return _error("runtime_error", str(exc))
    except OSError as exc:
        return _error("io_error", str(exc))


if __name__ == "__main__":
    sys.exit(main())
