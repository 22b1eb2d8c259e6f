"""Command-line interface: run, sweep, verify and bound subcommands.

Configs are JSON documents validated against strict schemas (unknown keys
are rejected with the offending path).  All outputs are deterministic:
run ids hash the resolved config, CSV floats carry 17 significant digits,
JSON is written with sorted keys, and nothing embeds a timestamp, so
re-running a command reproduces its artifacts byte for byte.

The environment variable OVERLAP_LAB_SEED (a comma- or space-separated
list of integers) overrides the seed list of any config.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from .algorithms import AlgorithmKind, run_training
from .analysis import min_iterations, run_bound_check
from .core import HyperParams, RngStream
from .objectives import (
    LogisticEnsemble,
    binary_labels,
    make_cluster_data,
    make_quadratic,
)
from .partition import iid_partition, label_skew_partition
from .simulator import TimingModel, comm_compute_ratio

__all__ = ["main", "emit_csv", "CSV_COLUMNS", "resolve_run_config"]

CSV_COLUMNS = (
    "run_id", "algorithm", "seed", "k", "wall_time_s", "objective",
    "grad_norm_sq", "consensus_dist", "comm_bytes", "idle_s",
)

_NAME_PATTERN = "^[A-Za-z0-9_.-]+$"

_TIMING_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "compute_mean": {"type": "number", "exclusiveMinimum": 0},
        "compute_jitter": {"type": "number", "minimum": 0},
        "straggler_prob": {"type": "number", "minimum": 0, "maximum": 1},
        "straggler_factor": {"type": "number", "minimum": 1},
        "latency": {"type": "number", "minimum": 0},
        "bandwidth": {"type": "number", "exclusiveMinimum": 0},
        "payload": {"type": "number", "minimum": 0},
    },
}

_QUADRATIC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type"],
    "properties": {
        "type": {"const": "quadratic"},
        "spread": {"type": "number", "minimum": 0},
        "condition": {"type": "number", "minimum": 1},
        "sigma": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
    },
}

_PARTITION_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scheme"],
    "properties": {
        "scheme": {"enum": ["iid", "label_skew"]},
        "per_worker": {"type": "integer", "minimum": 1},
        "dominant_per_worker": {"type": "integer", "minimum": 0},
    },
}

_LOGISTIC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type"],
    "properties": {
        "type": {"const": "logistic"},
        "n_samples": {"type": "integer", "minimum": 1},
        "num_classes": {"type": "integer", "minimum": 2},
        "class_sep": {"type": "number", "minimum": 0},
        "l2": {"type": "number", "exclusiveMinimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "partition": _PARTITION_SCHEMA,
    },
}

# Dispatch on the "type" discriminator instead of a bare oneOf so schema
# errors point into the branch the config actually chose.
_OBJECTIVE_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "properties": {"type": {"enum": ["quadratic", "logistic"]}},
    "allOf": [
        {"if": {"properties": {"type": {"const": "quadratic"}},
                "required": ["type"]},
         "then": _QUADRATIC_SCHEMA},
        {"if": {"properties": {"type": {"const": "logistic"}},
                "required": ["type"]},
         "then": _LOGISTIC_SCHEMA},
    ],
}

_PARAMS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["m", "d", "K"],
    "properties": {
        "m": {"type": "integer", "minimum": 1},
        "d": {"type": "integer", "minimum": 1},
        "K": {"type": "integer", "minimum": 1},
        "tau": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "minimum": 0, "maximum": 1},
        "eta": {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                          {"const": "theorem"}]},
        "beta": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "mu": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    },
}

_SEEDS_SCHEMA = {
    "type": "array",
    "items": {"type": "integer", "minimum": 0},
    "minItems": 1,
}

_INIT_SCHEMA = {
    "oneOf": [{"type": "number"},
              {"type": "array", "items": {"type": "number"}, "minItems": 1}],
}

RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["algorithm", "params", "objective"],
    "properties": {
        "name": {"type": "string", "pattern": _NAME_PATTERN},
        "algorithm": {"enum": [k.value for k in AlgorithmKind]},
        "params": _PARAMS_SCHEMA,
        "objective": _OBJECTIVE_SCHEMA,
        "timing": {"oneOf": [_TIMING_SCHEMA, {"type": "null"}]},
        "seeds": _SEEDS_SCHEMA,
        "init": _INIT_SCHEMA,
        "stride": {"type": "integer", "minimum": 1},
        "easgd_center_step": {"type": "number", "exclusiveMinimum": 0},
    },
}

SWEEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["base", "sweep"],
    "properties": {
        "name": {"type": "string", "pattern": _NAME_PATTERN},
        "base": RUN_SCHEMA,
        "sweep": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {"type": "array", "minItems": 1},
        },
        "seeds": _SEEDS_SCHEMA,
        "stride": {"type": "integer", "minimum": 1},
    },
}

BOUND_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["params", "objective"],
    "properties": {
        "name": {"type": "string", "pattern": _NAME_PATTERN},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "required": ["m", "d", "tau", "alpha", "K"],
            "properties": {
                "m": {"type": "integer", "minimum": 1},
                "d": {"type": "integer", "minimum": 1},
                "tau": {"type": "integer", "minimum": 1},
                "alpha": {"type": "number", "exclusiveMinimum": 0,
                          "exclusiveMaximum": 1},
                "K": {"type": "integer", "minimum": 1},
            },
        },
        "objective": _OBJECTIVE_SCHEMA,
        "seeds": _SEEDS_SCHEMA,
        "init": _INIT_SCHEMA,
    },
}


def _fail(msg: str):
    print(f"error: {msg}", file=sys.stderr)
    raise SystemExit(2)


def _load_config(path: Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        _fail(f"cannot read config {path}: {exc}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        _fail(f"config {path} is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        _fail(f"config {path} must be a JSON object")
    return cfg


def _validate(cfg: dict, schema: dict, label: str):
    validator = jsonschema.Draft202012Validator(schema)
    errors = list(validator.iter_errors(cfg))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        _fail(f"{label} config invalid at {best.json_path}: {best.message}")


def _env_seeds() -> list[int] | None:
    raw = os.environ.get("OVERLAP_LAB_SEED")
    if raw is None or not raw.strip():
        return None
    try:
        seeds = [int(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        _fail(f"OVERLAP_LAB_SEED must list integers, got {raw!r}")
    if not seeds or any(s < 0 for s in seeds):
        _fail(f"OVERLAP_LAB_SEED must list non-negative integers, got {raw!r}")
    return seeds


def resolve_run_config(raw: dict) -> dict:
    """Fill every default so the returned config is self-contained.

    Defaults: tau 1; alpha 0.6 when tau >= 2 else 0.5; eta 0.1 when
    tau >= 2 else 0.15; beta 0.7; mu 0.9 for the momentum kind and 0
    otherwise; one seed (0); scalar init 0; stride 1; no timing model.
    """
    cfg = copy.deepcopy(raw)
    p = cfg["params"]
    p.setdefault("tau", 1)
    tau = p["tau"]
    p.setdefault("alpha", 0.6 if tau >= 2 else 0.5)
    p.setdefault("eta", 0.1 if tau >= 2 else 0.15)
    p.setdefault("beta", 0.7)
    p.setdefault("mu", 0.9 if cfg["algorithm"] == "anchor_overlap_momentum"
                  else 0.0)
    obj = cfg["objective"]
    if obj["type"] == "quadratic":
        obj.setdefault("spread", 1.0)
        obj.setdefault("condition", 10.0)
        obj.setdefault("sigma", 1.0)
        obj.setdefault("seed", 0)
    else:
        obj.setdefault("n_samples", 2000)
        obj.setdefault("num_classes", 10)
        obj.setdefault("class_sep", 2.0)
        obj.setdefault("l2", 1e-3)
        obj.setdefault("batch_size", 32)
        obj.setdefault("seed", 0)
        obj.setdefault("partition", {"scheme": "iid"})
    timing = cfg.get("timing")
    cfg["timing"] = (TimingModel(**timing).to_config()
                     if isinstance(timing, dict) else None)
    cfg.setdefault("seeds", [0])
    cfg.setdefault("init", 0.0)
    cfg.setdefault("stride", 1)
    if cfg["algorithm"] == "easgd":
        cfg.setdefault("easgd_center_step", 0.9 / p["m"])
    _check_run_semantics(cfg)
    return cfg


def _check_run_semantics(cfg: dict):
    p = cfg["params"]
    if cfg["algorithm"] == "sync_sgd" and p["tau"] != 1:
        _fail("params.tau must be 1 for sync_sgd")
    if cfg["algorithm"] != "easgd" and "easgd_center_step" in cfg:
        _fail("easgd_center_step applies to easgd only")
    if cfg["algorithm"] == "easgd" and cfg["easgd_center_step"] * p["m"] >= 1.0:
        _fail(
            f"easgd_center_step {cfg['easgd_center_step']} with m={p['m']} "
            "violates the stability guard center_step * m < 1"
        )
    obj = cfg["objective"]
    if obj["type"] == "logistic":
        if p["d"] < 2:
            _fail("logistic runs need params.d >= 2 (features plus a bias)")
        part = obj["partition"]
        if part["scheme"] == "iid":
            for key in ("per_worker", "dominant_per_worker"):
                if key in part:
                    _fail(f"objective.partition.{key} applies to label_skew only")
        else:
            for key in ("per_worker", "dominant_per_worker"):
                if key not in part:
                    _fail(f"objective.partition.{key} is required for label_skew")
            if part["dominant_per_worker"] > part["per_worker"]:
                _fail("objective.partition.dominant_per_worker cannot exceed per_worker")
            if p["m"] * part["per_worker"] > obj["n_samples"]:
                _fail(
                    f"label_skew needs m * per_worker <= n_samples; "
                    f"{p['m']} * {part['per_worker']} > {obj['n_samples']}"
                )
    if isinstance(cfg["init"], list) and len(cfg["init"]) != p["d"]:
        _fail(f"init has {len(cfg['init'])} entries but params.d = {p['d']}")


def _digest(cfg: dict) -> str:
    hashed = {k: v for k, v in cfg.items() if k not in ("seeds", "name")}
    blob = json.dumps(hashed, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:10]


def _init_vector(cfg: dict) -> np.ndarray:
    d = cfg["params"]["d"]
    init = cfg["init"]
    if isinstance(init, list):
        return np.asarray(init, dtype=np.float64)
    return np.full(d, float(init))


def build_ensemble(cfg: dict):
    """Construct the objective ensemble (and the partition plan for data
    problems) a resolved run config describes."""
    obj = cfg["objective"]
    p = cfg["params"]
    if obj["type"] == "quadratic":
        ens = make_quadratic(p["m"], p["d"], obj["spread"], obj["condition"],
                             obj["sigma"], RngStream(seed=obj["seed"]))
        return ens, None
    root = RngStream(seed=obj["seed"])
    features, class_ids = make_cluster_data(
        obj["n_samples"], p["d"] - 1, obj["num_classes"], obj["class_sep"], root)
    part = obj["partition"]
    if part["scheme"] == "iid":
        plan = iid_partition(obj["n_samples"], p["m"], root)
    else:
        plan = label_skew_partition(class_ids, p["m"], part["per_worker"],
                                    part["dominant_per_worker"], root)
    targets = binary_labels(class_ids)
    ens = LogisticEnsemble.from_worker_data(
        [features[idx] for idx in plan.assignments],
        [targets[idx] for idx in plan.assignments],
        l2=obj["l2"], batch_size=obj["batch_size"])
    return ens, plan


def _hyperparams(cfg: dict, seed: int) -> HyperParams:
    p = cfg["params"]
    return HyperParams(m=p["m"], d=p["d"], tau=p["tau"], alpha=p["alpha"],
                       eta=p["eta"], K=p["K"], seed=seed, beta=p["beta"],
                       mu=p["mu"])


def _g17(value: float) -> str:
    return format(float(value), ".17g")


def emit_csv(path: Path, run_id: str, algorithm: str, seed: int,
             records) -> None:
    """Write per-step metrics with the fixed column set, 17 significant
    digits and LF newlines."""
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        lines.append(",".join((
            run_id, algorithm, str(seed), str(r.k),
            _g17(r.wall_time_s), _g17(r.objective), _g17(r.grad_norm_sq),
            _g17(r.consensus_dist), _g17(r.comm_bytes), _g17(r.idle_s),
        )))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def _jsonsafe(value):
    if value is None:
        return None
    value = float(value)
    return value if np.isfinite(value) else None


def _sanitize(payload):
    """Make a payload strictly JSON-ready: numpy scalars become Python
    numbers and non-finite floats become null."""
    if isinstance(payload, dict):
        return {k: _sanitize(v) for k, v in payload.items()}
    if isinstance(payload, (list, tuple)):
        return [_sanitize(v) for v in payload]
    if isinstance(payload, (np.integer,)):
        return int(payload)
    if isinstance(payload, (float, np.floating)):
        return _jsonsafe(payload)
    if isinstance(payload, np.ndarray):
        return _sanitize(payload.tolist())
    return payload


def _dumps(payload) -> str:
    return json.dumps(_sanitize(payload), indent=2, sort_keys=True,
                      allow_nan=False) + "\n"


def _summarize_run(res, run_id: str, seed: int, csv_name: str) -> dict:
    sched = res.schedule
    return {
        "run_id": run_id,
        "seed": seed,
        "status": res.status,
        "diverged_at": res.diverged_at,
        "steps_done": res.steps_done,
        "final_objective": _jsonsafe(res.final_objective),
        "min_objective": _jsonsafe(res.min_objective),
        "avg_grad_norm": _jsonsafe(res.avg_grad_norm),
        "wall_clock_s": sched.makespan if sched is not None else None,
        "comm_compute_ratio": (comm_compute_ratio(sched)
                               if sched is not None else None),
        "idle_s_total": sched.total_idle() if sched is not None else None,
        "comm_bytes_total": sched.total_bytes() if sched is not None else None,
        "csv": csv_name,
    }


def _execute_run(cfg: dict, seed: int):
    ens, plan = build_ensemble(cfg)
    res = run_training(
        AlgorithmKind(cfg["algorithm"]), _hyperparams(cfg, seed), ens,
        _init_vector(cfg), stride=cfg["stride"],
        timing=TimingModel(**cfg["timing"]) if cfg["timing"] else None,
        easgd_center_step=cfg.get("easgd_center_step"))
    return res, plan


def cmd_run(args) -> int:
    raw = _load_config(args.config)
    _validate(raw, RUN_SCHEMA, "run")
    cfg = resolve_run_config(raw)
    if args.stride is not None:
        cfg["stride"] = args.stride
    seeds = _env_seeds()
    if seeds is not None:
        cfg["seeds"] = seeds
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base_id = f"{cfg.get('name', cfg['algorithm'])}-{_digest(cfg)}"

    runs = []
    curves = {}
    plan = None
    for seed in cfg["seeds"]:
        res, plan = _execute_run(cfg, seed)
        run_id = f"{base_id}-s{seed}"
        csv_path = out / f"{run_id}.csv"
        emit_csv(csv_path, run_id, cfg["algorithm"], seed, res.records)
        runs.append(_summarize_run(res, run_id, seed, csv_path.name))
        curves[f"seed {seed}"] = res.records
        wall = runs[-1]["wall_clock_s"]
        wall_txt = f" wall={wall:.6g}s" if wall is not None else ""
        print(f"{run_id}: {res.status} steps={res.steps_done} "
              f"final_objective={runs[-1]['final_objective']}{wall_txt}")

    if plan is not None:
        (out / f"{base_id}-partition.json").write_text(
            _dumps(plan.to_config()), newline="\n")
    summary = {"config": cfg, "run_id_base": base_id, "runs": runs}
    summary_path = out / f"{base_id}-summary.json"
    summary_path.write_text(_dumps(summary), newline="\n")
    print(f"summary: {summary_path}")
    if not args.no_plots:
        from .figures import render_run_curves

        for path in render_run_curves(out, base_id, curves):
            print(f"figure: {path}")
    return 0


def _set_path(cfg: dict, dotted: str, value):
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            _fail(f"sweep key {dotted!r} descends into non-object {part!r}")
        node = nxt
    node[parts[-1]] = value


def _sweep_task(payload):
    idx, cfg, seed = payload
    res, plan = _execute_run(cfg, seed)
    return idx, seed, res.records, _summarize_run(res, "", seed, ""), (
        plan.to_config() if plan is not None else None)


def cmd_sweep(args) -> int:
    raw = _load_config(args.config)
    _validate(raw, SWEEP_SCHEMA, "sweep")
    axes = list(raw["sweep"].items())
    points = []
    for combo in itertools.product(*(values for _, values in axes)):
        point_raw = copy.deepcopy(raw["base"])
        for (key, _), value in zip(axes, combo):
            _set_path(point_raw, key, value)
        if "seeds" in raw:
            point_raw["seeds"] = list(raw["seeds"])
        _validate(point_raw, RUN_SCHEMA,
                  f"sweep point {dict(zip((k for k, _ in axes), combo))}")
        cfg = resolve_run_config(point_raw)
        if args.stride is not None:
            cfg["stride"] = args.stride
        elif "stride" in raw:
            cfg["stride"] = raw["stride"]
        env = _env_seeds()
        if env is not None:
            cfg["seeds"] = env
        points.append((cfg, dict(zip((k for k, _ in axes), combo))))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = raw.get("name", "sweep")

    tasks = [(idx, cfg, seed)
             for idx, (cfg, _) in enumerate(points)
             for seed in cfg["seeds"]]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_sweep_task, tasks))
    else:
        outcomes = [_sweep_task(t) for t in tasks]
    outcomes.sort(key=lambda item: (item[0], item[1]))

    plans_written = set()
    rows = []
    summary_points = [{"point": idx, "overrides": overrides,
                       "config": cfg, "runs": []}
                      for idx, (cfg, overrides) in enumerate(points)]
    for idx, seed, records, summary, plan_cfg in outcomes:
        cfg, overrides = points[idx]
        run_id = f"{name}-pt{idx:03d}-{_digest(cfg)}-s{seed}"
        emit_csv(out / f"{run_id}.csv", run_id, cfg["algorithm"], seed, records)
        summary["run_id"] = run_id
        summary["csv"] = f"{run_id}.csv"
        summary_points[idx]["runs"].append(summary)
        if plan_cfg is not None and idx not in plans_written:
            (out / f"{name}-pt{idx:03d}-partition.json").write_text(
                _dumps(plan_cfg), newline="\n")
            plans_written.add(idx)
        rows.append({
            "point": idx,
            "run_id": run_id,
            "algorithm": cfg["algorithm"],
            "seed": seed,
            "status": summary["status"],
            "final_objective": summary["final_objective"],
            "avg_grad_norm": summary["avg_grad_norm"],
            "wall_clock_s": summary["wall_clock_s"],
            "comm_compute_ratio": summary["comm_compute_ratio"],
            "idle_s_total": summary["idle_s_total"],
            "comm_bytes_total": summary["comm_bytes_total"],
            "overrides": ";".join(f"{k}={v}" for k, v in overrides.items()),
        })

    table_cols = ("point", "run_id", "algorithm", "seed", "status",
                  "final_objective", "avg_grad_norm", "wall_clock_s",
                  "comm_compute_ratio", "idle_s_total", "comm_bytes_total",
                  "overrides")
    lines = [",".join(table_cols)]
    for row in rows:
        cells = []
        for col in table_cols:
            val = row[col]
            if val is None:
                cells.append("")
            elif isinstance(val, float):
                cells.append(_g17(val))
            else:
                cells.append(str(val))
        lines.append(",".join(cells))
    table_path = out / f"{name}-summary.csv"
    table_path.write_text("\n".join(lines) + "\n", newline="\n")
    (out / f"{name}-summary.json").write_text(
        _dumps({"points": summary_points}), newline="\n")
    print(f"{len(points)} points x seeds -> {len(rows)} runs")
    print(f"summary: {table_path}")
    if not args.no_plots:
        from .figures import render_sweep_tradeoff

        for path in render_sweep_tradeoff(out, name, rows):
            print(f"figure: {path}")
    return 0


def cmd_verify(args) -> int:
    from .checks import run_all

    results = run_all()
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = [name for name, ok, _ in results if not ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report = [{"check": name, "ok": ok, "detail": detail}
                  for name, ok, detail in results]
        (out / "verify_report.json").write_text(_dumps(report), newline="\n")
    return 1 if failed else 0


def cmd_bound(args) -> int:
    raw = _load_config(args.config)
    _validate(raw, BOUND_SCHEMA, "bound")
    if raw["objective"]["type"] != "quadratic":
        _fail(
            "bound checking requires the quadratic objective: the comparison "
            "needs the exact smoothness, gradient-diversity and optimal-value "
            "constants, which the logistic family only bounds"
        )
    cfg = copy.deepcopy(raw)
    obj = cfg["objective"]
    obj.setdefault("spread", 1.0)
    obj.setdefault("condition", 10.0)
    obj.setdefault("sigma", 1.0)
    obj.setdefault("seed", 0)
    cfg.setdefault("seeds", list(range(32)))
    cfg.setdefault("init", 0.0)
    seeds = _env_seeds()
    if seeds is not None:
        cfg["seeds"] = seeds
    p = cfg["params"]
    if isinstance(cfg["init"], list) and len(cfg["init"]) != p["d"]:
        _fail(f"init has {len(cfg['init'])} entries but params.d = {p['d']}")

    k_min = min_iterations(p["m"], p["tau"], p["alpha"])
    if p["K"] < k_min and not args.override_kmin:
        _fail(
            f"params.K = {p['K']} is below the minimum budget {k_min} the "
            "analysis covers; rerun with --override-kmin to force the comparison"
        )

    ens = make_quadratic(p["m"], p["d"], obj["spread"], obj["condition"],
                         obj["sigma"], RngStream(seed=obj["seed"]))
    init = (np.asarray(cfg["init"], dtype=np.float64)
            if isinstance(cfg["init"], list) else np.full(p["d"], float(cfg["init"])))
    report = run_bound_check(ens, p["tau"], p["alpha"], p["K"], cfg["seeds"],
                             init, allow_short=args.override_kmin)
    report["config"] = cfg
    dev = report["deviation_coefficient"]
    if p["K"] >= k_min and not dev <= 0.25 + 1e-12:
        raise RuntimeError(
            f"deviation coefficient {dev} exceeds 1/4 despite K >= {k_min}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = cfg.get("name", "bound")
    report_path = out / f"{base}-report.json"
    report_path.write_text(_dumps(report), newline="\n")

    print(f"eta={report['inputs']['eta']:.6g} min_iterations={k_min} "
          f"deviation_coefficient={dev:.6g}")
    terms = report["terms"]
    print("ceiling terms: " + " ".join(f"{k}={terms[k]:.6g}" for k in
                                       ("gap", "noise", "local_noise", "diversity")))
    print(f"mean_lhs={report['mean_lhs']:.6g} rhs={report['rhs']:.6g} "
          f"verdict={report['verdict']}")
    print(f"report: {report_path}")
    if not args.no_plots:
        from .figures import render_bound_margins

        for path in render_bound_margins(out, base, report):
            print(f"figure: {path}")
    return 0 if report["verdict"] == "pass" else 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="overlap-lab",
        description="Local-update SGD with overlapped anchor averaging: "
                    "training runs, parameter sweeps, self-checks and "
                    "convergence-ceiling comparisons.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="train one configuration")
    run_p.add_argument("--config", type=Path, required=True,
                       help="JSON run config")
    run_p.add_argument("--out", type=Path, default=Path("out"),
                       help="output directory (default: out)")
    run_p.add_argument("--stride", type=int, default=None,
                       help="record every Nth step (overrides the config)")
    run_p.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="run a Cartesian parameter grid")
    sweep_p.add_argument("--config", type=Path, required=True,
                         help="JSON sweep config")
    sweep_p.add_argument("--out", type=Path, default=Path("out"))
    sweep_p.add_argument("--jobs", type=int, default=1,
                         help="worker processes (default: 1)")
    sweep_p.add_argument("--stride", type=int, default=None)
    sweep_p.add_argument("--no-plots", action="store_true")
    sweep_p.set_defaults(func=cmd_sweep)

    verify_p = sub.add_parser("verify", help="run the internal check suite")
    verify_p.add_argument("--out", type=Path, default=None,
                          help="also write verify_report.json here")
    verify_p.set_defaults(func=cmd_verify)

    bound_p = sub.add_parser("bound",
                             help="compare measured runs with the ceiling")
    bound_p.add_argument("--config", type=Path, required=True,
                         help="JSON bound config")
    bound_p.add_argument("--out", type=Path, default=Path("out"))
    bound_p.add_argument("--override-kmin", action="store_true",
                         help="allow K below the covered minimum budget")
    bound_p.add_argument("--no-plots", action="store_true")
    bound_p.set_defaults(func=cmd_bound)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if getattr(args, "stride", None) is not None and args.stride < 1:
        _fail("--stride must be >= 1")
    if getattr(args, "jobs", 1) < 1:
        _fail("--jobs must be >= 1")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
