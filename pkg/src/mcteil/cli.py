"""Configuration-driven experiment runner.

Subcommands:

* ``run``      -- execute a study described by a JSON config file: every
                  (variant, seed) cell trains independently, per-cell logs
                  and a cross-seed summary land in the output directory.
* ``compare``  -- merge summary files into one ranked table.
* ``suite``    -- run the library's invariant checks and report pass/fail.

All artifacts are deterministic given the config: reruns produce
byte-identical file bodies.  Timestamps live only in ``run_meta.json``.
Exit codes: 0 success, 1 invalid config or arguments, 2 one or more cells
failed, 3 property-suite failures.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from .irl import feature_expectation, solve_mcte, write_residual_report
from .mdp import gridworld_mdp, sparse_value_iteration
from .multigoal import MultiGoalWorld, generate_expert_demos, save_world
from .trainer import VARIANTS, TrainerConfig, train
from .trajectories import save_demos
from .properties import run_suite

__all__ = ["main", "load_config", "ExperimentConfig", "ConfigError"]

EXIT_OK = 0
EXIT_BAD_CONFIG = 1
EXIT_CELL_FAILURES = 2
EXIT_SUITE_FAILURES = 3

KINDS = ("multigoal", "tabular_irl", "property_suite")

_DEMO_DEFAULTS = {
    "n_demos": 300,
    "grid_n": 21,
    "n_directions": 8,
    "alpha": 0.05,
    "gamma": 0.95,
    "seed": 2024,
}
_IRL_DEFAULTS = {
    "side": 5,
    "gamma": 0.9,
    "alpha": 1.0,
    "lr": 0.3,
    "iterations": 600,
    "tol": 1e-6,
    "vi_tol": 1e-12,
    "theta_scale": 1.0,
}
# cell identity is controlled by the runner, not the shared trainer block
_RESERVED_TRAINER_KEYS = {"variant", "n_components", "alpha", "seed", "demo_path"}

MULTIGOAL_SUMMARY = (
    "variant", "k", "alpha", "n_seeds",
    "final_return_mean", "final_return_stderr",
    "final_reachability_mean", "final_reachability_stderr",
)
IRL_SUMMARY = (
    "variant", "n_seeds",
    "feature_gap_mean", "feature_gap_stderr",
    "kkt_policy_mean", "kkt_policy_stderr",
    "kkt_value_mean", "kkt_value_stderr",
)


class ConfigError(Exception):
    """Invalid experiment description; ``path`` is the offending dotted key."""

    def __init__(self, path: str, message: str):
        super().__init__(message)
        self.path = path
        self.message = message


@dataclass(frozen=True)
class VariantSpec:
    name: str
    k: int
    alpha: float
    label: str


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seeds: tuple
    out: str | None
    variants: tuple
    trainer: dict
    env: dict
    demos: dict
    irl: dict
    sha256: str


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(path, message)


def _check_keys(block: dict, allowed, path: str) -> None:
    unknown = sorted(set(block) - set(allowed))
    _require(not unknown, f"{path}.{unknown[0]}" if unknown else path,
             f"unknown key(s) {unknown} (allowed: {sorted(allowed)})")


def _validate(raw: dict) -> ExperimentConfig:
    _require(isinstance(raw, dict), "", "config must be a mapping")
    _check_keys(raw, {"kind", "seeds", "out", "variants", "trainer", "env", "demos", "irl"}, "")

    kind = raw.get("kind")
    _require(kind in KINDS, "kind", f"kind must be one of {list(KINDS)}, got {kind!r}")

    seeds = raw.get("seeds")
    _require(isinstance(seeds, list) and len(seeds) > 0, "seeds",
             "seeds must be a nonempty list of integers")
    for i, s in enumerate(seeds):
        _require(isinstance(s, int) and not isinstance(s, bool), f"seeds[{i}]",
                 f"seed entries must be integers, got {s!r}")

    out = raw.get("out")
    _require(out is None or isinstance(out, str), "out", "out must be a string path")

    variants = []
    if kind == "multigoal":
        vraw = raw.get("variants")
        _require(isinstance(vraw, list) and len(vraw) > 0, "variants",
                 "multigoal experiments need a nonempty variants list")
        for i, entry in enumerate(vraw):
            where = f"variants[{i}]"
            _require(isinstance(entry, dict), where, "each variant must be a mapping")
            _check_keys(entry, {"name", "k", "alpha", "label"}, where)
            name = entry.get("name")
            _require(name in VARIANTS, f"{where}.name",
                     f"variant name must be one of {list(VARIANTS)}, got {name!r}")
            k = entry.get("k", 4)
            _require(isinstance(k, int) and k >= 1, f"{where}.k",
                     f"k must be a positive integer, got {k!r}")
            alpha = entry.get("alpha", 0.5)
            _require(isinstance(alpha, (int, float)) and not isinstance(alpha, bool)
                     and alpha >= 0.0,
                     f"{where}.alpha", f"alpha must be a nonnegative number, got {alpha!r}")
            label = entry.get("label", f"{name}_k{k}_a{alpha:g}")
            _require(isinstance(label, str) and label, f"{where}.label",
                     "label must be a nonempty string")
            variants.append(VariantSpec(name, k, float(alpha), label))
        labels = [v.label for v in variants]
        _require(len(set(labels)) == len(labels), "variants",
                 f"variant labels must be unique, got {labels}")
    elif kind == "tabular_irl":
        _require("variants" not in raw, "variants",
                 "tabular_irl has a single built-in solver; drop the variants list")
        variants.append(VariantSpec("mcte", 0, float(raw.get("irl", {}).get("alpha", 1.0)), "mcte"))

    trainer = dict(raw.get("trainer", {}))
    allowed_trainer = {f.name for f in dataclass_fields(TrainerConfig)} - _RESERVED_TRAINER_KEYS
    _check_keys(trainer, allowed_trainer, "trainer")
    try:
        TrainerConfig(**trainer)  # surface bad values before any compute
    except (TypeError, ValueError) as exc:
        raise ConfigError("trainer", str(exc)) from exc

    env = dict(raw.get("env", {}))
    _check_keys(env, {f.name for f in dataclass_fields(MultiGoalWorld)}, "env")
    if kind == "multigoal":
        try:
            _build_world(env)
        except (TypeError, ValueError) as exc:
            raise ConfigError("env", str(exc)) from exc

    demos = {**_DEMO_DEFAULTS, **raw.get("demos", {})}
    _check_keys(demos, _DEMO_DEFAULTS, "demos")
    _require(demos["grid_n"] >= 8, "demos.grid_n", "expert discretization needs grid_n >= 8")
    _require(demos["n_demos"] >= 1, "demos.n_demos", "need at least one demonstration")

    irl = {**_IRL_DEFAULTS, **raw.get("irl", {})}
    _check_keys(irl, _IRL_DEFAULTS, "irl")
    _require(irl["side"] >= 2, "irl.side", "gridworld side must be at least 2")
    _require(0.0 < irl["gamma"] < 1.0, "irl.gamma", "gamma must lie in (0, 1)")
    _require(irl["alpha"] > 0.0, "irl.alpha", "alpha must be positive")

    canonical = json.dumps(
        {"kind": kind, "seeds": seeds, "variants": [vars(v) for v in variants],
         "trainer": trainer, "env": env, "demos": demos, "irl": irl},
        sort_keys=True, separators=(",", ":"),
    )
    return ExperimentConfig(
        kind=kind,
        seeds=tuple(seeds),
        out=out,
        variants=tuple(variants),
        trainer=trainer,
        env=env,
        demos=demos,
        irl=irl,
        sha256=hashlib.sha256(canonical.encode()).hexdigest(),
    )


def _build_world(env_overrides: dict) -> MultiGoalWorld:
    kwargs = dict(env_overrides)
    for key in ("attractors", "repulsors"):
        if key in kwargs:
            kwargs[key] = np.asarray(kwargs[key], dtype=float)
    return MultiGoalWorld(**kwargs)


def _line_of(text: str, dotted: str) -> int | None:
    """Best-effort line lookup for a dotted config path in the raw text."""
    leaf = dotted.split(".")[-1].split("[")[0] if dotted else ""
    if not leaf:
        return None
    needle = f'"{leaf}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def _set_dotted(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = raw
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = {}
            node[part] = nxt
        if not isinstance(nxt, dict):
            raise ConfigError(dotted, f"cannot override through non-mapping key {part!r}")
        node = nxt
    node[parts[-1]] = value


def load_config(path: str, overrides=()) -> ExperimentConfig:
    """Parse, apply ``key.path=value`` overrides, and validate."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("", f"cannot read config: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a mapping at top level")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "overrides take the form key.path=value")
        key, _, val = item.partition("=")
        try:
            parsed = json.loads(val)
        except json.JSONDecodeError:
            parsed = val  # bare strings are fine
        _set_dotted(raw, key.strip(), parsed)
    try:
        config = _validate(raw)
    except ConfigError as exc:
        line = _line_of(text, exc.path)
        at = f"{path}:{line}" if line else path
        raise ConfigError(exc.path, f"{at}: {exc.path or 'config'}: {exc.message}") from exc
    return config


# ---------------------------------------------------------------------------
# cell execution (top level so worker processes can import it)
# ---------------------------------------------------------------------------

def _execute_cell(payload: dict) -> dict:
    out = {"label": payload["label"], "variant": payload["variant"],
           "seed": payload["seed"], "status": "ok", "error": None, "final": {}}
    try:
        if payload["kind"] == "multigoal":
            out["final"] = _run_multigoal_cell(payload)
        else:
            out["final"] = _run_irl_cell(payload)
    except Exception as exc:
        out["status"] = "failed"
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def _run_multigoal_cell(payload: dict) -> dict:
    world = _build_world(payload["env"])
    config = TrainerConfig(
        variant=payload["variant"],
        n_components=payload["k"],
        alpha=payload["alpha"],
        seed=payload["seed"],
        demo_path=payload["demo_path"],
        **payload["trainer"],
    )
    result = train(config, world, out_dir=payload["cell_dir"])
    last = result.final_row
    return {
        "avg_return": float(last["avg_return"]),
        "reachability": float(last["reachability"]),
    }


def _run_irl_cell(payload: dict) -> dict:
    p = payload["irl"]
    mdp = gridworld_mdp(side=p["side"], discount=p["gamma"])
    rng = np.random.default_rng(payload["seed"])
    theta_star = p["theta_scale"] * rng.standard_normal(mdp.n_features)
    r_star = np.einsum("saf,f->sa", mdp.features, theta_star)
    _, expert = sparse_value_iteration(mdp.with_reward(r_star), p["alpha"], tol=p["vi_tol"])
    mu_expert = feature_expectation(mdp, expert)
    solution = solve_mcte(
        mdp, mu_expert, alpha=p["alpha"], lr=p["lr"],
        iters=p["iterations"], tol=p["tol"], vi_tol=p["vi_tol"],
    )
    os.makedirs(payload["cell_dir"], exist_ok=True)
    write_residual_report(os.path.join(payload["cell_dir"], "residuals.csv"), solution)
    mu_pi = feature_expectation(mdp, solution.policy)
    return {
        "feature_gap": float(np.abs(mu_pi - mu_expert).max()),
        "kkt_policy": float(solution.kkt_policy[solution.best_step]),
        "kkt_value": float(solution.kkt_value[solution.best_step]),
        "converged": bool(solution.converged),
    }


# ---------------------------------------------------------------------------
# aggregation and artifacts
# ---------------------------------------------------------------------------

def _mean_stderr(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return mean, stderr


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _summarize(config: ExperimentConfig, results: list) -> tuple[tuple, list]:
    by_label = {}
    for res in results:
        by_label.setdefault(res["label"], []).append(res)

    rows = []
    if config.kind == "multigoal":
        header = MULTIGOAL_SUMMARY
        for spec in config.variants:
            ok = [r for r in by_label.get(spec.label, []) if r["status"] == "ok"]
            row = {"variant": spec.label, "k": spec.k, "alpha": spec.alpha,
                   "n_seeds": len(ok)}
            if ok:
                rm, rs = _mean_stderr([r["final"]["avg_return"] for r in ok])
                gm, gs = _mean_stderr([r["final"]["reachability"] for r in ok])
                row.update(final_return_mean=rm, final_return_stderr=rs,
                           final_reachability_mean=gm, final_reachability_stderr=gs)
            else:
                row.update(final_return_mean="", final_return_stderr="",
                           final_reachability_mean="", final_reachability_stderr="")
            rows.append(row)
    else:
        header = IRL_SUMMARY
        ok = [r for r in results if r["status"] == "ok"]
        row = {"variant": "mcte", "n_seeds": len(ok)}
        if ok:
            gm, gs = _mean_stderr([r["final"]["feature_gap"] for r in ok])
            pm, ps = _mean_stderr([r["final"]["kkt_policy"] for r in ok])
            vm, vs = _mean_stderr([r["final"]["kkt_value"] for r in ok])
            row.update(feature_gap_mean=gm, feature_gap_stderr=gs,
                       kkt_policy_mean=pm, kkt_policy_stderr=ps,
                       kkt_value_mean=vm, kkt_value_stderr=vs)
        else:
            row.update({c: "" for c in header if c not in row})
        rows.append(row)
    return header, rows


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in header])


def _print_table(header, rows) -> None:
    cells = [[str(c) for c in header]] + [[_fmt(r[c]) for c in header] for r in rows]
    widths = [max(len(line[i]) for line in cells) for i in range(len(header))]
    for line in cells:
        print("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())


def _run_study(config: ExperimentConfig, out_dir: str, workers: int,
               seed_offset: int) -> int:
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    cell_root = os.path.join(out_dir, "cells")
    os.makedirs(cell_root, exist_ok=True)

    manifest_files = []
    demo_path = None
    if config.kind == "multigoal":
        world = _build_world(config.env)
        demo_rng = np.random.default_rng(config.demos["seed"])
        demos = generate_expert_demos(
            world,
            n_demos=config.demos["n_demos"],
            rng=demo_rng,
            grid_n=config.demos["grid_n"],
            n_directions=config.demos["n_directions"],
            alpha=config.demos["alpha"],
            gamma=config.demos["gamma"],
        )
        demo_path = os.path.join(out_dir, "demos.csv")
        save_demos(demos, demo_path)
        world_path = os.path.join(out_dir, "world.json")
        save_world(world, world_path)
        manifest_files.append({"path": "demos.csv", "role": "demonstrations",
                               "seed": config.demos["seed"], "variant": None})
        manifest_files.append({"path": "world.json", "role": "environment_layout",
                               "seed": None, "variant": None})

    payloads = []
    for spec in config.variants:
        for seed in config.seeds:
            cell_seed = seed + seed_offset
            cell_name = f"{spec.label}_seed{cell_seed}"
            payloads.append({
                "kind": config.kind,
                "label": spec.label,
                "variant": spec.name,
                "k": spec.k,
                "alpha": spec.alpha,
                "seed": cell_seed,
                "trainer": config.trainer,
                "env": config.env,
                "irl": config.irl,
                "demo_path": demo_path,
                "cell_dir": os.path.join(cell_root, cell_name),
                "cell_name": cell_name,
            })

    if workers > 1 and len(payloads) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute_cell, payloads))
    else:
        results = [_execute_cell(p) for p in payloads]

    for payload, res in zip(payloads, results):
        rel = os.path.join("cells", payload["cell_name"])
        if res["status"] != "ok":
            print(f"cell {payload['cell_name']} failed: {res['error']}", file=sys.stderr)
            continue
        if config.kind == "multigoal":
            manifest_files.append({"path": os.path.join(rel, "train_log.csv"),
                                   "role": "training_log", "seed": payload["seed"],
                                   "variant": payload["label"]})
            manifest_files.append({"path": os.path.join(rel, "checkpoint.json"),
                                   "role": "policy_checkpoint", "seed": payload["seed"],
                                   "variant": payload["label"]})
        else:
            manifest_files.append({"path": os.path.join(rel, "residuals.csv"),
                                   "role": "residual_log", "seed": payload["seed"],
                                   "variant": payload["label"]})

    header, rows = _summarize(config, results)
    summary_path = os.path.join(out_dir, "summary.csv")
    _write_csv(summary_path, header, rows)
    manifest_files.append({"path": "summary.csv", "role": "summary",
                           "seed": None, "variant": None})
    manifest_files.append({"path": "run_meta.json", "role": "run_metadata",
                           "seed": None, "variant": None})

    manifest = {
        "kind": config.kind,
        "config_sha256": config.sha256,
        "seed_offset": seed_offset,
        "cells": [
            {"name": p["cell_name"], "label": r["label"], "seed": r["seed"],
             "status": r["status"], "error": r["error"], "final": r["final"]}
            for p, r in zip(payloads, results)
        ],
        "files": sorted(manifest_files, key=lambda f: f["path"]),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    meta = {
        "started_unix": started,
        "finished_unix": time.time(),
        "duration_seconds": time.time() - started,
        "workers": workers,
    }
    with open(os.path.join(out_dir, "run_meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    _print_table(header, rows)
    failures = sum(1 for r in results if r["status"] != "ok")
    if failures:
        print(f"{failures} of {len(results)} cells failed", file=sys.stderr)
        return EXIT_CELL_FAILURES
    return EXIT_OK


def _run_suite(seed: int, out_dir: str | None) -> int:
    results = run_suite(seed)
    width = max(len(r.name) for r in results)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{r.name.ljust(width)}  {mark}  {r.detail}")
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(
            os.path.join(out_dir, "suite.csv"),
            ("name", "passed", "detail"),
            [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
        )
    n_failed = sum(1 for r in results if not r.passed)
    if n_failed:
        print(f"{n_failed} of {len(results)} checks failed", file=sys.stderr)
        return EXIT_SUITE_FAILURES
    return EXIT_OK


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config, args.set or ())
    except ConfigError as exc:
        print(f"invalid config: {exc.message}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    if config.kind == "property_suite":
        out_dir = args.out or config.out
        return _run_suite(config.seeds[0] + args.seed_offset, out_dir)

    out_dir = args.out or config.out
    if out_dir is None:
        print("invalid config: out: study kinds need an output directory "
              "(config key 'out' or flag --out)", file=sys.stderr)
        return EXIT_BAD_CONFIG
    return _run_study(config, out_dir, args.workers, args.seed_offset)


def _cmd_compare(args) -> int:
    tables = []
    for path in args.summaries:
        try:
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                rows = list(reader)
        except OSError as exc:
            print(f"cannot read {path}: {exc}", file=sys.stderr)
            return EXIT_BAD_CONFIG
        if not rows:
            print(f"{path}: empty summary", file=sys.stderr)
            return EXIT_BAD_CONFIG
        tables.append((path, rows[0], rows[1:]))

    header = tables[0][1]
    for path, other, _ in tables[1:]:
        if other != header:
            for i, (a, b) in enumerate(zip(header, other)):
                if a != b:
                    print(f"schema mismatch: column {i} is {b!r} in {path}, "
                          f"expected {a!r}", file=sys.stderr)
                    return EXIT_BAD_CONFIG
            longer = header if len(header) > len(other) else other
            missing = longer[min(len(header), len(other))]
            print(f"schema mismatch: column {missing!r} missing from "
                  f"{path if len(other) < len(header) else args.summaries[0]}",
                  file=sys.stderr)
            return EXIT_BAD_CONFIG

    metric = args.metric
    if metric is None:
        means = [c for c in header if c.endswith("_mean")]
        preferred = [c for c in means if "reachability" in c]
        if preferred:
            metric = preferred[0]
        elif means:
            metric = means[0]
        else:
            print("no *_mean column to rank by; pass --metric", file=sys.stderr)
            return EXIT_BAD_CONFIG
    if metric not in header:
        print(f"metric column {metric!r} not in summary header {header}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    idx = header.index(metric)
    try:
        name_idx = header.index("variant")
    except ValueError:
        name_idx = 0

    def sort_key(row):
        try:
            value = -float(row[idx])
        except ValueError:
            value = float("inf")  # blank metrics sink to the bottom
        return (value, row[name_idx])

    merged = sorted((row for _, _, body in tables for row in body), key=sort_key)

    lines = [",".join(header)] + [",".join(row) for row in merged]
    body = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(body)
    sys.stdout.write(body)
    return EXIT_OK


def _cmd_suite(args) -> int:
    return _run_suite(args.seed, args.out)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; our contract reserves 2 for cell
    failures, so route usage errors to the invalid-config code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcteil", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the study described by a config file")
    run.add_argument("--config", required=True, help="path to the JSON experiment config")
    run.add_argument("--out", default=None, help="output directory (overrides config)")
    run.add_argument("--workers", type=int, default=1,
                     help="concurrent cells (default 1)")
    run.add_argument("--seed-offset", type=int, default=0,
                     help="added to every cell seed")
    run.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                     help="override a config field (repeatable)")
    run.set_defaults(fn=_cmd_run)

    compare = sub.add_parser("compare", help="merge and rank summary files")
    compare.add_argument("summaries", nargs="+", help="summary.csv files to merge")
    compare.add_argument("--metric", default=None,
                         help="column to rank by (default: reachability mean)")
    compare.add_argument("--out", default=None, help="also write the merged table here")
    compare.set_defaults(fn=_cmd_compare)

    suite = sub.add_parser("suite", help="run the library invariant checks")
    suite.add_argument("--seed", type=int, default=0)
    suite.add_argument("--out", default=None, help="directory for suite.csv")
    suite.set_defaults(fn=_cmd_suite)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse raises on usage errors and --help
        return int(exc.code or 0)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
