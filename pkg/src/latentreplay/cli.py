"""Command-line front end.

Subcommands:
  run       execute a continual-learning experiment from a JSON config
  scenario  materialize a TinyNIC scenario as manifest + tensor files
  tradeoff  print the computation/storage trade-off table for a cost CSV

stdout carries data, stderr carries diagnostics. Exit codes: 0 success,
1 config error, 2 runtime error. LR_THREADS caps the worker count for
multi-seed runs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys

import numpy as np

from . import accounting
from .errors import ConfigError, ShapeError, StateError, TensorFormatError
from .network import Network
from .presets import build_tinynic_network
from .replay import SparsifierConfig
from .scenario import (MetricsRow, NicScenario, ScenarioParams, cumulative_baseline,
                       generate_tinynic, load_dataset, run_protocol, save_scenario,
                       write_metrics_csv)
from .strategies import StrategyConfig

_RUN_KEYS = {"scenario", "network", "strategies", "seeds", "include_cumulative",
             "cumulative_epochs", "cumulative_mb", "cumulative_lr", "eval_every",
             "record_timing", "track_drift", "output_dir"}
_SCENARIO_KEYS = {"generator", "manifest"}
_NETWORK_KEYS = {"builtin", "tap", "width", "avg_rate", "spec_path"}
_SPARSIFIER_KEYS = {"alpha", "first_batch_only"}
_STRATEGY_EXTRA = {"name", "sparsifier"}


def _check_keys(block: dict, allowed: set, where: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _scenario_params_from(block: dict) -> tuple[ScenarioParams, int]:
    fields = {f.name for f in dataclasses.fields(ScenarioParams)}
    _check_keys(block, fields | {"seed"}, "scenario.generator")
    seed = int(block.get("seed", 0))
    kwargs = {k: v for k, v in block.items() if k in fields}
    if "pattern_shape" in kwargs:
        kwargs["pattern_shape"] = tuple(kwargs["pattern_shape"])
    params = ScenarioParams(**kwargs)
    params.validate()
    return params, seed


def _strategy_from(block: dict) -> tuple[str, StrategyConfig]:
    fields = {f.name for f in dataclasses.fields(StrategyConfig)}
    _check_keys(block, fields | _STRATEGY_EXTRA, "strategy block")
    name = block.get("name") or block.get("strategy", "naive")
    kwargs = {k: v for k, v in block.items() if k in fields and k != "sparsifier"}
    spars = block.get("sparsifier")
    if spars is not None:
        _check_keys(spars, _SPARSIFIER_KEYS, "sparsifier block")
        kwargs["sparsifier"] = SparsifierConfig(**spars)
    return str(name), StrategyConfig(**kwargs)


class ExperimentConfig:
    """Validated experiment description (unknown keys rejected)."""

    def __init__(self, doc: dict, base_dir: str = "."):
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        _check_keys(doc, _RUN_KEYS, "config")
        if "scenario" not in doc or "strategies" not in doc:
            raise ConfigError("config needs 'scenario' and 'strategies'")
        self.base_dir = base_dir

        block = doc["scenario"]
        _check_keys(block, _SCENARIO_KEYS, "scenario")
        self.scenario_manifest = None
        self.scenario_params = self.scenario_seed = None
        if "manifest" in block:
            self.scenario_manifest = os.path.join(base_dir, block["manifest"])
        elif "generator" in block:
            self.scenario_params, self.scenario_seed = _scenario_params_from(
                block["generator"])
        else:
            raise ConfigError("scenario needs 'generator' or 'manifest'")

        net_block = doc.get("network", {"builtin": "tinynic"})
        _check_keys(net_block, _NETWORK_KEYS, "network")
        self.network_block = net_block

        self.strategies = [_strategy_from(b) for b in doc["strategies"]]
        names = [n for n, _ in self.strategies]
        if len(set(names)) != len(names):
            raise ConfigError("strategy names must be unique")
        self.seeds = [int(s) for s in doc.get("seeds", [0])]
        if not self.seeds:
            raise ConfigError("seeds list must not be empty")
        self.include_cumulative = bool(doc.get("include_cumulative", False))
        self.cumulative_epochs = int(doc.get("cumulative_epochs", 8))
        self.cumulative_mb = int(doc.get("cumulative_mb", 32))
        self.cumulative_lr = float(doc.get("cumulative_lr", 0.001))
        self.eval_every = int(doc.get("eval_every", 1))
        self.record_timing = bool(doc.get("record_timing", True))
        self.track_drift = bool(doc.get("track_drift", False))
        self.output_dir = doc.get("output_dir")

    def load_scenario(self) -> NicScenario:
        if self.scenario_manifest is not None:
            return load_dataset(self.scenario_manifest)
        return generate_tinynic(self.scenario_params, self.scenario_seed)

    def build_network(self, classes: int, seed: int, tap: str | None = None) -> Network:
        block = self.network_block
        if "spec_path" in block:
            with open(os.path.join(self.base_dir, block["spec_path"])) as fh:
                return Network.from_spec(json.load(fh), seed=seed)
        if block.get("builtin", "tinynic") != "tinynic":
            raise ConfigError(f"unknown builtin network {block.get('builtin')!r}")
        return build_tinynic_network(
            classes=classes, tap=tap or block.get("tap", "relu3"),
            seed=seed, width=int(block.get("width", 8)),
            avg_rate=float(block.get("avg_rate", 0.99)))


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


# -- subcommands --------------------------------------------------------------


def _run_one(cfg: ExperimentConfig, scenario: NicScenario, name: str,
             strat: StrategyConfig, seed: int):
    tap = strat.tap
    if strat.strategy in ("cwr*", "dslda") and tap is None:
        tap = "pool"
    net = cfg.build_network(scenario.classes, seed, tap=tap)
    replace = {"tap": net.tap}
    if cfg.track_drift and strat.replay_kind == "latent":
        replace["store_patterns"] = True  # drift needs the debug back-references
    strat = dataclasses.replace(strat, **replace)
    rows = run_protocol(net, strat, scenario, seed=seed, eval_every=cfg.eval_every,
                        track_drift=cfg.track_drift, record_timing=cfg.record_timing)
    return (name, seed), rows


def cmd_run(args) -> int:
    doc = _load_json(args.config)
    cfg = ExperimentConfig(doc, base_dir=os.path.dirname(os.path.abspath(args.config)))
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    out_dir = args.out or cfg.output_dir
    if not out_dir:
        raise ConfigError("no output directory (set output_dir or pass --out)")
    os.makedirs(out_dir, exist_ok=True)

    scenario = cfg.load_scenario()
    jobs = [(name, strat, seed) for name, strat in cfg.strategies for seed in seeds]
    workers = max(1, int(os.environ.get("LR_THREADS", "1") or "1"))
    results: dict = {}
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_one, cfg, scenario, n, s, sd) for n, s, sd in jobs]
            for fut in futs:
                key, rows = fut.result()
                results[key] = rows
    else:
        for n, s, sd in jobs:
            key, rows = _run_one(cfg, scenario, n, s, sd)
            results[key] = rows

    cumulative: dict[int, MetricsRow] = {}
    if cfg.include_cumulative:
        for seed in seeds:
            net = cfg.build_network(scenario.classes, seed)
            cumulative[seed] = cumulative_baseline(
                net, scenario, epochs=cfg.cumulative_epochs, mb=cfg.cumulative_mb,
                lr=cfg.cumulative_lr, seed=seed, record_timing=cfg.record_timing)

    single = len(cfg.strategies) == 1 and len(seeds) == 1
    summary: dict = {"strategies": {}, "seeds": seeds}
    for name, _ in cfg.strategies:
        per_seed = {}
        for seed in seeds:
            rows = results[(name, seed)]
            fname = "metrics.csv" if single else f"metrics_{_slug(name)}_s{seed}.csv"
            write_metrics_csv(rows, os.path.join(out_dir, fname))
            per_seed[str(seed)] = {
                "final_accuracy": rows[-1].test_accuracy,
                "mean_accuracy": float(np.mean([r.test_accuracy for r in rows])),
                "metrics_file": fname,
            }
        finals = [per_seed[str(s)]["final_accuracy"] for s in seeds]
        summary["strategies"][name] = {
            "per_seed": per_seed,
            "final_accuracy_mean": float(np.mean(finals)),
        }
    if cumulative:
        cum_finals = [cumulative[s].test_accuracy for s in seeds]
        summary["cumulative"] = {
            "per_seed": {str(s): {"final_accuracy": cumulative[s].test_accuracy}
                         for s in seeds},
            "final_accuracy_mean": float(np.mean(cum_finals)),
        }
        for name, _ in cfg.strategies:
            entry = summary["strategies"][name]
            entry["gap_vs_cumulative"] = (summary["cumulative"]["final_accuracy_mean"]
                                          - entry["final_accuracy_mean"])
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(os.path.join(out_dir, "summary.json"))
    return 0


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def cmd_scenario(args) -> int:
    block = _load_json(args.config) if args.config else {}
    params, seed = _scenario_params_from(block)
    if args.seed is not None:
        seed = args.seed
    scenario = generate_tinynic(params, seed)
    path = save_scenario(scenario, args.out)
    print(path)
    return 0


def cmd_tradeoff(args) -> int:
    if args.fixture:
        table = accounting.LayerCostTable.from_csv(args.fixture)
        candidates = table.names()
    else:
        table = accounting.bundled_cost_table()
        candidates = list(accounting.BUNDLED_REPLAY_CANDIDATES)
    if args.candidates is not None:
        candidates = [c for c in args.candidates.split(",") if c]
    rows = accounting.tradeoff_table(table, candidates, args.rm_size,
                                     args.bytes_per_elem)
    sys.stdout.write(accounting.tradeoff_csv(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latentreplay", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run an experiment config")
    pr.add_argument("--config", required=True)
    pr.add_argument("--seed", type=int, default=None, help="override the seeds list")
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_run)

    ps = sub.add_parser("scenario", help="materialize a TinyNIC scenario")
    ps.add_argument("--config", default=None, help="generator params JSON")
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_scenario)

    pt = sub.add_parser("tradeoff", help="emit the replay-layer trade-off CSV")
    pt.add_argument("--fixture", default=None, help="cost table CSV (default: bundled)")
    pt.add_argument("--rm-size", type=int, default=1500)
    pt.add_argument("--bytes-per-elem", type=int, default=1)
    pt.add_argument("--candidates", default=None,
                    help="comma-separated layer names ('' for header only)")
    pt.set_defaults(func=cmd_tradeoff)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TensorFormatError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ShapeError, StateError, ValueError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
