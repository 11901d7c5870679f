"""Command-line harness binding JSON experiment configs to the library.

Commands: gen-env, gen-history, optimize, oracle, run, sweep-k.  Exit codes
are stable: 0 success, 2 usage, 3 config I/O, 4 infeasible instance,
5 oracle limit exceeded, 1 any other library error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .environment import (
    DatasetError,
    gen_history,
    gen_synthetic_spec,
    load_counts_dataset,
    save_history,
    save_spec,
    truth_graph,
)
from .graph import AllocationError, GraphError, expected_reward, load_graph, save_graph
from .harness import (
    ConfigError,
    ExperimentConfig,
    HarnessError,
    InfeasibleConfigError,
    aggregate_runs,
    run_online,
    sweep_k,
    write_results_csv,
    write_summary_csv,
    write_sweep_csv,
    _STREAM_BOOTSTRAP,
    _STREAM_HISTORY,
    _STREAM_SPEC,
)
from .learner import LearnerError
from .optimizer import OracleLimitError, brute_force_opt, count_seeds, gpe

COMMANDS = ("gen-env", "gen-history", "optimize", "oracle", "run", "sweep-k")


@dataclass
class CliConfig:
    """One parsed invocation; overrides always win over config-file values."""

    command: str
    config_path: str
    out_dir: str = "."
    seed: int | None = None
    k: int | None = None
    horizon: int | None = None
    reps: int | None = None
    policies: tuple[str, ...] | None = None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cobrand",
        description="Co-branding market simulation and budget optimization harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    help_lines = {
        "gen-env": "generate an environment spec (and truth graph when the grid is explicit)",
        "gen-history": "log a warm-start history dataset against the truth graph",
        "optimize": "run the partial-enumeration greedy on a graph file",
        "oracle": "brute-force the exact optimum of a graph file",
        "run": "full online-offline experiment producing results and summary CSVs",
        "sweep-k": "time and score the optimizer across K values",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=help_lines[name])
        p.add_argument("--config", required=True, metavar="PATH",
                       help="JSON experiment config")
        p.add_argument("--out", default=".", metavar="DIR", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override harness.seed")
        p.add_argument("--K", type=int, default=None, dest="k",
                       help="override optimizer.k (and the sweep's K list)")
        p.add_argument("--T", type=int, default=None, dest="horizon",
                       help="override harness.horizon")
        p.add_argument("--reps", type=int, default=None, help="override harness.repetitions")
        p.add_argument("--policy", default=None, metavar="NAME[,NAME...]",
                       help="override learner.policies")
    return parser


def parse_invocation(argv) -> CliConfig:
    args = build_parser().parse_args(argv)
    policies = tuple(args.policy.split(",")) if args.policy else None
    return CliConfig(
        command=args.command,
        config_path=args.config,
        out_dir=args.out,
        seed=args.seed,
        k=args.k,
        horizon=args.horizon,
        reps=args.reps,
        policies=policies,
    )


def _load_raw(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _apply_overrides(raw: dict, cli: CliConfig) -> dict:
    raw = json.loads(json.dumps(raw))  # deep copy
    if cli.seed is not None:
        raw.setdefault("harness", {})["seed"] = cli.seed
    if cli.horizon is not None:
        raw.setdefault("harness", {})["horizon"] = cli.horizon
    if cli.reps is not None:
        raw.setdefault("harness", {})["repetitions"] = cli.reps
    if cli.k is not None:
        raw.setdefault("optimizer", {})["k"] = cli.k
        raw.setdefault("optimizer", {})["k_values"] = [cli.k]
    if cli.policies is not None:
        raw.setdefault("learner", {})["policies"] = list(cli.policies)
    return raw


def _build_spec(config: ExperimentConfig):
    if config.dataset is not None:
        loaded = load_counts_dataset(config.dataset, g_cap=config.g_cap)
        return replace(
            loaded,
            budget_sensitivity=config.budget_sensitivity,
            seed=config.base_seed,
            gain_noise=config.gain_noise,
        )
    return gen_synthetic_spec(
        config.num_initiators,
        config.num_targets,
        seed=np.random.SeedSequence([config.base_seed, _STREAM_SPEC]),
        budget_sensitivity=config.budget_sensitivity,
        gain_noise=config.gain_noise,
        g_cap=config.g_cap,
    )


def _cmd_gen_env(config: ExperimentConfig, out: Path) -> list[Path]:
    spec = _build_spec(config)
    spec_path = out / "spec.json"
    save_spec(spec, spec_path)
    written = [spec_path]
    if config.plans is not None and config.caps is not None:
        graph_path = out / "truth_graph.json"
        save_graph(truth_graph(spec, config.plans, config.caps), graph_path)
        written.append(graph_path)
    return written


def _cmd_gen_history(config: ExperimentConfig, out: Path) -> list[Path]:
    if config.plans is None or config.caps is None:
        raise ConfigError("gen-history needs explicit plans and caps in the config")
    spec = _build_spec(config)
    truth = truth_graph(spec, config.plans, config.caps)
    rng = np.random.default_rng(
        np.random.SeedSequence([config.base_seed, _STREAM_HISTORY])
    )
    history = gen_history(
        truth, spec, config.history_seasons, rng, budget=config.budget
    )
    path = out / "history.json"
    save_history(history, path)
    return [path]


def _graph_and_budget(raw: dict, out_of: str):
    block = raw.get("optimizer", {})
    graph_path = block.get("graph")
    budget = block.get("budget")
    if graph_path is None or budget is None:
        raise ConfigError(f"{out_of} needs optimizer.graph and optimizer.budget")
    try:
        graph = load_graph(graph_path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read graph {graph_path}: {exc}") from None
    return graph, int(budget)


def _cmd_optimize(raw: dict, config: ExperimentConfig, out: Path) -> list[Path]:
    graph, budget = _graph_and_budget(raw, "optimize")
    tic = time.perf_counter()
    allocation = gpe(graph, budget, config.k)
    elapsed_ms = (time.perf_counter() - tic) * 1000.0
    payload = {
        "allocation": list(allocation.levels),
        "expected_reward": expected_reward(graph, allocation),
        "K": config.k,
        "seeds_evaluated": count_seeds(graph.plans, graph.caps, budget, config.k),
        "elapsed_ms": elapsed_ms,
    }
    path = out / "optimize.json"
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return [path]


def _cmd_oracle(raw: dict, out: Path) -> list[Path]:
    graph, budget = _graph_and_budget(raw, "oracle")
    allocation, value = brute_force_opt(graph, budget)
    payload = {
        "allocation": list(allocation.levels),
        "expected_reward": value,
    }
    path = out / "oracle.json"
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return [path]


def _cmd_run(config: ExperimentConfig, out: Path) -> list[Path]:
    results = run_online(config)
    results_path = out / "results.csv"
    summary_path = out / "summary.csv"
    meta_path = out / "run_meta.json"
    write_results_csv(results, results_path)
    write_summary_csv(aggregate_runs(results), summary_path)
    oracle_used = any(r.alpha_regret is not None for r in results)
    meta = {
        "config_hash": config.config_hash,
        "seed": config.base_seed,
        "policies": list(config.policies),
        "horizon": config.horizon,
        "repetitions": config.repetitions,
        "oracle_used": oracle_used,
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return [results_path, summary_path, meta_path]


def _cmd_sweep_k(config: ExperimentConfig, out: Path) -> list[Path]:
    rows = sweep_k(config)
    path = out / "sweep.csv"
    write_sweep_csv(rows, path)
    return [path]


def execute(cli: CliConfig) -> int:
    """Dispatch one invocation; returns the process exit code."""
    started = time.perf_counter()
    written: list[Path] = []
    try:
        raw = _apply_overrides(_load_raw(cli.config_path), cli)
        config = ExperimentConfig.from_dict(raw)
        out = Path(cli.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if cli.command == "gen-env":
            written = _cmd_gen_env(config, out)
        elif cli.command == "gen-history":
            written = _cmd_gen_history(config, out)
        elif cli.command == "optimize":
            written = _cmd_optimize(raw, config, out)
        elif cli.command == "oracle":
            written = _cmd_oracle(raw, out)
        elif cli.command == "run":
            written = _cmd_run(config, out)
        elif cli.command == "sweep-k":
            written = _cmd_sweep_k(config, out)
        else:  # unreachable: argparse restricts choices
            return 2
    except Exception as exc:
        for path in written:
            path.unlink(missing_ok=True)
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        if isinstance(exc, (ConfigError, DatasetError)):
            return 3
        if isinstance(exc, InfeasibleConfigError):
            return 4
        if isinstance(exc, OracleLimitError):
            return 5
        if isinstance(
            exc, (GraphError, AllocationError, LearnerError, HarnessError)
        ):
            return 1
        raise
    elapsed = time.perf_counter() - started
    print(f"{cli.command}: wrote {', '.join(str(p) for p in written)} ({elapsed:.2f}s)")
    return 0


def main(argv=None) -> int:
    args = sys.argv[1:] if argv is None else argv
    return execute(parse_invocation(args))


if __name__ == "__main__":
    sys.exit(main())
