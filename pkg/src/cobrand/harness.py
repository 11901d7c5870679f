"""Experiment orchestration: full online-offline runs, regret, and sweeps.

Seed discipline: every random stream is derived from the experiment's base
seed through numpy SeedSequence keys, namely

    [seed, 0]                  synthetic environment draw
    [seed, 1]                  warm-start history logging
    [seed, 2, rep, policy_ix]  one online run's feedback and policy randomness
    [seed, 3]                  bootstrap history for the budget-derivation rule
    [seed, 4, rep]             per-instance draws in offline sweeps

so the environment and history are one fixed dataset per experiment while
repetitions vary only the online randomness.  Re-running any entry point
with the same config and seed reproduces results bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .environment import (
    EnvironmentSpec,
    HistoryDataset,
    gen_history,
    gen_synthetic_spec,
    load_counts_dataset,
    truth_graph,
)
from .graph import BudgetAllocation, CoBrandingGraph, action_set, expected_reward
from .learner import (
    POLICIES,
    baseline_graph,
    eps_greedy_decide,
    init_from_history,
    ucb_graph,
    update,
)
from .optimizer import OracleLimitError, brute_force_opt, gpe
from .environment import sample_round

ALPHA = 1.0 - math.exp(-1.0)

POLICY_INDEX = {name: i for i, name in enumerate(POLICIES)}

_STREAM_SPEC = 0
_STREAM_HISTORY = 1
_STREAM_RUN = 2
_STREAM_BOOTSTRAP = 3
_STREAM_INSTANCE = 4


class ConfigError(Exception):
    """An experiment configuration is missing fields or inconsistent."""


class HarnessError(Exception):
    """An experiment cannot proceed (e.g. degenerate derived budget)."""


class InfeasibleConfigError(Exception):
    """No sub-brand can be funded under the configured budget and plans."""


@dataclass
class ExperimentConfig:
    """All knobs of one experiment; maps 1:1 onto the JSON config schema."""

    num_initiators: int = 10
    num_targets: int = 60
    dataset: str | None = None
    budget_sensitivity: float = 1.0
    gain_noise: str = "bernoulli"
    g_cap: float = 1.0
    plans: tuple[tuple[int, ...], ...] | None = None
    caps: tuple[int, ...] | None = None
    bootstrap_cap: int = 3
    policies: tuple[str, ...] = ("CBOL",)
    epsilon: float = 0.1
    history_seasons: int = 50
    k: int = 3
    k_values: tuple[int, ...] = (1, 2, 3, 4, 5)
    budget: int | None = None
    horizon: int = 2000
    repetitions: int = 10
    base_seed: int = 0
    oracle: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError(f"unknown policy {p!r}, expected one of {POLICIES}")
        if self.plans is not None:
            self.plans = tuple(tuple(int(s) for s in p) for p in self.plans)
        if self.caps is not None:
            self.caps = tuple(int(c) for c in self.caps)
        self.policies = tuple(self.policies)
        self.k_values = tuple(int(k) for k in self.k_values)

    @property
    def config_hash(self) -> str:
        payload = {k: v for k, v in vars(self).items()}
        digest = hashlib.sha256(
            json.dumps(payload, sort_keys=True, default=str).encode()
        ).hexdigest()
        return digest[:16]

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        schema = raw.get("schema")
        if schema != "cobrand-config-v1":
            raise ConfigError(f"unsupported config schema {schema!r}")
        env = raw.get("environment", {})
        learner = raw.get("learner", {})
        optimizer = raw.get("optimizer", {})
        harness = raw.get("harness", {})
        try:
            return cls(
                num_initiators=env.get("num_initiators", 10),
                num_targets=env.get("num_targets", 60),
                dataset=env.get("dataset"),
                budget_sensitivity=env.get("budget_sensitivity", 1.0),
                gain_noise=env.get("gain_noise", "bernoulli"),
                g_cap=env.get("g_cap", 1.0),
                plans=env.get("plans"),
                caps=env.get("caps"),
                bootstrap_cap=env.get("bootstrap_cap", 3),
                policies=tuple(learner.get("policies", ["CBOL"])),
                epsilon=learner.get("epsilon", 0.1),
                history_seasons=learner.get("history_seasons", 50),
                k=optimizer.get("k", 3),
                k_values=tuple(optimizer.get("k_values", [1, 2, 3, 4, 5])),
                budget=optimizer.get("budget"),
                horizon=harness.get("horizon", 2000),
                repetitions=harness.get("repetitions", 10),
                base_seed=harness.get("seed", 0),
                oracle=harness.get("oracle", False),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)


@dataclass
class RunResult:
    """One policy x repetition trace with full reproduction provenance."""

    policy: str
    rep: int
    seed: int
    rewards: np.ndarray
    cum_rewards: np.ndarray
    alpha_regret: np.ndarray | None
    config_hash: str
    wall_clock: dict[str, float] = field(default_factory=dict)


@dataclass
class EnvironmentBundle:
    """Fully materialized experiment inputs shared by every repetition."""

    spec: EnvironmentSpec
    truth: CoBrandingGraph
    history: HistoryDataset
    budget: int
    optimal_reward: float | None = None
    oracle_skipped: bool = False


def _tier_levels(cap: int, tier_count: int) -> tuple[int, ...]:
    levels = sorted({cap * i // tier_count for i in range(1, tier_count + 1)})
    return tuple(s for s in levels if s > 0)


def derive_budget_rule(
    history: HistoryDataset, cap_scale: float = 2.0, tier_count: int = 3
):
    """Derive (total budget, caps, plan tiers) from logged-history revenue.

    The base budget is a hundredth of the total logged revenue, scaled by
    ten; each cap is the sub-brand's revenue share times cap_scale * budget;
    plans are the low/medium/high tier floors of the cap with degenerate
    tiers dropped.
    """
    revenue = history.total_revenue
    if revenue <= 0:
        raise HarnessError("zero total revenue in history; cannot derive a budget")
    base = round(revenue / 100.0)
    budget = 10 * base
    if budget < 1:
        raise HarnessError(
            f"history revenue {revenue:.3f} derives a non-positive budget; "
            "provide an explicit budget instead"
        )
    shares = history.attributed_revenue / revenue
    caps = tuple(int(round(share * cap_scale * budget)) for share in shares)
    plans = tuple(_tier_levels(c, tier_count) for c in caps)
    return budget, caps, plans


def _check_feasible(plans, budget: int) -> None:
    fundable = [min(p) for p in plans if p]
    if not fundable or budget < min(fundable):
        raise InfeasibleConfigError(
            f"budget {budget} is below every spend level; nothing can be funded"
        )


def build_environment(config: ExperimentConfig) -> EnvironmentBundle:
    """Materialize spec, truth graph, warm-start history, and budget for a config.

    Missing plans/caps are derived with the revenue rule from a bootstrap
    history logged on a uniform-cap grid; a missing budget is derived the
    same way.  The environment depends only on the base seed, never on the
    repetition index.
    """
    if config.dataset is not None:
        loaded = load_counts_dataset(config.dataset, g_cap=config.g_cap)
        spec = replace(
            loaded,
            budget_sensitivity=config.budget_sensitivity,
            seed=config.base_seed,
            gain_noise=config.gain_noise,
        )
    else:
        spec = gen_synthetic_spec(
            config.num_initiators,
            config.num_targets,
            seed=np.random.SeedSequence([config.base_seed, _STREAM_SPEC]),
            budget_sensitivity=config.budget_sensitivity,
            gain_noise=config.gain_noise,
            g_cap=config.g_cap,
        )
    num_u = spec.num_initiators

    plans, caps, budget = config.plans, config.caps, config.budget
    if (plans is None) != (caps is None):
        raise ConfigError("plans and caps must be given together or both derived")
    if plans is None or budget is None:
        if config.history_seasons < 1:
            raise ConfigError(
                "deriving budget/caps/plans needs history_seasons >= 1"
            )
        boot_caps = caps if caps is not None else (config.bootstrap_cap,) * num_u
        boot_plans = plans if plans is not None else tuple(
            _tier_levels(c, 3) for c in boot_caps
        )
        boot_truth = truth_graph(spec, boot_plans, boot_caps)
        boot_rng = np.random.default_rng(
            np.random.SeedSequence([config.base_seed, _STREAM_BOOTSTRAP])
        )
        boot_history = gen_history(
            boot_truth, spec, config.history_seasons, boot_rng, budget=None
        )
        derived_budget, derived_caps, derived_plans = derive_budget_rule(boot_history)
        if plans is None:
            plans, caps = derived_plans, derived_caps
        if budget is None:
            budget = derived_budget

    _check_feasible(plans, budget)
    truth = truth_graph(spec, plans, caps)
    history_rng = np.random.default_rng(
        np.random.SeedSequence([config.base_seed, _STREAM_HISTORY])
    )
    history = gen_history(
        truth, spec, config.history_seasons, history_rng, budget=budget
    )
    return EnvironmentBundle(spec=spec, truth=truth, history=history, budget=budget)


def alpha_regret(
    rewards: np.ndarray, optimal_reward: float, alpha: float = ALPHA
) -> np.ndarray:
    """Cumulative alpha-regret series alpha * t * r_opt - sum of rewards up to t.

    Lucky runs may go negative; values are reported as-is.
    """
    rewards = np.asarray(rewards, dtype=float)
    rounds = np.arange(1, len(rewards) + 1)
    return alpha * optimal_reward * rounds - np.cumsum(rewards)


def _run_single(
    bundle: EnvironmentBundle,
    config: ExperimentConfig,
    rep: int,
    policy: str,
) -> RunResult:
    rng = np.random.default_rng(
        np.random.SeedSequence(
            [config.base_seed, _STREAM_RUN, rep, POLICY_INDEX[policy]]
        )
    )
    state = init_from_history(bundle.history, policy)
    rewards = np.zeros(config.horizon)
    t_optimize = t_environment = t_learner = 0.0
    total_start = time.perf_counter()
    for t in range(1, config.horizon + 1):
        tic = time.perf_counter()
        if policy == "CBOL":
            allocation = gpe(ucb_graph(state, t, config.g_cap), bundle.budget, config.k)
        elif policy == "EPS":
            allocation = eps_greedy_decide(
                state, config.epsilon, bundle.budget, config.k, rng
            )
        else:
            allocation = gpe(
                baseline_graph(state, t, config.g_cap, rng), bundle.budget, config.k
            )
        t_optimize += time.perf_counter() - tic

        tic = time.perf_counter()
        actions = action_set(bundle.truth, allocation)
        feedback = sample_round(bundle.truth, actions, bundle.spec, rng)
        t_environment += time.perf_counter() - tic

        tic = time.perf_counter()
        update(state, feedback)
        t_learner += time.perf_counter() - tic
        rewards[t - 1] = feedback.realized_reward

    regret = (
        alpha_regret(rewards, bundle.optimal_reward)
        if bundle.optimal_reward is not None
        else None
    )
    return RunResult(
        policy=policy,
        rep=rep,
        seed=config.base_seed,
        rewards=rewards,
        cum_rewards=np.cumsum(rewards),
        alpha_regret=regret,
        config_hash=config.config_hash,
        wall_clock={
            "optimize": t_optimize,
            "environment": t_environment,
            "learner": t_learner,
            "total": time.perf_counter() - total_start,
        },
    )


def run_online(config: ExperimentConfig) -> list[RunResult]:
    """Run the full online-offline loop for every (repetition, policy) pair.

    Each round builds the policy's graph, optimizes the budget on it, plays
    the resulting action set against the truth, and folds the feedback back
    into the learner.  When the oracle is enabled and the instance is small
    enough, per-round alpha-regret against the brute-force optimum is
    attached; otherwise runs carry rewards only.
    """
    bundle = build_environment(config)
    if config.oracle:
        try:
            _, bundle.optimal_reward = brute_force_opt(bundle.truth, bundle.budget)
        except OracleLimitError:
            bundle.oracle_skipped = True
    results = []
    for rep in range(config.repetitions):
        for policy in config.policies:
            results.append(_run_single(bundle, config, rep, policy))
    return results


def aggregate_runs(results: list[RunResult]) -> list[dict]:
    """Per-policy, per-round mean cumulative reward with a 95% normal CI.

    Rows come out sorted by (policy, round); the CI is mean +/- 1.96 * sd /
    sqrt(n) with the sample standard deviation across repetitions.
    """
    by_policy: dict[str, list[np.ndarray]] = {}
    for res in results:
        by_policy.setdefault(res.policy, []).append(res.cum_rewards)
    rows = []
    for policy in sorted(by_policy):
        matrix = np.vstack(by_policy[policy])
        n = matrix.shape[0]
        mean = matrix.mean(axis=0)
        sd = matrix.std(axis=0, ddof=1) if n > 1 else np.zeros(matrix.shape[1])
        half = 1.96 * sd / math.sqrt(n)
        for rnd in range(matrix.shape[1]):
            rows.append(
                {
                    "policy": policy,
                    "round": rnd + 1,
                    "mean": float(mean[rnd]),
                    "ci_lo": float(mean[rnd] - half[rnd]),
                    "ci_hi": float(mean[rnd] + half[rnd]),
                }
            )
    return rows


def sweep_k(config: ExperimentConfig, k_values=None) -> list[dict]:
    """Time and score the partial-enumeration optimizer across K values.

    Each repetition draws a fresh environment instance (stream [seed, 4,
    rep]) and evaluates every K on that same truth graph and budget, so K
    comparisons are paired.  Rows report per-K means sorted by K.
    """
    k_values = tuple(k_values) if k_values is not None else config.k_values
    rewards = {k: [] for k in k_values}
    runtimes = {k: [] for k in k_values}
    for rep in range(config.repetitions):
        if config.dataset is not None:
            spec = replace(
                load_counts_dataset(config.dataset, g_cap=config.g_cap),
                budget_sensitivity=config.budget_sensitivity,
                seed=config.base_seed,
                gain_noise=config.gain_noise,
            )
        else:
            spec = gen_synthetic_spec(
                config.num_initiators,
                config.num_targets,
                seed=np.random.SeedSequence([config.base_seed, _STREAM_INSTANCE, rep]),
                budget_sensitivity=config.budget_sensitivity,
                gain_noise=config.gain_noise,
                g_cap=config.g_cap,
            )
        plans, caps, budget = config.plans, config.caps, config.budget
        if plans is None or budget is None:
            boot_caps = caps if caps is not None else (config.bootstrap_cap,) * spec.num_initiators
            boot_plans = plans if plans is not None else tuple(
                _tier_levels(c, 3) for c in boot_caps
            )
            boot_truth = truth_graph(spec, boot_plans, boot_caps)
            boot_rng = np.random.default_rng(
                np.random.SeedSequence([config.base_seed, _STREAM_BOOTSTRAP, rep])
            )
            boot_history = gen_history(
                boot_truth, spec, max(config.history_seasons, 1), boot_rng, budget=None
            )
            derived_budget, derived_caps, derived_plans = derive_budget_rule(boot_history)
            if plans is None:
                plans, caps = derived_plans, derived_caps
            if budget is None:
                budget = derived_budget
        _check_feasible(plans, budget)
        truth = truth_graph(spec, plans, caps)
        gpe(truth, budget, 0)  # warm the jitted greedy kernel outside the timings
        for k in k_values:
            tic = time.perf_counter()
            allocation = gpe(truth, budget, k)
            elapsed = time.perf_counter() - tic
            rewards[k].append(expected_reward(truth, allocation))
            runtimes[k].append(elapsed * 1000.0)
    return [
        {
            "K": k,
            "mean_reward": float(np.mean(rewards[k])),
            "mean_runtime_ms": float(np.mean(runtimes[k])),
        }
        for k in sorted(k_values)
    ]


def _fmt(x) -> str:
    return format(float(x), ".12g")


def write_results_csv(results: list[RunResult], path: str | Path) -> None:
    """Persist per-round traces, sorted by (policy, rep, round) for determinism."""
    lines = ["policy,rep,round,reward,cum_reward,alpha_regret,seed"]
    for res in sorted(results, key=lambda r: (r.policy, r.rep)):
        for t in range(len(res.rewards)):
            regret = "" if res.alpha_regret is None else _fmt(res.alpha_regret[t])
            lines.append(
                f"{res.policy},{res.rep},{t + 1},{_fmt(res.rewards[t])},"
                f"{_fmt(res.cum_rewards[t])},{regret},{res.seed}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary_csv(rows: list[dict], path: str | Path) -> None:
    lines = ["policy,round,mean,ci_lo,ci_hi"]
    for row in rows:
        lines.append(
            f"{row['policy']},{row['round']},{_fmt(row['mean'])},"
            f"{_fmt(row['ci_lo'])},{_fmt(row['ci_hi'])}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_sweep_csv(rows: list[dict], path: str | Path) -> None:
    lines = ["K,mean_reward,mean_runtime_ms"]
    for row in rows:
        lines.append(f"{row['K']},{_fmt(row['mean_reward'])},{_fmt(row['mean_runtime_ms'])}")
    Path(path).write_text("\n".join(lines) + "\n")
