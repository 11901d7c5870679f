"""Ground-truth market environments, stochastic season feedback, and logged history.

Everything here is seeded: pass an explicit seed or numpy Generator and the
outputs are bit-reproducible.  Concurrent runs must own independent
Generators; nothing in this module shares RNG state.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .graph import ActionSet, BudgetAllocation, CoBrandingGraph, action_set

GAIN_NOISE_KINDS = ("bernoulli", "uniform")


class DatasetError(Exception):
    """A counts dataset file is malformed or degenerate."""


@dataclass(frozen=True)
class EnvironmentSpec:
    """Latent market parameters from which a truth graph is built.

    affinities holds the per-pair compatibility on a (-1, 1) scale;
    budget_sensitivity scales how strongly spend levels push the success
    probability through the logistic link.
    """

    affinities: np.ndarray
    gains: np.ndarray
    budget_sensitivity: float = 1.0
    seed: int | None = None
    gain_noise: str = "bernoulli"
    g_cap: float = 1.0

    def __post_init__(self):
        aff = np.asarray(self.affinities, dtype=float)
        aff.setflags(write=False)
        object.__setattr__(self, "affinities", aff)
        gains = np.asarray(self.gains, dtype=float)
        gains.setflags(write=False)
        object.__setattr__(self, "gains", gains)
        if self.gain_noise not in GAIN_NOISE_KINDS:
            raise ValueError(f"unknown gain_noise {self.gain_noise!r}")

    @property
    def num_initiators(self) -> int:
        return self.affinities.shape[0]

    @property
    def num_targets(self) -> int:
        return self.affinities.shape[1]


@dataclass(frozen=True)
class FeedbackRecord:
    """One season's observations: per-edge outcomes and gains of reached targets.

    target_gains only has entries for targets with at least one successful
    edge; realized_reward is the sum of those observed gains.
    """

    edge_outcomes: dict[tuple[int, int, int], int]
    target_gains: dict[int, float]
    realized_reward: float


class MomentStats(NamedTuple):
    count: int
    mean: float
    var: float


@dataclass
class HistoryDataset:
    """Aggregated statistics of logged seasons used for learner warm-starts.

    Also carries the per-sub-brand revenue attribution (each observed gain
    split equally among that season's successful edges into the target),
    which the budget-derivation rule consumes.
    """

    num_initiators: int
    num_targets: int
    plans: tuple[tuple[int, ...], ...]
    caps: tuple[int, ...]
    g_cap: float
    num_seasons: int
    arm_stats: dict[tuple[int, int, int], MomentStats]
    gain_stats: dict[int, MomentStats]
    total_revenue: float = 0.0
    attributed_revenue: np.ndarray = field(default_factory=lambda: np.zeros(0))


def gen_synthetic_spec(
    num_initiators: int,
    num_targets: int,
    seed,
    budget_sensitivity: float = 1.0,
    gain_noise: str = "bernoulli",
    g_cap: float = 1.0,
) -> EnvironmentSpec:
    """Draw affinities ~ U(-1, 1) and gains ~ U(0, g_cap), deterministically in the seed."""
    if num_initiators < 1 or num_targets < 1:
        raise ValueError("need at least one sub-brand and one target")
    rng = np.random.default_rng(seed)
    affinities = rng.uniform(-1.0, 1.0, size=(num_initiators, num_targets))
    gains = rng.uniform(0.0, 1.0, size=num_targets) * g_cap
    return EnvironmentSpec(
        affinities=affinities,
        gains=gains,
        budget_sensitivity=budget_sensitivity,
        seed=seed if isinstance(seed, int) else None,
        gain_noise=gain_noise,
        g_cap=g_cap,
    )


def truth_graph(spec: EnvironmentSpec, plans, caps) -> CoBrandingGraph:
    """Materialize success probabilities logistic(affinity + beta*s) on the plan grid."""
    plans = tuple(tuple(int(s) for s in p) for p in plans)
    mu = {}
    for u in range(spec.num_initiators):
        for s in plans[u]:
            x = spec.affinities[u] + spec.budget_sensitivity * s
            mu[(u, s)] = 1.0 / (1.0 + np.exp(-x))
    return CoBrandingGraph(
        num_initiators=spec.num_initiators,
        num_targets=spec.num_targets,
        plans=plans,
        caps=tuple(int(c) for c in caps),
        gains=spec.gains,
        mu=mu,
        g_cap=spec.g_cap,
    )


def _draw_gain(spec: EnvironmentSpec, g: float, rng: np.random.Generator) -> float:
    # both noise kinds have mean exactly g and support inside [0, g_cap]
    if spec.gain_noise == "bernoulli":
        if spec.g_cap == 0.0:
            return 0.0
        return spec.g_cap if rng.random() < g / spec.g_cap else 0.0
    half_width = min(g, spec.g_cap - g)
    return float(rng.uniform(g - half_width, g + half_width))


def sample_round(
    truth: CoBrandingGraph,
    actions: ActionSet,
    spec: EnvironmentSpec,
    rng: np.random.Generator,
) -> FeedbackRecord:
    """Sample one season: Bernoulli edge outcomes, then gains of reached targets.

    Draw order is fixed (edges sorted by (u, v, s), then reached targets in
    ascending order) so identical Generator states replay identically.
    """
    pairs = actions.sorted_pairs()
    if not pairs:
        return FeedbackRecord({}, {}, 0.0)
    rows: dict[tuple[int, int], np.ndarray] = {}
    probs = np.empty(len(pairs))
    for i, (u, v, s) in enumerate(pairs):
        row = rows.get((u, s))
        if row is None:
            row = rows[(u, s)] = truth.mu_row(u, s)
        probs[i] = row[v]
    outcomes = rng.random(len(pairs)) < probs
    edge_outcomes = {}
    successes_per_target: dict[int, int] = {}
    for (u, v, s), hit in zip(pairs, outcomes):
        hit = int(hit)
        edge_outcomes[(u, v, s)] = hit
        if hit:
            successes_per_target[v] = successes_per_target.get(v, 0) + 1
    target_gains = {}
    for v in sorted(successes_per_target):
        target_gains[v] = _draw_gain(spec, float(truth.gains[v]), rng)
    return FeedbackRecord(edge_outcomes, target_gains, float(sum(target_gains.values())))


class FeasibleAllocationSampler:
    """Exact uniform sampling over feasible allocations via dynamic-programming counts.

    Feasible means: each sub-brand spends 0 or one of its plan levels within
    its cap, and the total spend stays within the budget.
    """

    def __init__(self, plans, caps, budget: int):
        self.options = [
            (0,) + tuple(s for s in plan if 0 < s <= cap)
            for plan, cap in zip(plans, caps)
        ]
        self.budget = min(int(budget), sum(max(o) for o in self.options))
        self.budget = max(self.budget, 0)
        n = len(self.options)
        # ways[u][r]: feasible completions for sub-brands u.. with budget r left
        ways = [[0] * (self.budget + 1) for _ in range(n + 1)]
        ways[n] = [1] * (self.budget + 1)
        for u in range(n - 1, -1, -1):
            for r in range(self.budget + 1):
                ways[u][r] = sum(ways[u + 1][r - o] for o in self.options[u] if o <= r)
        self._ways = ways

    @property
    def num_feasible(self) -> int:
        return self._ways[0][self.budget]

    def sample(self, rng: np.random.Generator) -> tuple[int, ...]:
        levels = []
        remaining = self.budget
        for u, options in enumerate(self.options):
            weights = [self._ways[u + 1][remaining - o] for o in options if o <= remaining]
            total = sum(weights)
            if total < 2**53:
                pick = int(rng.integers(total))
            else:  # fall back to float weights; bias is O(1e-16)
                pick = int(rng.random() * total)
            chosen = 0
            acc = 0
            for o, w in zip([o for o in options if o <= remaining], weights):
                acc += w
                if pick < acc:
                    chosen = o
                    break
            levels.append(chosen)
            remaining -= chosen
        return tuple(levels)


def uniform_feasible_allocation(
    plans, caps, budget: int, rng: np.random.Generator
) -> tuple[int, ...]:
    return FeasibleAllocationSampler(plans, caps, budget).sample(rng)


def _update_moment(stats: MomentStats, x: float) -> MomentStats:
    n = stats.count + 1
    var = ((n - 1) / n) * (stats.var + (stats.mean - x) ** 2 / n)
    mean = stats.mean + (x - stats.mean) / n
    return MomentStats(n, mean, var)


def gen_history(
    truth: CoBrandingGraph,
    spec: EnvironmentSpec,
    num_seasons: int,
    rng: np.random.Generator,
    budget: int | None = None,
) -> HistoryDataset:
    """Log num_seasons of uniform-random feasible allocations against the truth.

    Per-arm and per-gain counts, means, and population variances are
    aggregated online; revenue is attributed to sub-brands by splitting each
    observed gain equally among that season's successful edges into the
    target.  budget=None logs without a total-budget constraint.
    """
    if num_seasons < 0:
        raise ValueError("num_seasons must be >= 0")
    arm_stats: dict[tuple[int, int, int], MomentStats] = {}
    gain_stats: dict[int, MomentStats] = {}
    attributed = np.zeros(truth.num_initiators)
    total_revenue = 0.0
    if budget is None:
        budget = sum(max(p, default=0) for p in truth.plans)
    sampler = FeasibleAllocationSampler(truth.plans, truth.caps, budget)
    for _ in range(num_seasons):
        levels = sampler.sample(rng)
        actions = action_set(truth, BudgetAllocation(levels, budget))
        feedback = sample_round(truth, actions, spec, rng)
        for key, x in feedback.edge_outcomes.items():
            arm_stats[key] = _update_moment(
                arm_stats.get(key, MomentStats(0, 0.0, 0.0)), float(x)
            )
        for v, y in feedback.target_gains.items():
            gain_stats[v] = _update_moment(
                gain_stats.get(v, MomentStats(0, 0.0, 0.0)), y
            )
            winners = [u for (u, w, _s), x in feedback.edge_outcomes.items() if w == v and x]
            for u in winners:
                attributed[u] += y / len(winners)
        total_revenue += feedback.realized_reward
    return HistoryDataset(
        num_initiators=truth.num_initiators,
        num_targets=truth.num_targets,
        plans=truth.plans,
        caps=truth.caps,
        g_cap=truth.g_cap,
        num_seasons=num_seasons,
        arm_stats=arm_stats,
        gain_stats=gain_stats,
        total_revenue=total_revenue,
        attributed_revenue=attributed,
    )


def load_counts_dataset(path: str | Path, g_cap: float = 1.0) -> EnvironmentSpec:
    """Build an EnvironmentSpec from a counts CSV.

    Format: U rows of non-negative integer co-branding counts (V columns),
    then one final row of target gains already scaled into [0, g_cap].
    Affinities map each row's proportions p into 2p - 1.
    """
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise DatasetError(f"non-numeric cell on line {line_no}: {exc}") from None
    if len(rows) < 2:
        raise DatasetError("need at least one counts row and one gains row")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DatasetError(f"ragged rows: widths {sorted(widths)}")
    gains = np.asarray(rows[-1], dtype=float)
    counts = np.asarray(rows[:-1], dtype=float)
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise DatasetError("counts must be non-negative integers")
    if np.any(gains < 0) or np.any(gains > g_cap):
        raise DatasetError(f"gains outside [0, {g_cap}]")
    row_totals = counts.sum(axis=1)
    if np.any(row_totals == 0):
        raise DatasetError("zero total count for at least one sub-brand row")
    proportions = counts / row_totals[:, None]
    return EnvironmentSpec(
        affinities=2.0 * proportions - 1.0,
        gains=gains,
        g_cap=g_cap,
    )


def spec_to_dict(spec: EnvironmentSpec) -> dict:
    return {
        "kind": "spec",
        "num_initiators": spec.num_initiators,
        "num_targets": spec.num_targets,
        "affinities": [[float(x) for x in row] for row in spec.affinities],
        "gains": [float(g) for g in spec.gains],
        "budget_sensitivity": spec.budget_sensitivity,
        "seed": spec.seed,
        "gain_noise": spec.gain_noise,
        "g_cap": spec.g_cap,
    }


def spec_from_dict(data: dict) -> EnvironmentSpec:
    if data.get("kind") != "spec":
        raise DatasetError(f"expected a spec document, got kind={data.get('kind')!r}")
    return EnvironmentSpec(
        affinities=np.asarray(data["affinities"], dtype=float),
        gains=np.asarray(data["gains"], dtype=float),
        budget_sensitivity=float(data["budget_sensitivity"]),
        seed=data.get("seed"),
        gain_noise=data.get("gain_noise", "bernoulli"),
        g_cap=float(data.get("g_cap", 1.0)),
    )


def history_to_dict(history: HistoryDataset) -> dict:
    return {
        "kind": "history",
        "num_initiators": history.num_initiators,
        "num_targets": history.num_targets,
        "plans": [list(p) for p in history.plans],
        "caps": list(history.caps),
        "g_cap": history.g_cap,
        "num_seasons": history.num_seasons,
        "arms": [
            {"u": u, "v": v, "s": s, "count": st.count, "mean": st.mean, "var": st.var}
            for (u, v, s), st in sorted(history.arm_stats.items())
        ],
        "gains": [
            {"v": v, "count": st.count, "mean": st.mean, "var": st.var}
            for v, st in sorted(history.gain_stats.items())
        ],
        "total_revenue": history.total_revenue,
        "attributed_revenue": [float(x) for x in history.attributed_revenue],
    }


def history_from_dict(data: dict) -> HistoryDataset:
    if data.get("kind") != "history":
        raise DatasetError(f"expected a history document, got kind={data.get('kind')!r}")
    return HistoryDataset(
        num_initiators=int(data["num_initiators"]),
        num_targets=int(data["num_targets"]),
        plans=tuple(tuple(int(s) for s in p) for p in data["plans"]),
        caps=tuple(int(c) for c in data["caps"]),
        g_cap=float(data["g_cap"]),
        num_seasons=int(data["num_seasons"]),
        arm_stats={
            (r["u"], r["v"], r["s"]): MomentStats(r["count"], r["mean"], r["var"])
            for r in data["arms"]
        },
        gain_stats={
            r["v"]: MomentStats(r["count"], r["mean"], r["var"]) for r in data["gains"]
        },
        total_revenue=float(data.get("total_revenue", 0.0)),
        attributed_revenue=np.asarray(data.get("attributed_revenue", []), dtype=float),
    )


def save_history(history: HistoryDataset, path: str | Path) -> None:
    Path(path).write_text(json.dumps(history_to_dict(history), indent=2) + "\n")


def load_history(path: str | Path) -> HistoryDataset:
    return history_from_dict(json.loads(Path(path).read_text()))


def save_spec(spec: EnvironmentSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")


def load_spec(path: str | Path) -> EnvironmentSpec:
    return spec_from_dict(json.loads(Path(path).read_text()))
