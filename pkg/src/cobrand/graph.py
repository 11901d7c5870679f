"""Bipartite co-branding market model and its expected-reward function.

A market instance couples U initiating sub-brands with V target brands.
Funding sub-brand u at spend level s gives every pair (u, v) an independent
success probability mu[(u, s)][v]; a target that sees at least one success
pays out its gain.  Budgets live on a finite per-sub-brand grid of spend
levels, so every allocation handled here is integer-valued and on-grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class GraphError(Exception):
    """Market data is missing or malformed (e.g. no mu entry for a spend level)."""


class AllocationError(Exception):
    """An allocation violates the plan grid, caps, or total budget."""


@dataclass(frozen=True)
class CoBrandingGraph:
    """Full market parameterization shared by environment truths and learner estimates.

    mu maps (sub_brand, spend_level) to a length-V array of success
    probabilities; NaN marks a missing entry (tolerated at construction,
    rejected when the entry is actually used).  Treat instances as immutable.
    """

    num_initiators: int
    num_targets: int
    plans: tuple[tuple[int, ...], ...]
    caps: tuple[int, ...]
    gains: np.ndarray
    mu: dict[tuple[int, int], np.ndarray]
    g_cap: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "plans", tuple(tuple(int(s) for s in p) for p in self.plans))
        object.__setattr__(self, "caps", tuple(int(c) for c in self.caps))
        gains = np.asarray(self.gains, dtype=float)
        gains.setflags(write=False)
        object.__setattr__(self, "gains", gains)
        mu = {}
        for (u, s), row in self.mu.items():
            arr = np.asarray(row, dtype=float)
            arr.setflags(write=False)
            mu[(int(u), int(s))] = arr
        object.__setattr__(self, "mu", mu)

    def mu_row(self, u: int, s: int) -> np.ndarray:
        """Success probabilities of every (u, v) pair at spend level s."""
        row = self.mu.get((u, s))
        if row is None:
            raise GraphError(f"no success probabilities for sub-brand {u} at level {s}")
        if np.isnan(row).any():
            raise GraphError(f"incomplete success probabilities for sub-brand {u} at level {s}")
        return row

    def mu_at(self, u: int, v: int, s: int) -> float:
        return float(self.mu_row(u, s)[v])

    def mu_is_monotone(self) -> bool:
        """True when mu is non-decreasing in the spend level for every pair."""
        for u, levels in enumerate(self.plans):
            prev = None
            for s in levels:
                row = self.mu.get((u, s))
                if row is None:
                    return False
                if prev is not None and np.any(row < prev - 0.0):
                    return False
                prev = row
        return True

    def validate(self) -> list[str]:
        """Invariant violations as human-readable strings; empty means valid."""
        problems = []
        if len(self.plans) != self.num_initiators:
            problems.append("plans length != num_initiators")
        if len(self.caps) != self.num_initiators:
            problems.append("caps length != num_initiators")
        if self.gains.shape != (self.num_targets,):
            problems.append("gains length != num_targets")
        if np.any(self.gains < 0) or np.any(self.gains > self.g_cap):
            problems.append("gains outside [0, g_cap]")
        for u, levels in enumerate(self.plans):
            if len(set(levels)) != len(levels):
                problems.append(f"duplicate spend levels for sub-brand {u}")
            if any(b <= a for a, b in zip(levels, levels[1:])):
                problems.append(f"spend levels not increasing for sub-brand {u}")
            for s in levels:
                if s <= 0 or s > self.caps[u]:
                    problems.append(f"level {s} of sub-brand {u} outside (0, cap]")
                row = self.mu.get((u, s))
                if row is None or np.isnan(row).any():
                    problems.append(f"missing success probabilities at ({u}, {s})")
                elif np.any(row < 0) or np.any(row > 1):
                    problems.append(f"success probabilities outside [0, 1] at ({u}, {s})")
        return problems


@dataclass(frozen=True)
class BudgetAllocation:
    """Integer spend per sub-brand plus the total budget it must respect."""

    levels: tuple[int, ...]
    total_budget: int

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(x) for x in self.levels))
        object.__setattr__(self, "total_budget", int(self.total_budget))

    @property
    def spent(self) -> int:
        return sum(self.levels)

    def funded(self) -> list[int]:
        return [u for u, s in enumerate(self.levels) if s > 0]


@dataclass(frozen=True)
class ActionSet:
    """Co-branding attempts implied by an allocation: (sub_brand, target, level) triples."""

    pairs: frozenset[tuple[int, int, int]]

    def __len__(self) -> int:
        return len(self.pairs)

    def sorted_pairs(self) -> list[tuple[int, int, int]]:
        return sorted(self.pairs)


def validate_allocation(graph: CoBrandingGraph, allocation: BudgetAllocation) -> list[str]:
    """Constraint violations of the allocation; an empty list means feasible.

    Raises AllocationError when the vector length does not even match the
    number of sub-brands (malformed input rather than an infeasible point).
    """
    if len(allocation.levels) != graph.num_initiators:
        raise AllocationError(
            f"allocation has {len(allocation.levels)} entries, expected {graph.num_initiators}"
        )
    violations = []
    for u, s in enumerate(allocation.levels):
        if s == 0:
            continue
        if s not in graph.plans[u]:
            violations.append(f"b_{u}={s} not a spend level of sub-brand {u}")
        if s > graph.caps[u]:
            violations.append(f"b_{u}={s} exceeds cap {graph.caps[u]}")
    if allocation.spent > allocation.total_budget:
        violations.append(
            f"total spend {allocation.spent} exceeds budget {allocation.total_budget}"
        )
    return violations


def action_set(graph: CoBrandingGraph, allocation: BudgetAllocation) -> ActionSet:
    """Every funded sub-brand attempts co-branding with every target at its level."""
    problems = validate_allocation(graph, allocation)
    if problems:
        raise AllocationError("; ".join(problems))
    pairs = frozenset(
        (u, v, s)
        for u, s in enumerate(allocation.levels)
        if s > 0
        for v in range(graph.num_targets)
    )
    return ActionSet(pairs)


def expected_reward(graph: CoBrandingGraph, allocation: BudgetAllocation) -> float:
    """Expected season revenue sum_v g_v * (1 - prod_funded (1 - mu_uv)).

    The product over zero funded sub-brands is 1, so the zero allocation
    yields exactly 0.
    """
    problems = validate_allocation(graph, allocation)
    if problems:
        raise AllocationError("; ".join(problems))
    survival = np.ones(graph.num_targets)
    for u, s in enumerate(allocation.levels):
        if s > 0:
            survival = survival * (1.0 - graph.mu_row(u, s))
    return float(graph.gains @ (1.0 - survival))


class RewardTracker:
    """Incremental reward evaluation for single-sub-brand level moves.

    Keeps per-target survival products so that probing or committing one
    level change costs O(V) instead of a full O(U*V) re-evaluation.  Exact
    zero factors (mu == 1) are counted separately instead of multiplied in,
    so they divide back out without loss.
    """

    def __init__(self, graph: CoBrandingGraph, allocation: BudgetAllocation):
        self.graph = graph
        self.levels = list(allocation.levels)
        self._nz = np.ones(graph.num_targets)
        self._zeros = np.zeros(graph.num_targets, dtype=int)
        for u, s in enumerate(self.levels):
            if s > 0:
                self._fold(1.0 - graph.mu_row(u, s), into=+1)

    def _fold(self, factor: np.ndarray, into: int) -> None:
        zero = factor == 0.0
        if into > 0:
            self._nz[~zero] *= factor[~zero]
            self._zeros += zero
        else:
            self._nz[~zero] /= factor[~zero]
            self._zeros -= zero

    def _survival(self) -> np.ndarray:
        return np.where(self._zeros > 0, 0.0, self._nz)

    def reward(self) -> float:
        return float(self.graph.gains @ (1.0 - self._survival()))

    def delta(self, u: int, new_level: int) -> float:
        """Reward change from moving sub-brand u to new_level, current state untouched."""
        old = self._factor(u)
        new = 1.0 - self.graph.mu_row(u, new_level)
        nz = self._nz.copy()
        old_zero = old == 0.0
        new_zero = new == 0.0
        nz[~old_zero] /= old[~old_zero]
        nz[~new_zero] *= new[~new_zero]
        zeros = self._zeros - old_zero + new_zero
        survival_new = np.where(zeros > 0, 0.0, nz)
        return float(self.graph.gains @ (self._survival() - survival_new))

    def commit(self, u: int, new_level: int) -> None:
        self._fold(self._factor(u), into=-1)
        self._fold(1.0 - self.graph.mu_row(u, new_level), into=+1)
        self.levels[u] = new_level

    def _factor(self, u: int) -> np.ndarray:
        if self.levels[u] == 0:
            return np.ones(self.graph.num_targets)
        return 1.0 - self.graph.mu_row(u, self.levels[u])


def marginal_gain(graph: CoBrandingGraph, allocation: BudgetAllocation, u: int, s: int) -> float:
    """Per-unit reward gain (r(b + s*chi_u) - r(b)) / s for raising u's spend by s.

    The increment must land on a spend level of u's plan and stay within its
    cap; off-grid requests indicate a caller bug and raise.
    """
    if s < 1:
        raise AllocationError(f"increment must be >= 1, got {s}")
    new_level = allocation.levels[u] + s
    if new_level not in graph.plans[u] or new_level > graph.caps[u]:
        raise AllocationError(
            f"level {new_level} for sub-brand {u} is off the plan grid or above its cap"
        )
    tracker = RewardTracker(graph, allocation)
    return tracker.delta(u, new_level) / s


@dataclass
class LatticeCheckReport:
    """Outcome of sampled monotonicity and diminishing-returns checks."""

    passed: bool
    exchange_checks: int
    monotonicity_checks: int
    min_slack: float
    counterexample: str | None = None


def check_diminishing_returns(
    graph: CoBrandingGraph,
    samples: int = 1000,
    seed: int = 0,
    tolerance: float = 1e-12,
) -> LatticeCheckReport:
    """Sampled verification that the reward is monotone with diminishing returns.

    At lattice points x on the plan grid and distinct coordinates i != j it
    checks the exchange inequality

        r(x + step_i) - r(x)  >=  r(x + step_j + step_i) - r(x + step_j)

    where step_k raises coordinate k to its next spend level, plus plain
    monotonicity r(x) <= r(y) for sampled x <= y.  Failures are reported,
    not raised; a non-monotone mu is expected to fail here.
    """
    rng = np.random.default_rng(seed)
    options = [(0,) + tuple(p) for p in graph.plans]
    min_slack = np.inf
    exchange_checks = 0
    monotonicity_checks = 0

    def reward_of(idx):
        levels = tuple(options[u][i] for u, i in enumerate(idx))
        return expected_reward(graph, BudgetAllocation(levels, sum(levels)))

    for _ in range(samples):
        idx = tuple(int(rng.integers(len(opt))) for opt in options)

        # monotone comparison point: raise a random subset of coordinates
        upper = tuple(
            int(rng.integers(i, len(options[u]))) for u, i in enumerate(idx)
        )
        slack = reward_of(upper) - reward_of(idx)
        monotonicity_checks += 1
        min_slack = min(min_slack, slack)
        if slack < -tolerance:
            return LatticeCheckReport(
                False, exchange_checks, monotonicity_checks, min_slack,
                f"monotonicity violated at idx={idx} <= {upper} (slack {slack:.3e})",
            )

        steppable = [u for u, i in enumerate(idx) if i < len(options[u]) - 1]
        if len(steppable) < 2:
            continue
        i_coord, j_coord = rng.choice(len(steppable), size=2, replace=False)
        i_coord, j_coord = steppable[i_coord], steppable[j_coord]

        def bump(base, coord):
            out = list(base)
            out[coord] += 1
            return tuple(out)

        lhs = reward_of(bump(idx, i_coord)) - reward_of(idx)
        with_j = bump(idx, j_coord)
        rhs = reward_of(bump(with_j, i_coord)) - reward_of(with_j)
        exchange_checks += 1
        slack = lhs - rhs
        min_slack = min(min_slack, slack)
        if slack < -tolerance:
            return LatticeCheckReport(
                False, exchange_checks, monotonicity_checks, min_slack,
                f"diminishing returns violated at idx={idx}, i={i_coord}, j={j_coord} "
                f"(slack {slack:.3e})",
            )

    return LatticeCheckReport(True, exchange_checks, monotonicity_checks, float(min_slack))


def graph_to_dict(graph: CoBrandingGraph) -> dict:
    records = []
    for u in range(graph.num_initiators):
        for s in graph.plans[u]:
            row = graph.mu.get((u, s))
            if row is None:
                continue
            for v in range(graph.num_targets):
                if not np.isnan(row[v]):
                    records.append({"u": u, "v": v, "s": s, "p": float(row[v])})
    return {
        "kind": "graph",
        "num_initiators": graph.num_initiators,
        "num_targets": graph.num_targets,
        "plans": [list(p) for p in graph.plans],
        "caps": list(graph.caps),
        "g_cap": graph.g_cap,
        "gains": [float(g) for g in graph.gains],
        "mu": records,
    }


def graph_from_dict(data: dict) -> CoBrandingGraph:
    if data.get("kind", "graph") != "graph":
        raise GraphError(f"expected a graph document, got kind={data.get('kind')!r}")
    num_initiators = int(data["num_initiators"])
    num_targets = int(data["num_targets"])
    plans = tuple(tuple(int(s) for s in p) for p in data["plans"])
    mu = {
        (u, s): np.full(num_targets, np.nan)
        for u in range(num_initiators)
        for s in plans[u]
    }
    for rec in data["mu"]:
        key = (int(rec["u"]), int(rec["s"]))
        if key not in mu:
            raise GraphError(f"mu record {rec} is off the plan grid")
        mu[key][int(rec["v"])] = float(rec["p"])
    return CoBrandingGraph(
        num_initiators=num_initiators,
        num_targets=num_targets,
        plans=plans,
        caps=tuple(int(c) for c in data["caps"]),
        gains=np.asarray(data["gains"], dtype=float),
        mu=mu,
        g_cap=float(data.get("g_cap", 1.0)),
    )


def save_graph(graph: CoBrandingGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph), indent=2) + "\n")


def load_graph(path: str | Path) -> CoBrandingGraph:
    return graph_from_dict(json.loads(Path(path).read_text()))
