"""Budget allocation over the spend-level grid.

The workhorse is a partial-enumeration greedy: every allocation supported
on at most K sub-brands is used to seed a greedy extension that repeatedly
commits the residual increment with the best per-unit reward gain.  A
brute-force oracle over all feasible allocations backs the approximation
and regret checks on small instances.

All tie-breaks are fixed (lowest sub-brand index, smallest increment,
lexicographically smallest allocation) so results do not depend on
evaluation order.
"""

from __future__ import annotations

import os
from itertools import combinations, product
from typing import Iterator

import numpy as np
from numba import njit

from .graph import AllocationError, BudgetAllocation, CoBrandingGraph, validate_allocation

DEFAULT_ORACLE_LIMIT = 2**22
ORACLE_LIMIT_ENV = "COBRAND_ORACLE_LIMIT"


class OracleLimitError(Exception):
    """Brute-force candidate count exceeds the configured limit."""

    def __init__(self, candidates: int, limit: int):
        super().__init__(
            f"brute force would scan {candidates} candidates, above the limit {limit}"
        )
        self.candidates = candidates
        self.limit = limit


def enumerate_seeds(plans, caps, budget: int, max_funded: int) -> Iterator[tuple[int, ...]]:
    """Yield every feasible allocation with at most max_funded positive entries.

    Deterministic order: the zero allocation, then ascending support size,
    supports in lexicographic order, and spend levels in increasing order.
    Each seed appears exactly once.
    """
    num = len(plans)
    options = [
        tuple(s for s in plan if 0 < s <= cap) for plan, cap in zip(plans, caps)
    ]
    yield (0,) * num
    for size in range(1, min(max_funded, num) + 1):
        for support in combinations(range(num), size):
            pools = [options[u] for u in support]
            if any(not pool for pool in pools):
                continue
            for combo in product(*pools):
                if sum(combo) > budget:
                    continue
                levels = [0] * num
                for u, s in zip(support, combo):
                    levels[u] = s
                yield tuple(levels)


def count_seeds(plans, caps, budget: int, max_funded: int) -> int:
    return sum(1 for _ in enumerate_seeds(plans, caps, budget, max_funded))


@njit(cache=True)
def _greedy_core(one_minus_mu, gains, level_values, level_counts, start_idx, budget_left):
    """Greedy residual-queue extension on dense arrays.

    one_minus_mu[u, j, v] is 1 - mu for sub-brand u at its j-th spend level;
    start_idx[u] is the current level index (-1 when unfunded).  Returns the
    final level indices.  Survival products are rebuilt from scratch after
    each commit with a prefix/suffix sweep, which avoids dividing by factors
    that may be exactly zero.
    """
    num_u, _, num_v = one_minus_mu.shape
    cur_idx = start_idx.copy()

    factors = np.ones((num_u, num_v))
    for u in range(num_u):
        if cur_idx[u] >= 0:
            for v in range(num_v):
                factors[u, v] = one_minus_mu[u, cur_idx[u], v]

    qcap = 0
    for u in range(num_u):
        qcap += level_counts[u]
    q_u = np.empty(qcap, np.int64)
    q_j = np.empty(qcap, np.int64)
    q_s = np.empty(qcap, np.int64)
    alive = np.zeros(qcap, np.bool_)
    qn = 0
    for u in range(num_u):
        base = 0 if cur_idx[u] < 0 else level_values[u, cur_idx[u]]
        for j in range(level_counts[u]):
            if level_values[u, j] > base:
                q_u[qn] = u
                q_j[qn] = j
                q_s[qn] = level_values[u, j] - base
                alive[qn] = True
                qn += 1
    n_alive = qn

    delta = np.zeros(qn)
    base_wo = np.empty((num_u, num_v))
    survival = np.empty(num_v)
    stale = True
    while budget_left > 0 and n_alive > 0:
        if stale:
            for v in range(num_v):
                p = 1.0
                for u in range(num_u):
                    base_wo[u, v] = p
                    p *= factors[u, v]
                survival[v] = p
                suffix = 1.0
                for u in range(num_u - 1, -1, -1):
                    base_wo[u, v] *= suffix
                    suffix *= factors[u, v]
            for i in range(qn):
                if alive[i]:
                    u = q_u[i]
                    j = q_j[i]
                    acc = 0.0
                    for v in range(num_v):
                        acc += gains[v] * (
                            survival[v] - base_wo[u, v] * one_minus_mu[u, j, v]
                        )
                    delta[i] = acc / q_s[i]
            stale = False

        best = -1
        best_val = -np.inf
        for i in range(qn):
            if alive[i] and delta[i] > best_val:
                best = i
                best_val = delta[i]
        if best < 0:
            break

        if q_s[best] <= budget_left:
            u = q_u[best]
            j = q_j[best]
            budget_left -= q_s[best]
            cur_idx[u] = j
            new_base = level_values[u, j]
            for v in range(num_v):
                factors[u, v] = one_minus_mu[u, j, v]
            for i in range(qn):
                if alive[i] and q_u[i] == u:
                    if level_values[u, q_j[i]] <= new_base:
                        alive[i] = False
                        n_alive -= 1
                    else:
                        q_s[i] = level_values[u, q_j[i]] - new_base
            stale = True
        else:
            alive[best] = False
            n_alive -= 1

    return cur_idx


class _DenseGraph:
    """Dense array view of a graph for the greedy kernel and fast reward evals."""

    def __init__(self, graph: CoBrandingGraph):
        self.graph = graph
        num_u = graph.num_initiators
        self.levels = [
            tuple(s for s in graph.plans[u] if 0 < s <= graph.caps[u])
            for u in range(num_u)
        ]
        lmax = max((len(l) for l in self.levels), default=0)
        lmax = max(lmax, 1)
        self.one_minus_mu = np.ones((num_u, lmax, graph.num_targets))
        self.level_values = np.full((num_u, lmax), np.iinfo(np.int64).max, dtype=np.int64)
        self.level_counts = np.zeros(num_u, dtype=np.int64)
        for u in range(num_u):
            for j, s in enumerate(self.levels[u]):
                self.one_minus_mu[u, j] = 1.0 - graph.mu_row(u, s)
                self.level_values[u, j] = s
            self.level_counts[u] = len(self.levels[u])
        self.gains = np.asarray(graph.gains, dtype=float)

    def start_idx(self, levels) -> np.ndarray:
        idx = np.full(len(levels), -1, dtype=np.int64)
        for u, s in enumerate(levels):
            if s > 0:
                j = self.levels[u].index(s)
                idx[u] = j
        return idx

    def levels_of(self, idx: np.ndarray) -> tuple[int, ...]:
        return tuple(
            0 if idx[u] < 0 else self.levels[u][idx[u]] for u in range(len(idx))
        )

    def reward_of_idx(self, idx: np.ndarray) -> float:
        survival = np.ones(self.graph.num_targets)
        for u, j in enumerate(idx):
            if j >= 0:
                survival = survival * self.one_minus_mu[u, j]
        return float(self.gains @ (1.0 - survival))


def greedy_extend(graph: CoBrandingGraph, seed, budget: int) -> BudgetAllocation:
    """Extend a seed allocation greedily by per-unit marginal reward gain.

    The residual queue holds (sub-brand, extra spend) moves onto higher plan
    levels; each step commits the best-per-unit affordable move (ties:
    lowest sub-brand, then smallest increment) and re-anchors that
    sub-brand's residuals.  Requires mu monotone in the spend level for the
    greedy guarantee, and every intermediate allocation stays on the grid.
    """
    seed_levels = tuple(seed.levels) if isinstance(seed, BudgetAllocation) else tuple(seed)
    seed_alloc = BudgetAllocation(seed_levels, budget)
    problems = validate_allocation(graph, seed_alloc)
    if problems:
        raise AllocationError("; ".join(problems))
    dense = _DenseGraph(graph)
    return _greedy_from_dense(dense, seed_levels, budget)


def _greedy_from_dense(dense: _DenseGraph, seed_levels, budget: int) -> BudgetAllocation:
    remaining = budget - sum(seed_levels)
    idx = _greedy_core(
        dense.one_minus_mu,
        dense.gains,
        dense.level_values,
        dense.level_counts,
        dense.start_idx(seed_levels),
        np.int64(remaining),
    )
    return BudgetAllocation(dense.levels_of(idx), budget)


def gpe(graph: CoBrandingGraph, budget: int, max_funded: int = 3) -> BudgetAllocation:
    """Partial-enumeration greedy: best greedy extension over all <=K-support seeds.

    Ties in the final reward resolve to the lexicographically smallest
    allocation, so concurrent seed evaluation and serial evaluation agree.
    Includes the zero seed, hence never below the plain greedy.
    """
    dense = _DenseGraph(graph)
    best_alloc: tuple[int, ...] | None = None
    best_reward = -np.inf
    for seed in enumerate_seeds(graph.plans, graph.caps, budget, max_funded):
        remaining = budget - sum(seed)
        idx = _greedy_core(
            dense.one_minus_mu,
            dense.gains,
            dense.level_values,
            dense.level_counts,
            dense.start_idx(seed),
            np.int64(remaining),
        )
        reward = dense.reward_of_idx(idx)
        levels = dense.levels_of(idx)
        if reward > best_reward or (reward == best_reward and levels < best_alloc):
            best_reward = reward
            best_alloc = levels
    return BudgetAllocation(best_alloc, budget)


def gbo(graph: CoBrandingGraph, budget: int) -> BudgetAllocation:
    """Plain greedy budget optimization: the zero-seed greedy extension."""
    return greedy_extend(graph, (0,) * graph.num_initiators, budget)


def proportional_alloc(graph: CoBrandingGraph, budget: int, mode: str) -> BudgetAllocation:
    """Proportional baselines: equal split (S) or reachable-gain weighted (W).

    Raw shares are rounded down to the largest spend level within the share
    and the cap; shares below the lowest level fund nothing.
    """
    num = graph.num_initiators
    if mode == "S":
        shares = np.full(num, budget / num)
    elif mode == "W":
        weights = np.zeros(num)
        for u in range(num):
            if graph.plans[u]:
                top = max(graph.plans[u])
                weights[u] = float(graph.gains @ graph.mu_row(u, top))
        total = weights.sum()
        shares = budget * weights / total if total > 0 else np.zeros(num)
    else:
        raise ValueError(f"mode must be 'S' or 'W', got {mode!r}")
    levels = []
    for u in range(num):
        limit = min(shares[u], graph.caps[u])
        fitting = [s for s in graph.plans[u] if s <= limit]
        levels.append(max(fitting) if fitting else 0)
    return BudgetAllocation(tuple(levels), budget)


def _oracle_limit(limit: int | None) -> int:
    if limit is not None:
        return limit
    env = os.environ.get(ORACLE_LIMIT_ENV)
    return int(env) if env else DEFAULT_ORACLE_LIMIT


def brute_force_candidates(graph: CoBrandingGraph) -> int:
    counts = [
        1 + sum(1 for s in graph.plans[u] if 0 < s <= graph.caps[u])
        for u in range(graph.num_initiators)
    ]
    total = 1
    for c in counts:
        total *= c
    return total


def brute_force_opt(
    graph: CoBrandingGraph, budget: int, limit: int | None = None
) -> tuple[BudgetAllocation, float]:
    """Exhaustive scan of every feasible allocation; exact but exponential.

    Refuses instances whose candidate count exceeds the limit (default
    2**22, overridable via the COBRAND_ORACLE_LIMIT environment variable).
    Ties keep the lexicographically smallest maximizer.
    """
    limit = _oracle_limit(limit)
    candidates = brute_force_candidates(graph)
    if candidates > limit:
        raise OracleLimitError(candidates, limit)
    dense = _DenseGraph(graph)
    options = [(-1,) + tuple(range(len(dense.levels[u]))) for u in range(graph.num_initiators)]
    spend = [
        {-1: 0, **{j: dense.levels[u][j] for j in range(len(dense.levels[u]))}}
        for u in range(graph.num_initiators)
    ]
    best_idx = None
    best_reward = -np.inf
    idx_arr = np.empty(graph.num_initiators, dtype=np.int64)
    for combo in product(*options):
        total = 0
        for u, j in enumerate(combo):
            total += spend[u][j]
        if total > budget:
            continue
        for u, j in enumerate(combo):
            idx_arr[u] = j
        reward = dense.reward_of_idx(idx_arr)
        if reward > best_reward:
            best_reward = reward
            best_idx = combo
    levels = tuple(spend[u][j] for u, j in enumerate(best_idx))
    return BudgetAllocation(levels, budget), float(best_reward)
