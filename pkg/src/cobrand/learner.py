"""Online learning of the co-branding market: arm statistics and policy graphs.

The main policy keeps variance-aware confidence bounds per (pair, spend
level) arm and per target-gain arm; baselines (empirical mean, epsilon-
greedy, Thompson sampling, plain combinatorial UCB) share the same state
container so runs differ only in how they turn statistics into a graph.

A LearnerState has a single writer: one simulation loop calls update and
the graph builders sequentially.  Distinct runs own distinct states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .environment import FeedbackRecord, HistoryDataset, uniform_feasible_allocation
from .graph import BudgetAllocation, CoBrandingGraph

POLICIES = ("CBOL", "EMP", "EPS", "TS", "CUCB")


class LearnerError(Exception):
    """Learner state construction or usage violated a contract."""


@dataclass
class ArmStats:
    """Running count, mean, and population variance of one co-branding arm."""

    count: int = 0
    mean: float = 0.0
    var: float = 0.0


@dataclass
class GainStats:
    count: int = 0
    mean: float = 0.0
    var: float = 0.0


class LearnerState:
    """Per-arm statistics plus policy bookkeeping for one simulation run."""

    def __init__(self, num_initiators, num_targets, plans, caps, g_cap, policy):
        if policy not in POLICIES:
            raise LearnerError(f"unknown policy {policy!r}, expected one of {POLICIES}")
        self.num_initiators = int(num_initiators)
        self.num_targets = int(num_targets)
        self.plans = tuple(tuple(int(s) for s in p) for p in plans)
        self.caps = tuple(int(c) for c in caps)
        self.g_cap = float(g_cap)
        self.policy = policy
        self.round = 0
        self.arms: dict[tuple[int, int, int], ArmStats] = {
            (u, v, s): ArmStats()
            for u in range(self.num_initiators)
            for s in self.plans[u]
            for v in range(self.num_targets)
        }
        self.gain_arms: dict[int, GainStats] = {
            v: GainStats() for v in range(self.num_targets)
        }
        # raw success/failure counts; the Beta(1, 1) prior is added at sample time
        self.ts_success: dict[tuple[int, int, int], float] = {}
        self.ts_failure: dict[tuple[int, int, int], float] = {}
        if policy == "TS":
            self.ts_success = {key: 0.0 for key in self.arms}
            self.ts_failure = {key: 0.0 for key in self.arms}


def init_from_history(history: HistoryDataset, policy: str) -> LearnerState:
    """Warm-start a learner, collapsing each arm's history to a single pseudo-pull.

    Arms seen in the history enter with count 1 at the historical mean and
    zero variance, so confidence radii reflect online evidence only.
    """
    state = LearnerState(
        history.num_initiators,
        history.num_targets,
        history.plans,
        history.caps,
        history.g_cap,
        policy,
    )
    for key, st in history.arm_stats.items():
        if st.count <= 0:
            continue
        if key not in state.arms:
            raise LearnerError(f"history arm {key} is off the (U, V, plans) grid")
        arm = state.arms[key]
        arm.count, arm.mean, arm.var = 1, st.mean, 0.0
        if policy == "TS":
            m = min(max(st.mean, 0.0), 1.0)
            state.ts_success[key] = m
            state.ts_failure[key] = 1.0 - m
    for v, st in history.gain_stats.items():
        if st.count <= 0:
            continue
        if v not in state.gain_arms:
            raise LearnerError(f"history gain arm {v} is off the target grid")
        gain = state.gain_arms[v]
        gain.count, gain.mean, gain.var = 1, st.mean, 0.0
    return state


def bernstein_radius(variance: float, count: int, t: float) -> float:
    """Variance-aware exploration radius sqrt(6*V*ln t / T) + 9*ln t / T.

    Unvisited arms (count 0) get an infinite radius; graph builders clip it
    into the optimistic maximum.
    """
    if t < 1:
        raise ValueError(f"round index must be >= 1, got {t}")
    if count == 0:
        return math.inf
    log_t = math.log(t)
    return math.sqrt(6.0 * variance * log_t / count) + 9.0 * log_t / count


def update(state: LearnerState, feedback: FeedbackRecord) -> None:
    """Fold one season's observations into the running statistics.

    The variance recursion uses the pre-update mean, which reproduces the
    exact population variance of the observation stream; the mean update
    follows.  Gains update identically for each observed target.
    """
    for key, x in feedback.edge_outcomes.items():
        arm = state.arms[key]
        n = arm.count + 1
        arm.var = ((n - 1) / n) * (arm.var + (arm.mean - x) ** 2 / n)
        arm.mean += (x - arm.mean) / n
        arm.count = n
        if state.policy == "TS":
            state.ts_success[key] += x
            state.ts_failure[key] += 1 - x
    for v, y in feedback.target_gains.items():
        gain = state.gain_arms[v]
        n = gain.count + 1
        gain.var = ((n - 1) / n) * (gain.var + (gain.mean - y) ** 2 / n)
        gain.mean += (y - gain.mean) / n
        gain.count = n
    state.round += 1


def _assemble_graph(state: LearnerState, mu_value, gains: np.ndarray) -> CoBrandingGraph:
    """Build a learner graph with per-pair running-max monotonization over levels."""
    mu = {}
    for u in range(state.num_initiators):
        levels = state.plans[u]
        if not levels:
            continue
        mat = np.empty((len(levels), state.num_targets))
        for j, s in enumerate(levels):
            for v in range(state.num_targets):
                mat[j, v] = mu_value((u, v, s))
        np.maximum.accumulate(mat, axis=0, out=mat)
        for j, s in enumerate(levels):
            mu[(u, s)] = mat[j]
    return CoBrandingGraph(
        num_initiators=state.num_initiators,
        num_targets=state.num_targets,
        plans=state.plans,
        caps=state.caps,
        gains=gains,
        mu=mu,
        g_cap=state.g_cap,
    )


def ucb_graph(state: LearnerState, t: float, g_cap: float) -> CoBrandingGraph:
    """Optimistic graph for the confidence-based policy at round t.

    Per-arm value clip(mean + bernstein_radius, 0, 1), 1 for unvisited arms,
    then a running max over spend levels so estimated success probability
    never drops with spend; gains get the analogous treatment up to g_cap.
    """
    if state.policy != "CBOL":
        raise LearnerError(f"ucb_graph requires policy CBOL, state has {state.policy}")
    if t < 1:
        raise ValueError(f"round index must be >= 1, got {t}")

    def value(key):
        arm = state.arms[key]
        if arm.count == 0:
            return 1.0
        return min(max(arm.mean + bernstein_radius(arm.var, arm.count, t), 0.0), 1.0)

    gains = np.empty(state.num_targets)
    for v in range(state.num_targets):
        gain = state.gain_arms[v]
        if gain.count == 0:
            gains[v] = g_cap
        else:
            rho = bernstein_radius(gain.var, gain.count, t)
            gains[v] = min(max(gain.mean + rho, 0.0), g_cap)
    return _assemble_graph(state, value, gains)


def empirical_graph(state: LearnerState, g_cap: float) -> CoBrandingGraph:
    """Plain empirical-mean graph; unvisited arms stay at the optimistic maximum."""

    def value(key):
        arm = state.arms[key]
        return 1.0 if arm.count == 0 else arm.mean

    gains = np.array(
        [
            g_cap if state.gain_arms[v].count == 0 else min(state.gain_arms[v].mean, g_cap)
            for v in range(state.num_targets)
        ]
    )
    return _assemble_graph(state, value, gains)


def baseline_graph(
    state: LearnerState, t: float, g_cap: float, rng: np.random.Generator
) -> CoBrandingGraph:
    """Graph for the EMP, TS, or CUCB baselines at round t.

    All baselines share the running-max monotonization so the budget
    optimizer always sees a monotone input.  TS draws each arm from
    Beta(successes+1, failures+1) in a fixed order (sub-brand, level,
    then the target vector) for reproducibility.
    """
    if state.policy == "EMP":
        return empirical_graph(state, g_cap)
    if state.policy == "TS":
        mu = {}
        for u in range(state.num_initiators):
            levels = state.plans[u]
            if not levels:
                continue
            mat = np.empty((len(levels), state.num_targets))
            for j, s in enumerate(levels):
                alpha = np.array(
                    [state.ts_success[(u, v, s)] + 1.0 for v in range(state.num_targets)]
                )
                beta = np.array(
                    [state.ts_failure[(u, v, s)] + 1.0 for v in range(state.num_targets)]
                )
                mat[j] = rng.beta(alpha, beta)
            np.maximum.accumulate(mat, axis=0, out=mat)
            for j, s in enumerate(levels):
                mu[(u, s)] = mat[j]
        gains = np.array(
            [
                g_cap if state.gain_arms[v].count == 0 else min(state.gain_arms[v].mean, g_cap)
                for v in range(state.num_targets)
            ]
        )
        return CoBrandingGraph(
            num_initiators=state.num_initiators,
            num_targets=state.num_targets,
            plans=state.plans,
            caps=state.caps,
            gains=gains,
            mu=mu,
            g_cap=state.g_cap,
        )
    if state.policy == "CUCB":
        if t < 1:
            raise ValueError(f"round index must be >= 1, got {t}")
        log_t = math.log(t)

        def value(key):
            arm = state.arms[key]
            if arm.count == 0:
                return 1.0
            return min(max(arm.mean + math.sqrt(3.0 * log_t / (2.0 * arm.count)), 0.0), 1.0)

        gains = np.empty(state.num_targets)
        for v in range(state.num_targets):
            gain = state.gain_arms[v]
            if gain.count == 0:
                gains[v] = g_cap
            else:
                bonus = math.sqrt(3.0 * log_t / (2.0 * gain.count))
                gains[v] = min(max(gain.mean + bonus, 0.0), g_cap)
        return _assemble_graph(state, value, gains)
    raise LearnerError(f"baseline_graph requires EMP, TS, or CUCB, state has {state.policy}")


def eps_greedy_decide(
    state: LearnerState,
    epsilon: float,
    budget: int,
    k: int,
    rng: np.random.Generator,
) -> BudgetAllocation:
    """Epsilon-greedy allocation: random feasible with probability epsilon,
    otherwise the budget optimizer on the empirical-mean graph."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    from .optimizer import gpe  # late import only to keep module load light

    if epsilon > 0.0 and rng.random() < epsilon:
        levels = uniform_feasible_allocation(state.plans, state.caps, budget, rng)
        return BudgetAllocation(levels, budget)
    return gpe(empirical_graph(state, state.g_cap), budget, k)


def state_to_dict(state: LearnerState) -> dict:
    data = {
        "kind": "learner_state",
        "policy": state.policy,
        "round": state.round,
        "num_initiators": state.num_initiators,
        "num_targets": state.num_targets,
        "plans": [list(p) for p in state.plans],
        "caps": list(state.caps),
        "g_cap": state.g_cap,
        "arms": [
            {"u": u, "v": v, "s": s, "T": a.count, "mean": a.mean, "var": a.var}
            for (u, v, s), a in sorted(state.arms.items())
        ],
        "gains": [
            {"v": v, "T": g.count, "mean": g.mean, "var": g.var}
            for v, g in sorted(state.gain_arms.items())
        ],
    }
    if state.policy == "TS":
        data["ts"] = [
            {"u": u, "v": v, "s": s,
             "success": state.ts_success[(u, v, s)],
             "failure": state.ts_failure[(u, v, s)]}
            for (u, v, s) in sorted(state.ts_success)
        ]
    return data


def state_from_dict(data: dict) -> LearnerState:
    if data.get("kind") != "learner_state":
        raise LearnerError(f"expected a learner_state document, got {data.get('kind')!r}")
    state = LearnerState(
        data["num_initiators"],
        data["num_targets"],
        [tuple(p) for p in data["plans"]],
        data["caps"],
        data["g_cap"],
        data["policy"],
    )
    state.round = int(data["round"])
    for rec in data["arms"]:
        arm = state.arms[(rec["u"], rec["v"], rec["s"])]
        arm.count, arm.mean, arm.var = int(rec["T"]), float(rec["mean"]), float(rec["var"])
    for rec in data["gains"]:
        gain = state.gain_arms[rec["v"]]
        gain.count, gain.mean, gain.var = int(rec["T"]), float(rec["mean"]), float(rec["var"])
    for rec in data.get("ts", []):
        key = (rec["u"], rec["v"], rec["s"])
        state.ts_success[key] = float(rec["success"])
        state.ts_failure[key] = float(rec["failure"])
    return state


def save_state(state: LearnerState, path: str | Path) -> None:
    Path(path).write_text(json.dumps(state_to_dict(state), indent=2) + "\n")


def load_state(path: str | Path) -> LearnerState:
    return state_from_dict(json.loads(Path(path).read_text()))
