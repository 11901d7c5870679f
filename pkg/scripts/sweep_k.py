#!/usr/bin/env python3
"""Sweep the partial-enumeration budget optimizer across K on the 10x60
synthetic instance and print reward/runtime per K."""

import argparse
from pathlib import Path

from cobrand.harness import ExperimentConfig, sweep_k, write_sweep_csv


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/sweep", help="output directory")
    parser.add_argument("--seed", type=int, default=303)
    parser.add_argument("--budget", type=int, default=20)
    parser.add_argument("--reps", type=int, default=1,
                        help="independent environment instances to average")
    parser.add_argument("--k-values", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    return parser.parse_args()


def main():
    args = parse_args()
    cfg = ExperimentConfig(
        num_initiators=10,
        num_targets=60,
        plans=((1, 2, 3),) * 10,
        caps=(3,) * 10,
        policies=("CBOL",),
        budget=args.budget,
        horizon=1,
        repetitions=args.reps,
        base_seed=args.seed,
        history_seasons=10,
    )
    rows = sweep_k(cfg, args.k_values)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out / "sweep.csv")
    print(f"wrote {out / 'sweep.csv'}")
    base = rows[0]["mean_runtime_ms"]
    for row in rows:
        growth = (row["mean_runtime_ms"] / base - 1.0) * 100.0
        print(f"  K={row['K']}  reward={row['mean_reward']:.4f}  "
              f"runtime={row['mean_runtime_ms']:9.1f} ms  (+{growth:.0f}% vs K={rows[0]['K']})")


if __name__ == "__main__":
    main()
