#!/usr/bin/env python3
"""Desk-scale curriculum comparison: PAIRED vs domain randomization vs
minimax on a 9x9 grid with a 15-block budget.

Trains each strategy with the same seeds and budget, then reports the
passable-path-length trend, final solved path lengths, and zero-shot success
on the bundled 9x9 labyrinth.
"""

import argparse
import csv
import json
from pathlib import Path

import numpy as np

from uedlab import harness

CONFIG_DIR = Path(__file__).parent / "configs"
STRATEGY_CONFIGS = {
    "paired": "paired_desk.json",
    "domain_randomization": "dr_desk.json",
    "minimax": "minimax_desk.json",
}


def seed_series(run_dir: Path, column: str) -> dict[int, list[float]]:
    out: dict[int, list[float]] = {}
    with open(run_dir / "metrics.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(int(row["seed"]), []).append(float(row[column]))
    return out


def trend(series: list[float]) -> tuple[float, float]:
    """Mean of the first and last 20% of iterations."""
    k = max(1, len(series) // 5)
    return float(np.mean(series[:k])), float(np.mean(series[-k:]))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=None,
                    help="override the per-config iteration budget")
    ap.add_argument("--seeds", type=int, nargs="+", default=None)
    ap.add_argument("--out", default="runs/comparison")
    args = ap.parse_args()

    out_base = Path(args.out)
    results = {}
    for strategy, config_name in STRATEGY_CONFIGS.items():
        data = json.loads((CONFIG_DIR / config_name).read_text())
        if args.iterations:
            data["iterations"] = args.iterations
        if args.seeds:
            data["seeds"] = args.seeds
        config = harness.parse_config(data, source=config_name)
        run_dir = harness.cli_train(config, out_dir=out_base / strategy)
        print(f"{strategy}: run complete -> {run_dir}")

        ppl = seed_series(run_dir, "passable_path_length")
        spl = seed_series(run_dir, "solved_path_length")
        first = np.mean([trend(s)[0] for s in ppl.values()])
        last = np.mean([trend(s)[1] for s in ppl.values()])
        k = max(1, config.iterations // 5)
        final_spl = np.mean([np.mean(s[-k:]) for s in spl.values()])

        successes = trials = 0
        for seed in config.seeds:
            rows = harness.cli_eval(
                run_dir / f"seed{seed}_final.ckpt",
                suite_dir=harness.bundled_suite_dir(),
                trials_per_map=10, n_seeds=1, horizon=config.horizon)
            lab = next(r for r in rows if r.map_name == "labyrinth_9")
            successes += lab.successes
            trials += lab.trials
        results[strategy] = dict(
            ppl_first=first, ppl_last=last, solved=final_spl,
            labyrinth=successes / trials if trials else 0.0)

    print(f"\n{'strategy':<24} {'ppl first':>10} {'ppl last':>10} "
          f"{'solved':>8} {'labyrinth':>10}")
    for strategy, r in results.items():
        print(f"{strategy:<24} {r['ppl_first']:>10.2f} {r['ppl_last']:>10.2f} "
              f"{r['solved']:>8.2f} {r['labyrinth']:>10.1%}")


if __name__ == "__main__":
    main()
