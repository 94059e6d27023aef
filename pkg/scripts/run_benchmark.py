"""Full method grid (all baselines, three noise targets, 50 trials).

    python3 scripts/run_benchmark.py [--config configs/benchmark.yaml] [--jobs N]

Takes on the order of an hour on one core; ``--trials`` shortens it.
"""
import argparse
from pathlib import Path

from fairobnc import bench

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=ROOT / "configs" / "benchmark.yaml")
    ap.add_argument("--out-dir")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    config = bench.load_config(args.config)
    if args.trials:
        config.n_trials = args.trials
    paths = bench.run(config, out_dir=args.out_dir or config.out_dir, jobs=args.jobs)
    for p in paths.values():
        print(p)


if __name__ == "__main__":
    main()
