"""Reconstruction and fairness comparison of OBNC, Fair-OBNC and no correction.

    python3 scripts/run_directional.py [--config configs/directional.yaml] [--jobs N]

Prints the reconstruction table and mean TPR / demographic-parity ratio per
method and rate; full outputs land in the config's ``out_dir``.
"""
import argparse
from pathlib import Path

import pandas as pd

from fairobnc import bench

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=ROOT / "configs" / "directional.yaml")
    ap.add_argument("--out-dir")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    config = bench.load_config(args.config)
    paths = bench.run(config, out_dir=args.out_dir or config.out_dir, jobs=args.jobs)
    print(paths["table"].read_text())
    summary = pd.read_csv(paths["summary"])
    cols = ["noise_target", "rate", "method", "n_trials", "reconstruction_score", "fnr_r_B", "tpr", "dp_ratio"]
    print(summary[[c for c in cols if c in summary]].to_string(index=False, float_format="%.3f"))


if __name__ == "__main__":
    main()
