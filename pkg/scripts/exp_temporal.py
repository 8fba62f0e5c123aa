#!/usr/bin/env python3
"""Single channel with a fixed Inactive, Inactive, Active pattern.

Trains DQN+RC and DQN+MLP and prints settled success and PU-collision rates.
"""
import argparse
import dataclasses
import os
from pathlib import Path

import numpy as np

from dsarl.cli import run_one
from dsarl.config import load_config
from dsarl.metrics import aggregate_series, read_csv


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default=os.environ.get("DSARL_OUTPUT_DIR", "runs/temporal"))
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    args = p.parse_args()

    base = load_config("exp3_temporal_1ch")
    if args.seed is not None:
        base = dataclasses.replace(base, seed=args.seed)
    if args.iterations is not None:
        base = dataclasses.replace(base, iterations=args.iterations)
    for kind in ("dqn_rc", "dqn_mlp"):
        cfg = base.with_agents(dataclasses.replace(base.agents[0], kind=kind))
        files = run_one(cfg, Path(args.out), f"exp3_temporal_1ch_{kind}_s{cfg.seed}")
        rows = read_csv(files["csv"])
        s = np.mean(aggregate_series(rows, "success_rate")[-10:])
        c = np.mean(aggregate_series(rows, "pu_collision_rate")[-10:])
        print(f"{kind:8s} success {s:.3f}  pu collision {c:.3f}  -> {files['csv']}")


if __name__ == "__main__":
    main()
