#!/usr/bin/env python3
"""Single SU, many channels: convergence speed of DQN+RC against Q-learning.

Defaults to the 10-channel desk-scaled config over 5 seeds; pass
``--config exp1_single_su_22ch`` for the full 22-channel setup.
"""
import argparse
import dataclasses
import os
from pathlib import Path

import numpy as np

from dsarl.cli import run_one
from dsarl.config import load_config
from dsarl.experiment import converged_value, iterations_to_fraction
from dsarl.metrics import aggregate_series, read_csv


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default="exp1_desk_10ch")
    p.add_argument("--out", default=os.environ.get("DSARL_OUTPUT_DIR", "runs/convergence"))
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--iterations", type=int)
    p.add_argument("--tail", type=int, default=50, help="iterations averaged as converged")
    args = p.parse_args()

    base = load_config(args.config)
    if args.iterations is not None:
        base = dataclasses.replace(base, iterations=args.iterations)
    kinds = ("dqn_rc", "qlearning", "myopic")
    speed = {k: [] for k in kinds}
    conv = {k: [] for k in kinds}
    for s in range(base.seed, base.seed + args.seeds):
        for kind in kinds:
            cfg = dataclasses.replace(base, seed=s)
            cfg = cfg.with_agents(dataclasses.replace(cfg.agents[0], kind=kind))
            files = run_one(cfg, Path(args.out), f"{args.config}_{kind}_s{s}")
            r = aggregate_series(read_csv(files["csv"]), "mean_reward")
            conv[kind].append(converged_value(r, args.tail))
            speed[kind].append(iterations_to_fraction(r, 0.9, args.tail))
        print(f"seed {s}: " + "  ".join(f"{k} {conv[k][-1]:.2f}@{speed[k][-1]}" for k in kinds))
    for k in kinds:
        print(f"{k:9s} converged reward {np.mean(conv[k]):.3f}  "
              f"iterations to 90% {np.mean(speed[k]):.1f}")


if __name__ == "__main__":
    main()
