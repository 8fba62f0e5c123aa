#!/usr/bin/env python3
"""Six channels shared by two SUs: DQN+RC, Q-learning and the myopic rule."""
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
    p.add_argument("--out", default=os.environ.get("DSARL_OUTPUT_DIR", "runs/coexistence"))
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    args = p.parse_args()

    base = load_config("exp2_6ch_2su")
    if args.seed is not None:
        base = dataclasses.replace(base, seed=args.seed)
    if args.iterations is not None:
        base = dataclasses.replace(base, iterations=args.iterations)
    for kind in ("dqn_rc", "qlearning", "myopic"):
        cfg = base.with_agents(dataclasses.replace(base.agents[0], kind=kind))
        files = run_one(cfg, Path(args.out), f"exp2_6ch_2su_{kind}_s{cfg.seed}")
        rows = read_csv(files["csv"])
        su = aggregate_series(rows, "su_collision_rate")[-50:]
        reward = aggregate_series(rows, "mean_reward")[-50:]
        print(f"{kind:9s} su collision {su.mean():.4f} (max {su.max():.4f})  "
              f"reward {reward.mean():.3f}")


if __name__ == "__main__":
    main()
