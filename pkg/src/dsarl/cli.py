"""Command-line entry point.

    dsarl run <config>                 train, write CSVs, checkpoint and scenario snapshot
    dsarl sweep <config> --seeds k     k consecutive seeds plus a mean/std summary CSV
    dsarl replay <checkpoint> <config> greedy evaluation of a saved policy, no training
    dsarl validate <config>            check a config and exit

``<config>`` is a JSON path or the name of a bundled config. Output goes to
``--out``, else ``$DSARL_OUTPUT_DIR``, else the config's ``output``, else ``runs/``.
Exit status: 0 success, 1 runtime or config error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from dsarl.config import AGENT_KINDS, ConfigError, ExperimentConfig, config_hash, load_config
from dsarl.experiment import Experiment, load_checkpoint, save_checkpoint
from dsarl.metrics import RATE_FIELDS, emit_csv, read_csv

OUTPUT_ENV = "DSARL_OUTPUT_DIR"
log = logging.getLogger("dsarl")


def _base(config_arg: str, agent: str | None) -> str:
    base = Path(config_arg).stem
    return f"{base}_{agent}" if agent else base


def _stem(config_arg: str, cfg: ExperimentConfig, agent: str | None) -> str:
    return f"{_base(config_arg, agent)}_s{cfg.seed}"


def _output_dir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_ENV) or cfg.output or "runs")


def _prepare(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "agent", None):
        spec = dataclasses.replace(cfg.agents[0], kind=args.agent)
        cfg = cfg.with_agents(spec)
    return cfg


def run_one(cfg: ExperimentConfig, out: Path, stem: str) -> dict:
    """Train one seed and write its artifacts; returns the file map."""
    exp = Experiment(cfg)
    files = {"csv": out / f"{stem}.csv", "checkpoint": out / f"{stem}.checkpoint.json",
             "scenario": out / f"{stem}.scenario.json"}
    out.mkdir(parents=True, exist_ok=True)
    exp.scenario.save(files["scenario"])
    emit_csv(exp.iterations(), files["csv"])
    save_checkpoint(exp.checkpoint(), files["checkpoint"])
    if cfg.evaluation_slots > 0:
        files["eval"] = out / f"{stem}.eval.csv"
        emit_csv([exp.evaluate()], files["eval"])
    return {k: str(v) for k, v in files.items()}


def _run_seed(job):
    cfg, out, stem = job
    return run_one(cfg, Path(out), stem)


def cmd_run(args) -> int:
    cfg = _prepare(args)
    files = run_one(cfg, _output_dir(args, cfg), _stem(args.config, cfg, args.agent))
    for k, v in files.items():
        log.info("%s: %s", k, v)
    return 0


def summarize(csv_paths, path: Path) -> Path:
    """Mean and population std over seeds, per (iteration, su) row."""
    tables = [read_csv(p) for p in csv_paths]
    n = min(len(t) for t in tables)
    cols = ["iteration", "su", "n_seeds"] + [f"{f}_{s}" for f in ("epsilon",) + RATE_FIELDS
                                             for s in ("mean", "std")]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for i in range(n):
            row = [tables[0][i]["iteration"], tables[0][i]["su"], len(tables)]
            for field in ("epsilon",) + RATE_FIELDS:
                v = np.array([float(t[i][field]) for t in tables])
                row += [repr(float(v.mean())), repr(float(v.std()))]
            w.writerow(row)
    return path


def cmd_sweep(args) -> int:
    cfg = _prepare(args)
    out = _output_dir(args, cfg)
    seeds = [cfg.seed + k for k in range(args.seeds)]
    jobs = []
    for s in seeds:
        c = dataclasses.replace(cfg, seed=s)
        jobs.append((c, str(out), _stem(args.config, c, args.agent)))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(j) for j in jobs]
    base = _base(args.config, args.agent)
    summary = summarize([r["csv"] for r in results], out / f"{base}.summary.csv")
    manifest = {"config": args.config, "config_hash": config_hash(cfg), "seeds": seeds,
                "runs": [dict(seed=s, config_hash=config_hash(j[0]), **r)
                         for s, j, r in zip(seeds, jobs, results)],
                "summary": str(summary)}
    (out / f"{base}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    log.info("summary: %s", summary)
    return 0


def cmd_replay(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    if args.seed is None:
        args.seed = ckpt.get("seed")
    cfg = _prepare(args)
    if ckpt.get("config_hash") != config_hash(cfg):
        raise ConfigError("", f"checkpoint {args.checkpoint} was written by a different config "
                              f"({ckpt.get('config_hash')} != {config_hash(cfg)})")
    exp = Experiment(cfg)
    exp.load_checkpoint(ckpt)
    out = _output_dir(args, cfg)
    path = emit_csv([exp.evaluate()], out / f"{_stem(args.config, cfg, args.agent)}.replay.csv")
    log.info("replay: %s", path)
    return 0


def cmd_validate(args) -> int:
    cfg = _prepare(args)
    kinds = sorted({a.kind for a in cfg.agents})
    print(f"ok: {cfg.name}: {cfg.scenario.n_channels} channels, {cfg.scenario.n_sus} SUs, "
          f"{cfg.iterations} iterations x {cfg.slots_per_iteration} slots, agents {kinds}, "
          f"hash {config_hash(cfg)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (overrides $%s)" % OUTPUT_ENV)
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="only print errors")
    common.add_argument("--agent", choices=AGENT_KINDS, help="use this agent kind for every SU")

    p = argparse.ArgumentParser(prog="dsarl", description="Spectrum access learning experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="train and write metrics")
    r.add_argument("config")
    s = sub.add_parser("sweep", parents=[common], help="run several seeds")
    s.add_argument("config")
    s.add_argument("--seeds", type=int, required=True, help="number of consecutive seeds")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    rp = sub.add_parser("replay", parents=[common], help="evaluate a saved policy")
    rp.add_argument("checkpoint")
    rp.add_argument("config")
    v = sub.add_parser("validate", parents=[common], help="check a config")
    v.add_argument("config")
    return p


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "replay": cmd_replay, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "sweep" and (args.seeds < 1 or args.jobs < 1):
        parser.error("--seeds and --jobs must be >= 1")
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"dsarl: config error: {e}", file=sys.stderr)
    except (OSError, ValueError, KeyError, FloatingPointError) as e:
        print(f"dsarl: error: {e}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
