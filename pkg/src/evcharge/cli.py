"""Experiment runner.

    evcharge run --config my.cfg --override V=300 --sweep epsilon=0.01,0.05 --out runs/

Each run writes ``report.csv`` and ``summary.txt`` into its own directory; a
sweep also writes ``sweep_index.csv``. The output directory defaults to
``$EVCHARGE_OUT`` or ``./evcharge-out``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import metrics
from .config import ConfigError, build_scenario, load_config
from .ingest import TraceError
from .model import PolicyError
from .scheduler import run_horizon

log = logging.getLogger("evcharge")

EXIT_CONFIG = 2
EXIT_POLICY = 3


def _parse_sweep(items):
    grid = []
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"sweep must look like key=v1,v2,...: {item!r}")
        key, vals = item.split("=", 1)
        values = [v.strip() for v in vals.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"sweep {key!r} has no values")
        grid.append((key.strip(), values))
    return grid


def _combos(grid):
    combos = [[]]
    for key, values in grid:
        combos = [c + [(key, v)] for c in combos for v in values]
    return combos


def execute(config_path, overrides, outdir, horizon=None):
    """Build and run one scenario; returns the summary path."""
    cp = load_config(config_path, overrides)
    sc = build_scenario(cp, horizon)
    rep = run_horizon(sc.init, sc.trace, sc.plant, sc.consts, sc.dual_cfg, sc.policy)
    if sc.tail_fraction != 0.5:
        rep = metrics.aggregate(rep.records, sc.init, sc.dual_cfg.lambda_max, sc.tail_fraction)
    meta = {"policy": sc.policy, "seed": sc.seed, "V": repr(float(sc.consts.v)),
            "V_max": repr(float(sc.consts.v_max)), "epsilon": repr(float(sc.plant.epsilon)),
            "delta_max": repr(float(sc.consts.delta_max))}
    metrics.write_reports(rep, outdir, meta)
    return Path(outdir) / "summary.txt"


def _worker(args):
    return execute(*args)


def run(config_path=None, overrides=(), sweeps=(), outdir=None, workers=1, horizon=None) -> int:
    outdir = Path(outdir or os.environ.get("EVCHARGE_OUT", "evcharge-out"))
    try:
        grid = _parse_sweep(sweeps)
        # validate the base scenario before fanning out
        if not grid:
            execute(config_path, list(overrides), outdir, horizon)
            print(f"wrote {outdir}")
            return 0
        jobs, names = [], []
        for combo in _combos(grid):
            name = "_".join(f"{k}={v}" for k, v in combo).replace("/", "-")
            names.append((combo, name))
            jobs.append((config_path, list(overrides) + [f"{k}={v}" for k, v in combo],
                         outdir / name, horizon))
        # fail fast on bad sweep values before spending time on runs
        for job in jobs:
            build_scenario(load_config(job[0], job[1]), horizon=1)
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                paths = list(pool.map(_worker, jobs))
        else:
            paths = [execute(*j) for j in jobs]
        outdir.mkdir(parents=True, exist_ok=True)
        with (outdir / "sweep_index.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            keys = [k for k, _ in grid]
            w.writerow(keys + ["run_dir", "time_avg_cost", "max_overload_freq", "mean_waiting"])
            for (combo, name), path in zip(names, paths):
                s = metrics.read_summary(path)
                w.writerow([v for _, v in combo] + [name, s["time_avg_cost"],
                                                    s["max_overload_freq"], s["mean_waiting"]])
        print(f"wrote {len(paths)} runs to {outdir}")
        return 0
    except (ConfigError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PolicyError as exc:
        print(f"policy error: {exc}", file=sys.stderr)
        return EXIT_POLICY


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="evcharge", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario or a parameter sweep")
    r.add_argument("--config", help="scenario .cfg file (defaults to the bundled scenario)")
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2,...")
    r.add_argument("--policy", choices=["proposed", "greedy"])
    r.add_argument("--seed", type=int)
    r.add_argument("--horizon", type=int, help="number of slots (overrides the config)")
    r.add_argument("--out", help="output directory")
    r.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
    r.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)

    overrides = list(args.override)
    if args.policy:
        overrides.append(f"policy.name={args.policy}")
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    return run(args.config, overrides, args.sweep, args.out, args.workers, args.horizon)


if __name__ == "__main__":
    sys.exit(main())
