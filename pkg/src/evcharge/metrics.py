"""Run aggregation and report files.

``report.csv`` holds one row per slot; ``summary.txt`` holds ``key = value``
aggregates. Both have a fixed key/column order and floats are written with
``repr`` so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import SystemState


@dataclass
class RunReport:
    slots: int = 0
    total_cost: float = 0.0
    time_avg_cost: float = 0.0
    grid_energy: float = 0.0
    delivered_energy: float = 0.0
    renewable_used: float = 0.0
    battery_charged: float = 0.0
    battery_discharged: float = 0.0
    rate_cut: float = 0.0
    arrivals: int = 0
    admitted: int = 0
    blocked: int = 0
    completed: int = 0
    unfinished: int = 0
    waiting_times: list = field(default_factory=list)
    overload_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    headroom_violations: int = 0
    battery_min: float = 0.0
    battery_max: float = 0.0
    steady_battery: np.ndarray = field(default_factory=lambda: np.zeros(0))
    queue_max: float = 0.0
    queue_time_avg: float = 0.0
    dual_iterations_mean: float = 0.0
    dual_converged_rate: float = 1.0
    lambda_peak: float = 0.0
    lambda_excursions: int = 0
    batteries: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    queue_totals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    records: list = field(default_factory=list, repr=False)

    @property
    def overload_freq(self) -> np.ndarray:
        return self.overload_counts / self.slots if self.slots else np.zeros_like(
            self.overload_counts, dtype=float)

    @property
    def mean_waiting(self) -> float:
        return float(np.mean(self.waiting_times)) if self.waiting_times else 0.0

    def waiting_percentile(self, q: float) -> float:
        return float(np.percentile(self.waiting_times, q)) if self.waiting_times else 0.0


def waiting_times(records) -> tuple[list, int]:
    """Per-request waiting time: (completion slot - acceptance slot) / request size.

    A request accepted in slot ``t`` and fully served during slot ``t'``
    completes at ``t' + 1``. Returns the samples and the number still
    unfinished at the end of the run.
    """
    active = {}
    samples = []
    for rec in records:
        for o in np.flatnonzero(rec.admitted > 0):
            active[int(o)] = (rec.slot, float(rec.admitted[o]))
        for o in [o for o in active if rec.queues[o] == 0]:
            start, size = active.pop(o)
            samples.append((rec.slot + 1 - start) / size)
    return samples, len(active)


def aggregate(records: Sequence, init: SystemState | None = None, lambda_max: float = np.inf,
              tail_fraction: float = 0.5, final: SystemState | None = None) -> RunReport:
    """Summarise a completed run.

    ``tail_fraction`` sets the window (last fraction of slots) over which the
    steady-state battery level is averaged.
    """
    rep = RunReport(records=list(records))
    n = len(records)
    rep.slots = n
    if n == 0:
        if init is not None:
            rep.overload_counts = np.zeros(0, int)
            rep.steady_battery = np.zeros(len(init.batteries))
        return rep
    rep.total_cost = float(sum(r.cost for r in records))
    rep.time_avg_cost = rep.total_cost / n
    rep.grid_energy = float(sum(r.grid_draw.sum() for r in records))
    rep.delivered_energy = float(sum(r.delivered.sum() for r in records))
    rep.renewable_used = float(sum(r.renewable_used for r in records))
    rep.battery_charged = float(sum(r.battery_charge for r in records))
    rep.battery_discharged = float(sum(r.battery_discharge for r in records))
    rep.rate_cut = float(sum(r.rate_cut for r in records))
    rep.arrivals = sum(r.arrivals for r in records)
    rep.blocked = sum(r.blocked for r in records)
    rep.admitted = rep.arrivals - rep.blocked
    rep.waiting_times, rep.unfinished = waiting_times(records)
    rep.completed = len(rep.waiting_times)
    rep.overload_counts = np.sum([r.overload for r in records], axis=0).astype(int)
    rep.headroom_violations = sum(r.headroom_violation for r in records)

    rep.batteries = np.array([r.batteries for r in records])
    rep.battery_min = float(rep.batteries.min())
    rep.battery_max = float(rep.batteries.max())
    start = min(int(n * (1 - tail_fraction)), n - 1)
    rep.steady_battery = rep.batteries[start:].mean(axis=0)
    rep.queue_totals = np.array([r.queues.sum() for r in records])
    rep.queue_max = float(max(r.queues.max() if r.queues.size else 0.0 for r in records))
    rep.queue_time_avg = float(rep.queue_totals.mean())

    rep.dual_iterations_mean = float(np.mean([r.dual_iterations for r in records]))
    rep.dual_converged_rate = float(np.mean([r.dual_converged for r in records]))
    rep.lambda_peak = float(max(r.lambda_peak for r in records))
    rep.lambda_excursions = sum(r.lambda_peak > lambda_max for r in records)
    return rep


SUMMARY_KEYS = (
    "slots", "total_cost", "time_avg_cost", "grid_energy", "delivered_energy",
    "renewable_used", "battery_charged", "battery_discharged", "rate_cut",
    "arrivals", "admitted", "blocked", "completed", "unfinished",
    "mean_waiting", "waiting_p50", "waiting_p95", "headroom_violations",
    "max_overload_freq", "battery_min", "battery_max", "steady_battery_mean",
    "queue_max", "queue_time_avg", "dual_iterations_mean", "dual_converged_rate",
    "lambda_peak", "lambda_excursions",
)


def summary_items(rep: RunReport) -> list[tuple[str, object]]:
    values = {
        "mean_waiting": rep.mean_waiting,
        "waiting_p50": rep.waiting_percentile(50),
        "waiting_p95": rep.waiting_percentile(95),
        "max_overload_freq": float(rep.overload_freq.max()) if rep.overload_counts.size else 0.0,
        "steady_battery_mean": float(rep.steady_battery.mean()) if rep.steady_battery.size else 0.0,
    }
    return [(k, values[k] if k in values else getattr(rep, k)) for k in SUMMARY_KEYS]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_summary(rep: RunReport, path, meta: dict | None = None) -> None:
    lines = [f"{k} = {v}" for k, v in (meta or {}).items()]
    lines += [f"{k} = {_fmt(v)}" for k, v in summary_items(rep)]
    lines += [f"overload_freq_node{l} = {_fmt(f)}" for l, f in enumerate(rep.overload_freq)]
    lines += [f"steady_battery_station{i} = {_fmt(b)}" for i, b in enumerate(rep.steady_battery)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


CSV_COLUMNS = ("slot", "price", "cost", "grid_draw", "delivered", "renewable_used",
               "battery_charge", "battery_discharge", "queue_total", "queue_max",
               "arrivals", "blocked", "rate_cut", "overloads", "dual_iterations",
               "dual_converged", "dual_gap", "lambda_peak", "lyapunov")


def write_csv(rep: RunReport, path) -> None:
    n_st = rep.batteries.shape[1] if rep.batteries.ndim == 2 else 0
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(CSV_COLUMNS) + [f"battery_{i}" for i in range(n_st)])
        for r in rep.records:
            row = [r.slot, r.price, r.cost, r.grid_draw.sum(), r.delivered.sum(),
                   r.renewable_used, r.battery_charge, r.battery_discharge,
                   r.queues.sum(), r.queues.max() if r.queues.size else 0.0,
                   r.arrivals, r.blocked, r.rate_cut, int(r.overload.sum()),
                   r.dual_iterations, r.dual_converged, r.dual_gap, r.lambda_peak,
                   r.lyapunov]
            w.writerow([_fmt(v) for v in row] + [_fmt(b) for b in r.batteries])


def write_reports(rep: RunReport, outdir, meta: dict | None = None) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rep, out / "report.csv")
    write_summary(rep, out / "summary.txt", meta)
    return out
