"""Trace loading and synthesis.

Wind speed is converted to turbine output with a tabulated power curve,
hourly series are resampled to the slot grid, and loads and PEV arrivals are
drawn from seeded generators. Every random stream uses numpy's PCG64 bit
generator seeded through ``numpy.random.SeedSequence``, which is stable
across platforms and numpy releases.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.stats import norm


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class PowerCurve:
    """Piecewise-linear wind turbine power curve (m/s -> kW)."""

    speeds: tuple
    powers: tuple
    cut_in: float
    cut_out: float
    rated_power: float

    def __post_init__(self):
        s = np.asarray(self.speeds, float)
        p = np.asarray(self.powers, float)
        if s.shape != p.shape or s.size < 2:
            raise ValueError("power curve needs matching speed/power breakpoints")
        if (np.diff(s) <= 0).any():
            raise ValueError("power curve speeds must be strictly increasing")
        if (p < 0).any() or (p > self.rated_power).any():
            raise ValueError("power curve outputs must lie in [0, rated]")
        if not self.cut_in < self.cut_out:
            raise ValueError("cut-in must be below cut-out")


# Vestas V27 (225 kW): cut-in 3.5 m/s, rated at 14 m/s, cut-out 25 m/s.
V27 = PowerCurve(
    speeds=(3.5, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 25.0),
    powers=(0.0, 7.0, 20.0, 40.0, 64.0, 94.0, 127.0, 160.0, 190.0, 210.0, 220.0, 225.0, 225.0),
    cut_in=3.5, cut_out=25.0, rated_power=225.0,
)


def wind_to_power(speed, curve: PowerCurve = V27):
    """Turbine output in kW; zero outside ``[cut_in, cut_out]``."""
    v = np.asarray(speed, float)
    if (v < 0).any():
        raise ValueError("wind speed must be nonnegative")
    p = np.interp(v, curve.speeds, curve.powers)
    p = np.where((v < curve.cut_in) | (v > curve.cut_out), 0.0, p)
    return float(p) if p.ndim == 0 else p


def resample(times, values, method: str = "linear", slot_minutes: float = 10.0):
    """Resample a series onto a regular slot grid.

    ``times`` are minutes (numbers) or datetimes; the grid starts at the first
    sample and ends at or before the last. ``method`` is ``"linear"`` or
    ``"spline"`` (natural cubic spline). Returns ``(grid_minutes, values)``.
    """
    t = _as_minutes(times)
    y = np.asarray(values, float)
    if t.shape != y.shape:
        raise TraceError("times and values differ in length")
    if (np.diff(t) <= 0).any():
        raise TraceError("timestamps must be strictly increasing")
    grid = np.arange(t[0], t[-1] + 1e-9, slot_minutes)
    if method == "linear":
        if t.size < 2:
            raise TraceError("linear resampling needs at least 2 points")
        return grid, np.interp(grid, t, y)
    if method in ("spline", "cubic-spline"):
        if t.size < 4:
            raise TraceError("spline resampling needs at least 4 points")
        return grid, CubicSpline(t, y, bc_type="natural")(grid)
    raise ValueError(f"unknown resampling method {method!r}")


def _as_minutes(times) -> np.ndarray:
    times = list(times)
    if times and isinstance(times[0], datetime):
        t0 = times[0]
        return np.array([(t - t0).total_seconds() / 60.0 for t in times])
    return np.asarray(times, float)


def read_trace(path) -> tuple[list[datetime], np.ndarray]:
    """Read ``timestamp_iso8601,value`` lines after a single header row."""
    path = Path(path)
    stamps, vals = [], []
    with path.open(newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None:
            raise TraceError(f"{path}: empty trace file")
        for lineno, row in enumerate(rows, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise TraceError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                stamps.append(datetime.fromisoformat(row[0].strip()))
                vals.append(float(row[1]))
            except ValueError as exc:
                raise TraceError(f"{path}:{lineno}: {exc}") from None
    if len(stamps) < 2:
        raise TraceError(f"{path}: need at least two samples")
    return stamps, np.asarray(vals)


def write_trace(path, stamps: Sequence[datetime], values, unit: str) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", f"value[{unit}]"])
        for s, v in zip(stamps, values):
            w.writerow([s.isoformat(), repr(float(v))])


def truncated_location(mean: float, std: float) -> float:
    """Location of a zero-truncated normal whose mean equals ``mean``."""
    if std == 0:
        return mean

    def trunc_mean(mu):
        a = mu / std
        return mu + std * norm.pdf(a) / norm.cdf(a)

    if trunc_mean(mean - 10 * std) > mean:
        raise ValueError("mean too small relative to std for a zero-truncated normal")
    return brentq(lambda mu: trunc_mean(mu) - mean, mean - 10 * std, mean, xtol=1e-12)


def _rng(seed, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), stream])))


def synth_loads(load_mean, load_std, n_slots: int, seed: int) -> np.ndarray:
    """Uncontrollable node loads, ``n_slots x L``, Gaussian truncated at zero.

    The location is shifted so that the truncated mean equals ``load_mean``;
    negative draws are rejected and redrawn.
    """
    mean = np.atleast_1d(np.asarray(load_mean, float))
    std = np.broadcast_to(np.asarray(load_std, float), mean.shape)
    loc = np.array([truncated_location(m, s) for m, s in zip(mean, std)])
    rng = _rng(seed, 1)
    out = rng.normal(loc, std, size=(n_slots, mean.size))
    bad = out < 0
    while bad.any():
        out[bad] = rng.normal(np.broadcast_to(loc, out.shape)[bad], np.broadcast_to(std, out.shape)[bad])
        bad = out < 0
    return out


def synth_arrivals(k: int, prob, n_slots: int, seed: int, demand_max: float = 30.0,
                   demand_min: float = 5.0) -> np.ndarray:
    """Arrivals ``E_k(t)``, ``n_slots x K``.

    A request appears at each entry point with probability ``prob`` per slot;
    its size is uniform on ``(demand_min, demand_max]``.
    """
    p = np.broadcast_to(np.asarray(prob, float), (k,))
    if ((p < 0) | (p > 1)).any():
        raise ValueError("request probability must lie in [0, 1]")
    if not 0 <= demand_min < demand_max:
        raise ValueError("need 0 <= demand_min < demand_max")
    rng = _rng(seed, 2)
    present = rng.random((n_slots, k)) < p
    size = demand_max - rng.random((n_slots, k)) * (demand_max - demand_min)
    return np.where(present, size, 0.0)


def tile(series, n_slots: int) -> np.ndarray:
    """Repeat a series cyclically to ``n_slots`` entries."""
    s = np.asarray(series, float)
    if s.size == 0:
        raise TraceError("cannot tile an empty series")
    return np.resize(s, n_slots)


def bundled(name: str) -> Path:
    return Path(__file__).with_name("data") / name


def load_renewable(path, curve: PowerCurve = V27, slot_minutes: float = 10.0,
                   scale: float = 1.0) -> np.ndarray:
    """Hourly wind speed file -> per-slot turbine power, spline-resampled.

    Spline overshoot is clipped to ``[0, rated]`` before scaling.
    """
    stamps, speed = read_trace(path)
    _, power = resample(stamps, wind_to_power(speed, curve), "spline", slot_minutes)
    return np.clip(power, 0.0, curve.rated_power) * scale


def load_prices(path, slot_minutes: float = 10.0) -> np.ndarray:
    stamps, price = read_trace(path)
    return resample(stamps, price, "linear", slot_minutes)[1]


def synth_hourly_traces(hours: int = 60, seed: int = 2016):
    """Hourly wind speed (m/s) and price ($/kWh) with daily cycles.

    Used to produce the bundled sample traces; real data can replace them.
    """
    rng = _rng(seed, 3)
    h = np.arange(hours + 1)
    wind = 8.0 + 3.0 * np.sin(2 * math.pi * (h - 4) / 24) + np.cumsum(rng.normal(0, 0.8, h.size))
    wind = np.clip(wind, 0.0, 24.0)
    price = 0.06 + 0.04 * np.sin(2 * math.pi * (h - 10) / 24) + rng.normal(0, 0.008, h.size)
    price = np.clip(price, 0.01, 0.15)
    t0 = datetime(2014, 7, 1)
    stamps = [t0 + timedelta(hours=int(x)) for x in h]
    return stamps, wind, price
