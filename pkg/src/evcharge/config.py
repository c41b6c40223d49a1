"""Scenario configuration (INI-style ``.cfg`` files) and trace assembly.

Schema (all sections optional; missing keys fall back to the bundled
``default.cfg``)::

    [feeder]    parents, station_nodes, capacity_base, capacity_per_station,
                capacities, load_mean, load_std
    [stations]  outlets, outlet_rate_max, battery_capacity,
                battery_charge_rate_max, grid_draw_max, charge_efficiency,
                discharge_efficiency, battery_init
    [environment] entry_points, request_probability, demand_min, demand_max,
                renewable_max, renewable_scale, price_max, slot_minutes,
                horizon_slots, wind_trace, price_trace
    [policy]    name, v, v_fraction, epsilon, kappa, max_iters, tol, lambda_max
    [run]       seed, tail_fraction

Station keys accept a scalar or a comma list with one entry per station.
The feeder is radial: ``parents[l]`` is node ``l``'s upstream node (-1 for
the root) and station ``i`` is fed at node ``station_nodes[i]``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ingest
from .bounds import EnvBounds, LyapunovConstants, ParameterError, compute_constants
from .dual import DualConfig
from .model import FeederTopology, SlotInputs, StationConfig, StationFleet, SystemState
from .scheduler import Plant

DEFAULT_CONFIG = Path(__file__).with_name("data") / "default.cfg"


class ConfigError(ValueError):
    pass


def load_config(path=None, overrides=()) -> configparser.ConfigParser:
    """Defaults, then ``path``, then ``key=value`` overrides."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read(DEFAULT_CONFIG)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        cp.set("DEFAULT", "config_dir", str(path.resolve().parent))
    for item in overrides:
        apply_override(cp, item)
    return cp


def apply_override(cp: configparser.ConfigParser, item: str) -> None:
    """Apply ``key=value`` or ``section.key=value``; bare keys must be unique."""
    if "=" not in item:
        raise ConfigError(f"override must look like key=value: {item!r}")
    key, value = (s.strip() for s in item.split("=", 1))
    key = key.lower()
    if "." in key:
        section, key = key.split(".", 1)
        if not cp.has_section(section):
            raise ConfigError(f"unknown section {section!r}")
    else:
        hits = [s for s in cp.sections() if key in cp[s] and key not in cp.defaults()]
        if not hits:
            raise ConfigError(f"unknown config key {key!r}")
        if len(hits) > 1:
            raise ConfigError(f"ambiguous key {key!r}; use one of "
                              + ", ".join(f"{s}.{key}" for s in hits))
        section = hits[0]
    cp.set(section, key, value)
    # v and v_fraction are alternatives; the last one set wins
    if section == "policy" and key in ("v", "v_fraction") and value:
        cp.set("policy", "v_fraction" if key == "v" else "v", "")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _per_station(cp, key: str, n: int, cast=float) -> list:
    vals = [cast(float(x)) for x in cp.get("stations", key).replace(",", " ").split()]
    if len(vals) == 1:
        return vals * n
    if len(vals) != n:
        raise ConfigError(f"stations.{key} needs 1 or {n} values, got {len(vals)}")
    return vals


@dataclass
class Scenario:
    plant: Plant
    consts: LyapunovConstants
    dual_cfg: DualConfig
    env: EnvBounds
    init: SystemState
    trace: list
    policy: str
    seed: int
    tail_fraction: float

    @property
    def fleet(self):
        return self.plant.fleet


def build_plant(cp) -> tuple[Plant, StationFleet]:
    try:
        parents = [int(x) for x in _floats(cp.get("feeder", "parents"))]
        nodes = [int(x) for x in _floats(cp.get("feeder", "station_nodes"))]
        n = len(nodes)
        cfgs = [StationConfig(int(j), r, b, rr, g, ep, em) for j, r, b, rr, g, ep, em in zip(
            _per_station(cp, "outlets", n, int),
            _per_station(cp, "outlet_rate_max", n),
            _per_station(cp, "battery_capacity", n),
            _per_station(cp, "battery_charge_rate_max", n),
            _per_station(cp, "grid_draw_max", n),
            _per_station(cp, "charge_efficiency", n),
            _per_station(cp, "discharge_efficiency", n))]
        fleet = StationFleet(cfgs)
        probe = FeederTopology.radial(parents, nodes, 1.0, 0.0, 0.0)
        if cp.get("feeder", "capacities", fallback="").strip():
            caps = np.array(_floats(cp.get("feeder", "capacities")))
        else:
            caps = (cp.getfloat("feeder", "capacity_base")
                    + cp.getfloat("feeder", "capacity_per_station") * probe.incidence.sum(axis=1))
        topo = FeederTopology(caps, probe.incidence,
                              np.array(_floats(cp.get("feeder", "load_mean"))),
                              np.array(_floats(cp.get("feeder", "load_std"))))
        plant = Plant(fleet, topo, cp.getfloat("policy", "epsilon"))
    except (ValueError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from None
    return plant, fleet


def _trace_path(cp, key: str) -> Path:
    raw = cp.get("environment", key).strip()
    if raw == "bundled":
        return ingest.bundled(f"{key}.csv")
    p = Path(raw)
    if not p.is_absolute() and cp.has_option("DEFAULT", "config_dir"):
        p = Path(cp.get("DEFAULT", "config_dir")) / p
    return p


def build_trace(cp, plant: Plant, n_slots: int, seed: int) -> list[SlotInputs]:
    env = cp["environment"]
    slot_min = env.getfloat("slot_minutes")
    scale = env.getfloat("renewable_scale")
    wind = ingest.tile(ingest.load_renewable(_trace_path(cp, "wind_trace"),
                                             slot_minutes=slot_min, scale=scale), n_slots)
    price = ingest.tile(ingest.load_prices(_trace_path(cp, "price_trace"), slot_min), n_slots)
    loads = ingest.synth_loads(plant.topo.load_mean, plant.topo.load_std, n_slots, seed)
    arrivals = ingest.synth_arrivals(env.getint("entry_points"),
                                     env.getfloat("request_probability"), n_slots, seed,
                                     env.getfloat("demand_max"), env.getfloat("demand_min"))
    n_st = len(plant.fleet)
    return [SlotInputs(arrivals[t], np.full(n_st, wind[t]), float(price[t]), loads[t])
            for t in range(n_slots)]


def build_scenario(cp: configparser.ConfigParser, horizon: int | None = None) -> Scenario:
    plant, fleet = build_plant(cp)
    env_sec = cp["environment"]
    scale = env_sec.getfloat("renewable_scale")
    u_max = env_sec.get("renewable_max", fallback="auto").strip()
    u_max = ingest.V27.rated_power * scale if u_max == "auto" else float(u_max)
    env = EnvBounds(env_sec.getfloat("demand_max"), u_max, env_sec.getfloat("price_max"))
    pol = cp["policy"]
    dual_cfg = DualConfig(pol.getfloat("kappa"), pol.getint("max_iters"),
                          pol.getfloat("tol"), pol.getfloat("lambda_max"))
    try:
        if pol.get("v", fallback="").strip():
            v = pol.getfloat("v")
        elif not pol.get("v_fraction", fallback="").strip():
            raise ConfigError("policy needs v or v_fraction")
        else:
            from .bounds import v_max
            v = pol.getfloat("v_fraction") * v_max(fleet, plant.topo, env, dual_cfg.lambda_max)
        consts = compute_constants(fleet, plant.topo, env, dual_cfg.lambda_max, v)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None

    seed = cp.getint("run", "seed")
    n = env_sec.getint("horizon_slots") if horizon is None else horizon
    try:
        trace = build_trace(cp, plant, n, seed)
    except (OSError, ingest.TraceError) as exc:
        raise ConfigError(f"trace error: {exc}") from None
    for t, s in enumerate(trace):
        if s.price > env.price_max or s.price < 0:
            raise ConfigError(f"slot {t}: price {s.price} outside [0, price_max]")
        if (s.renewable > env.renewable_max + 1e-9).any():
            raise ConfigError(f"slot {t}: renewable exceeds renewable_max")
    init_b = _per_station(cp, "battery_init", len(fleet))
    init = SystemState.initial(fleet, init_b)
    if (init.batteries < 0).any() or (init.batteries > fleet.capacity).any():
        raise ConfigError("battery_init must lie within [0, battery_capacity]")
    return Scenario(plant, consts, dual_cfg, env, init, trace, pol.get("name"), seed,
                    cp.getfloat("run", "tail_fraction"))
