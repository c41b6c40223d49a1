"""Domain types and per-slot dynamics of demand queues and station batteries.

The slot length is normalised to one, so a rate in kW and an energy in kWh
are numerically interchangeable within a slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Float slack for the policy-bug checks on battery bounds.
ENERGY_TOL = 1e-9


class PolicyError(RuntimeError):
    """A control decision broke a physical constraint; indicates a bug."""


class InfeasibleDischarge(PolicyError):
    pass


class BatteryOvercap(PolicyError):
    pass


@dataclass(frozen=True)
class FeederTopology:
    """Distribution network: node capacities, station incidence, load stats.

    ``incidence[l, i] == 1`` iff station ``i`` is downstream of node ``l``.
    """

    capacities: np.ndarray
    incidence: np.ndarray
    load_mean: np.ndarray
    load_std: np.ndarray

    def __post_init__(self):
        caps = np.asarray(self.capacities, dtype=float)
        x = np.asarray(self.incidence, dtype=int)
        mean = np.broadcast_to(np.asarray(self.load_mean, dtype=float), caps.shape).copy()
        std = np.broadcast_to(np.asarray(self.load_std, dtype=float), caps.shape).copy()
        if caps.ndim != 1 or caps.size == 0:
            raise ValueError("capacities must be a non-empty vector")
        if x.ndim != 2 or x.shape[0] != caps.size:
            raise ValueError(f"incidence must be {caps.size} x I, got {x.shape}")
        if not np.isin(x, (0, 1)).all():
            raise ValueError("incidence must be binary")
        if (x.sum(axis=0) == 0).any():
            raise ValueError("every station must be fed by at least one node")
        if (caps <= 0).any():
            raise ValueError("node capacities must be positive")
        if (std < 0).any():
            raise ValueError("load std must be nonnegative")
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "incidence", x)
        object.__setattr__(self, "load_mean", mean)
        object.__setattr__(self, "load_std", std)

    @property
    def node_count(self) -> int:
        return self.capacities.size

    @property
    def station_count(self) -> int:
        return self.incidence.shape[1]

    @classmethod
    def radial(cls, parents: Sequence[int], station_nodes: Sequence[int],
               capacities, load_mean, load_std) -> "FeederTopology":
        """Build the incidence matrix of a radial feeder.

        ``parents[l]`` is the upstream node of node ``l`` (-1 for the root) and
        station ``i`` hangs off node ``station_nodes[i]``; it is downstream of
        that node and every ancestor of it.
        """
        n = len(parents)
        x = np.zeros((n, len(station_nodes)), dtype=int)
        for i, node in enumerate(station_nodes):
            seen = set()
            while node != -1:
                if node in seen or not 0 <= node < n:
                    raise ValueError(f"bad feeder tree at node {node}")
                seen.add(node)
                x[node, i] = 1
                node = parents[node]
        return cls(np.broadcast_to(np.asarray(capacities, float), (n,)), x, load_mean, load_std)


@dataclass(frozen=True)
class StationConfig:
    outlet_count: int
    outlet_rate_max: float
    battery_capacity: float
    battery_charge_rate_max: float
    # Per-outlet grid fallback capacity; a station may draw J * grid_draw_max.
    grid_draw_max: float
    charge_efficiency: float = 1.0
    discharge_efficiency: float = 1.0

    def __post_init__(self):
        if self.outlet_count < 1:
            raise ValueError("a station needs at least one outlet")
        if self.outlet_rate_max <= 0 or self.battery_capacity <= 0:
            raise ValueError("outlet rate and battery capacity must be positive")
        if self.battery_charge_rate_max < 0:
            raise ValueError("battery charge rate must be nonnegative")
        if self.grid_draw_max < self.outlet_rate_max:
            raise ValueError("grid_draw_max must be >= outlet_rate_max")
        if not 0 < self.charge_efficiency <= 1:
            raise ValueError("charge efficiency must lie in (0, 1]")
        if self.discharge_efficiency < 1:
            raise ValueError("discharge efficiency must be >= 1")

    @property
    def station_grid_max(self) -> float:
        return self.outlet_count * self.grid_draw_max


class StationFleet:
    """Ordered collection of stations with a flat outlet index."""

    def __init__(self, stations: Sequence[StationConfig]):
        if not stations:
            raise ValueError("fleet is empty")
        self.stations = tuple(stations)
        self.outlet_counts = np.array([s.outlet_count for s in stations])
        self.outlet_station = np.repeat(np.arange(len(stations)), self.outlet_counts)
        self.outlet_offsets = np.concatenate(([0], np.cumsum(self.outlet_counts)))
        self.rate_max = np.array([s.outlet_rate_max for s in stations])
        self.capacity = np.array([s.battery_capacity for s in stations])
        self.eta_plus = np.array([s.charge_efficiency for s in stations])
        self.eta_minus = np.array([s.discharge_efficiency for s in stations])

    def __len__(self):
        return len(self.stations)

    def __getitem__(self, i) -> StationConfig:
        return self.stations[i]

    def __iter__(self):
        return iter(self.stations)

    @property
    def outlet_total(self) -> int:
        return int(self.outlet_counts.sum())

    def outlets_of(self, i: int) -> range:
        return range(self.outlet_offsets[i], self.outlet_offsets[i + 1])

    @classmethod
    def uniform(cls, count: int, cfg: StationConfig) -> "StationFleet":
        return cls([cfg] * count)


@dataclass
class SystemState:
    """Queues (flat, one per outlet) and battery levels at a slot boundary."""

    queues: np.ndarray
    batteries: np.ndarray

    def copy(self) -> "SystemState":
        return SystemState(self.queues.copy(), self.batteries.copy())

    def shifted(self, fleet: StationFleet, t_max: float) -> np.ndarray:
        return np.array([shifted_level(b, cfg, t_max) for b, cfg in zip(self.batteries, fleet)])

    @classmethod
    def initial(cls, fleet: StationFleet, batteries=None) -> "SystemState":
        b = fleet.capacity / 2 if batteries is None else np.broadcast_to(
            np.asarray(batteries, float), (len(fleet),)).copy()
        return cls(np.zeros(fleet.outlet_total), b)


@dataclass(frozen=True)
class SlotInputs:
    """Exogenous realisations for one slot."""

    arrivals: np.ndarray     # E_k per entry point, 0 when no request
    renewable: np.ndarray    # U_i per station
    price: float
    loads: np.ndarray        # realised N_l per node


@dataclass
class SlotDecision:
    assignment: np.ndarray         # K x outlets, binary
    outlet_rates: np.ndarray       # bang-bang rate decisions
    delivered: np.ndarray          # energy actually delivered per outlet
    battery_charge: np.ndarray     # R_i
    grid_draw: np.ndarray          # D_i^d
    multipliers: np.ndarray        # final lambda_l
    battery_discharge: np.ndarray = field(default=None)  # energy removed from battery

    def check(self, state: SystemState, inputs: SlotInputs, fleet: StationFleet,
              tol: float = 1e-9) -> None:
        """Raise PolicyError if any box, matching or discharge constraint fails."""
        w = self.assignment
        if (w.sum(axis=1) > 1).any() or (w.sum(axis=0) > 1).any():
            raise PolicyError("assignment is not a partial matching")
        if (w.sum(axis=0)[state.queues > 0] > 0).any():
            raise PolicyError("arrival directed to a busy outlet")
        rmax = fleet.rate_max[fleet.outlet_station]
        if (self.outlet_rates < -tol).any() or (self.outlet_rates > rmax + tol).any():
            raise PolicyError("outlet rate out of bounds")
        if (self.multipliers < 0).any():
            raise PolicyError("negative multiplier")
        for i, cfg in enumerate(fleet):
            s = self.delivered[fleet.outlets_of(i)].sum()
            u = inputs.renewable[i]
            r_cap = min(cfg.battery_charge_rate_max, max(u - s, 0.0))
            if not -tol <= self.battery_charge[i] <= r_cap + tol:
                raise PolicyError(f"battery charge out of bounds at station {i}")
            d_cap = min(cfg.station_grid_max, max(s - u, 0.0))
            if not -tol <= self.grid_draw[i] <= d_cap + tol:
                raise PolicyError(f"grid draw out of bounds at station {i}")
            drawn = cfg.discharge_efficiency * (max(s - u, 0.0) - self.grid_draw[i])
            if not -tol <= drawn <= state.batteries[i] + tol:
                raise PolicyError(f"discharge violates battery level at station {i}")


def step_queue(q: float, rate: float, admitted_arrival: float = 0.0) -> float:
    """Demand queue update ``[q - rate + arrival * 1{q == 0}]^+``."""
    if q < 0:
        raise ValueError("queue must be nonnegative")
    if admitted_arrival > 0 and q > 0:
        raise ValueError("an arrival can only be admitted to an empty queue")
    return max(q - rate + admitted_arrival, 0.0)


def delivered_energy(q: float, rate: float, admitted_arrival: float = 0.0) -> float:
    """Energy physically delivered: the rate, capped by what is left to serve."""
    return min(rate, q + admitted_arrival)


def step_battery(b: float, outlet_sum: float, renewable: float, grid_draw: float,
                 battery_charge: float, cfg: StationConfig) -> float:
    """Battery level after one slot of lossy charging/discharging.

    Raises InfeasibleDischarge when the battery share of the outlet load
    exceeds the stored energy and BatteryOvercap when the result would pass
    the capacity.
    """
    drawn = cfg.discharge_efficiency * (max(outlet_sum - renewable, 0.0) - grid_draw)
    if drawn < -ENERGY_TOL:
        raise InfeasibleDischarge(f"grid draw {grid_draw} exceeds the outlet deficit")
    if drawn > b + ENERGY_TOL:
        raise InfeasibleDischarge(f"discharge {drawn} exceeds battery level {b}")
    nxt = b - drawn + cfg.charge_efficiency * battery_charge
    if nxt > cfg.battery_capacity + ENERGY_TOL:
        raise BatteryOvercap(f"battery level {nxt} exceeds capacity {cfg.battery_capacity}")
    return min(max(nxt, 0.0), cfg.battery_capacity)


def shifted_level(b: float, cfg: StationConfig, t_max: float) -> float:
    """Shifted battery level ``b - t_max - eta_minus * J * r_max``."""
    return b - t_max - cfg.discharge_efficiency * cfg.outlet_count * cfg.outlet_rate_max
