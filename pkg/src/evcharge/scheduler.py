"""Per-slot orchestration of the online policy and state advancement.

Order within a slot: direct requests to empty outlets, set outlet rates,
store surplus renewable, run the dual loop for grid draws, reconcile the
battery share, then advance queues and batteries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import model
from .bounds import LyapunovConstants, lyapunov, node_headroom
from .directing import direct
from .dual import DualConfig, DualResult, solve_grid_draws
from .model import (FeederTopology, PolicyError, SlotDecision, SlotInputs, StationFleet,
                    SystemState)
from .station import outlet_rate, renewable_input


@dataclass(frozen=True)
class Plant:
    """Everything about the physical system that stays fixed during a run."""

    fleet: StationFleet
    topo: FeederTopology
    epsilon: float
    headroom: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.topo.station_count != len(self.fleet):
            raise ValueError("incidence width does not match the fleet size")
        object.__setattr__(self, "headroom", node_headroom(self.topo, self.epsilon))


@dataclass
class SlotRecord:
    slot: int
    price: float
    cost: float
    grid_draw: np.ndarray
    delivered: np.ndarray
    renewable_used: float
    battery_charge: float
    battery_discharge: float
    batteries: np.ndarray        # after the slot
    queues: np.ndarray           # after the slot
    admitted: np.ndarray         # per outlet, energy admitted this slot
    arrivals: int
    blocked: int
    node_load: np.ndarray        # draws + realised uncontrollable load
    overload: np.ndarray         # node_load > capacity
    headroom_violation: bool
    rate_cut: float              # energy withheld for lack of supply
    lyapunov: float
    dual_iterations: int = 0
    dual_converged: bool = True
    dual_gap: float = 0.0
    lambda_peak: float = 0.0


def reconcile_supply(delivered: np.ndarray, grid_draw: np.ndarray, state: SystemState,
                     inputs: SlotInputs, fleet: StationFleet, incoming: np.ndarray) -> float:
    """Cut delivered energy where grid plus battery cannot cover the deficit.

    Works in place on ``delivered``. Outlets with the least remaining demand
    are cut first. Returns the total energy withheld.
    """
    withheld = 0.0
    for i, cfg in enumerate(fleet):
        idx = fleet.outlets_of(i)
        deficit = max(delivered[idx].sum() - inputs.renewable[i], 0.0)
        need = deficit - grid_draw[i]
        available = state.batteries[i] / cfg.discharge_efficiency
        short = need - available
        if short <= model.ENERGY_TOL:
            continue
        remaining = state.queues[idx] + incoming[idx]
        for o in np.asarray(idx)[np.argsort(remaining, kind="stable")]:
            cut = min(short, delivered[o])
            delivered[o] -= cut
            short -= cut
            withheld += cut
            if short <= 0:
                break
    return withheld


def battery_flows(delivered, grid_draw, battery_charge, inputs, fleet):
    """Renewable used directly and energy removed from each battery."""
    sums = np.add.reduceat(delivered, fleet.outlet_offsets[:-1]) if len(delivered) else np.zeros(len(fleet))
    used = np.minimum(sums, inputs.renewable)
    discharge = fleet.eta_minus * (np.maximum(sums - inputs.renewable, 0.0) - grid_draw)
    return sums, used, discharge


def proposed_decision(state: SystemState, inputs: SlotInputs, plant: Plant,
                      consts: LyapunovConstants, dual_cfg: DualConfig
                      ) -> tuple[SlotDecision, DualResult]:
    fleet = plant.fleet
    h = state.shifted(fleet, consts.t_max)
    outlet_score = (h * fleet.eta_minus)[fleet.outlet_station]

    free = np.flatnonzero(state.queues == 0)
    w = direct(inputs.arrivals, free, outlet_score, fleet.outlet_total)
    incoming = inputs.arrivals @ w if w.size else np.zeros(fleet.outlet_total)

    rates = np.zeros(fleet.outlet_total)
    delivered = np.zeros(fleet.outlet_total)
    for o in range(fleet.outlet_total):
        i = fleet.outlet_station[o]
        rates[o] = outlet_rate(state.queues[o], incoming[o], h[i], fleet[i])
        delivered[o] = model.delivered_energy(state.queues[o], rates[o], incoming[o])

    sums = np.add.reduceat(delivered, fleet.outlet_offsets[:-1])
    charge = np.array([renewable_input(h[i], inputs.renewable[i], sums[i], cfg)
                       for i, cfg in enumerate(fleet)])

    gaps = np.maximum(sums - inputs.renewable, 0.0)
    upper = np.minimum(gaps, fleet.outlet_counts * np.array([c.grid_draw_max for c in fleet]))
    base = h * fleet.eta_minus + consts.v * inputs.price
    res = solve_grid_draws(base, upper, plant.topo.incidence, plant.headroom, dual_cfg)
    draws = res.draws

    reconcile_supply(delivered, draws, state, inputs, fleet, incoming)
    _, _, discharge = battery_flows(delivered, draws, charge, inputs, fleet)
    dec = SlotDecision(w, rates, delivered, charge, draws, res.multipliers, discharge)
    return dec, res


def advance(state: SystemState, inputs: SlotInputs, dec: SlotDecision,
            fleet: StationFleet) -> SystemState:
    """Next state from a reconciled decision."""
    incoming = inputs.arrivals @ dec.assignment if dec.assignment.size else np.zeros(fleet.outlet_total)
    q = np.array([model.step_queue(state.queues[o], dec.delivered[o], incoming[o])
                  for o in range(fleet.outlet_total)])
    b = np.empty(len(fleet))
    for i, cfg in enumerate(fleet):
        s = dec.delivered[fleet.outlets_of(i)].sum()
        b[i] = model.step_battery(state.batteries[i], s, inputs.renewable[i],
                                  dec.grid_draw[i], dec.battery_charge[i], cfg)
    return SystemState(q, b)


def settle(t: int, state: SystemState, inputs: SlotInputs, dec: SlotDecision, plant: Plant,
           dual: DualResult | None = None, t_max: float = 0.0) -> tuple[SystemState, SlotRecord]:
    """Validate a decision, advance the state and build the slot record."""
    fleet = plant.fleet
    dec.check(state, inputs, fleet)
    nxt = advance(state, inputs, dec, fleet)
    incoming = inputs.arrivals @ dec.assignment if dec.assignment.size else np.zeros(fleet.outlet_total)
    sums, used, discharge = battery_flows(dec.delivered, dec.grid_draw, dec.battery_charge,
                                          inputs, fleet)
    draws = plant.topo.incidence @ dec.grid_draw
    node_load = draws + inputs.loads
    n_req = int((inputs.arrivals > 0).sum())
    n_adm = int(dec.assignment.sum())
    withheld = float((np.minimum(dec.outlet_rates, state.queues + incoming) - dec.delivered).sum())
    rec = SlotRecord(
        slot=t,
        price=float(inputs.price),
        cost=float(inputs.price * dec.grid_draw.sum()),
        grid_draw=dec.grid_draw.copy(),
        delivered=dec.delivered.copy(),
        renewable_used=float(used.sum()),
        battery_charge=float(dec.battery_charge.sum()),
        battery_discharge=float(discharge.sum()),
        batteries=nxt.batteries.copy(),
        queues=nxt.queues.copy(),
        admitted=incoming,
        arrivals=n_req,
        blocked=n_req - n_adm,
        node_load=node_load,
        overload=node_load > plant.topo.capacities,
        headroom_violation=bool((draws > np.maximum(plant.headroom, 0.0) + 1e-9).any()),
        rate_cut=max(withheld, 0.0),
        lyapunov=lyapunov(nxt.queues, nxt.shifted(fleet, t_max)),
    )
    if dual is not None:
        rec.dual_iterations = dual.iterations
        rec.dual_converged = dual.converged
        rec.dual_gap = dual.gap_estimate
        rec.lambda_peak = float(dual.multipliers.max()) if dual.multipliers.size else 0.0
    return nxt, rec


def run_slot(t: int, state: SystemState, inputs: SlotInputs, plant: Plant,
             consts: LyapunovConstants, dual_cfg: DualConfig):
    """One slot of the proposed policy: ``(next_state, decision, record)``."""
    dec, res = proposed_decision(state, inputs, plant, consts, dual_cfg)
    nxt, rec = settle(t, state, inputs, dec, plant, res, consts.t_max)
    return nxt, dec, rec


def run_horizon(init: SystemState, trace: Iterable[SlotInputs], plant: Plant,
                consts: LyapunovConstants, dual_cfg: DualConfig = DualConfig(),
                policy: str = "proposed", strict_lambda: bool = False):
    """Fold the chosen policy over a trace and aggregate the records.

    ``policy`` is ``"proposed"`` or ``"greedy"``. With ``strict_lambda`` a
    multiplier above ``dual_cfg.lambda_max`` aborts the run.
    """
    from .baselines import greedy_slot
    from .metrics import aggregate

    state = init.copy()
    records = []
    for t, inputs in enumerate(trace):
        if policy == "proposed":
            nxt, _, rec = run_slot(t, state, inputs, plant, consts, dual_cfg)
            if strict_lambda and rec.lambda_peak > dual_cfg.lambda_max:
                raise PolicyError(f"slot {t}: multiplier {rec.lambda_peak:.6g} exceeds "
                                  f"lambda_max {dual_cfg.lambda_max:g}")
        elif policy == "greedy":
            dec = greedy_slot(state, inputs, plant)
            nxt, rec = settle(t, state, inputs, dec, plant, None, consts.t_max)
        else:
            raise ValueError(f"unknown policy {policy!r}")
        records.append(rec)
        state = nxt
    return aggregate(records, init=init, lambda_max=dual_cfg.lambda_max, final=state)
