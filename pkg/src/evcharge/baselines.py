"""Greedy comparison policy.

Every request goes to an idle outlet of the station with the most stored
energy, busy outlets always charge at full rate, and the load is supplied by
renewable, then battery, then grid. Grid draws are clipped to node headroom
with the same proportional repair as the proposed policy.
"""

from __future__ import annotations

import numpy as np

from . import model
from .dual import repair_draws
from .model import SlotDecision, SlotInputs, SystemState
from .scheduler import Plant, battery_flows, reconcile_supply


def greedy_slot(state: SystemState, inputs: SlotInputs, plant: Plant) -> SlotDecision:
    fleet = plant.fleet
    n_out = fleet.outlet_total
    w = np.zeros((inputs.arrivals.size, n_out), dtype=int)
    idle = state.queues == 0
    # station preference: most stored energy, lower index on ties
    station_order = np.lexsort((np.arange(len(fleet)), -state.batteries))
    for k in np.flatnonzero(inputs.arrivals > 0):
        for i in station_order:
            free = [o for o in fleet.outlets_of(i) if idle[o]]
            if free:
                w[k, free[0]] = 1
                idle[free[0]] = False
                break
        else:
            break  # no idle outlet left anywhere; remaining requests are blocked
    incoming = inputs.arrivals @ w

    busy = (state.queues + incoming) > 0
    rates = np.where(busy, fleet.rate_max[fleet.outlet_station], 0.0)
    delivered = np.minimum(rates, state.queues + incoming)

    sums = np.add.reduceat(delivered, fleet.outlet_offsets[:-1])
    surplus = np.maximum(inputs.renewable - sums, 0.0)
    deficit = np.maximum(sums - inputs.renewable, 0.0)
    space = (fleet.capacity - state.batteries) / fleet.eta_plus
    charge = np.minimum.reduce([np.array([c.battery_charge_rate_max for c in fleet]),
                                surplus, np.maximum(space, 0.0)])

    from_battery = np.minimum(deficit, state.batteries / fleet.eta_minus)
    grid_cap = fleet.outlet_counts * np.array([c.grid_draw_max for c in fleet])
    draws = np.minimum(deficit - from_battery, grid_cap)
    draws = repair_draws(np.maximum(draws, 0.0), plant.topo.incidence, plant.headroom)

    reconcile_supply(delivered, draws, state, inputs, fleet, incoming)
    _, _, discharge = battery_flows(delivered, draws, charge, inputs, fleet)
    # tiny negative residue from the min chain
    discharge = np.where(np.abs(discharge) < model.ENERGY_TOL, 0.0, discharge)
    return SlotDecision(w, rates, delivered, charge, draws,
                        np.zeros(plant.topo.node_count), discharge)
