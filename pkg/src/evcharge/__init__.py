"""Online control of EV charging across stations on a capacity-limited feeder."""

from .bounds import EnvBounds, LyapunovConstants, compute_constants, node_headroom
from .dual import DualConfig, solve_grid_draws
from .model import (FeederTopology, SlotDecision, SlotInputs, StationConfig, StationFleet,
                    SystemState)
from .scheduler import Plant, run_horizon, run_slot

__all__ = [
    "DualConfig", "EnvBounds", "FeederTopology", "LyapunovConstants", "Plant", "SlotDecision",
    "SlotInputs", "StationConfig", "StationFleet", "SystemState", "compute_constants",
    "node_headroom", "run_horizon", "run_slot", "solve_grid_draws",
]
