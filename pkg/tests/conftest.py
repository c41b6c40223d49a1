import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evcharge import (EnvBounds, FeederTopology, Plant, SlotInputs, StationConfig,  # noqa: E402
                      StationFleet)


def single_node(capacity=1000.0, mean=0.0, std=0.0, stations=1):
    return FeederTopology(np.array([capacity]), np.ones((1, stations), int),
                          np.array([mean]), np.array([std]))


def slot(arrivals, renewable, price, loads=(0.0,)):
    return SlotInputs(np.atleast_1d(np.asarray(arrivals, float)),
                      np.atleast_1d(np.asarray(renewable, float)), float(price),
                      np.atleast_1d(np.asarray(loads, float)))


@pytest.fixture
def one_outlet():
    """One station with one outlet on a single unconstrained node."""
    cfg = StationConfig(1, 20.0, 100.0, 50.0, 30.0)
    fleet = StationFleet([cfg])
    topo = single_node()
    return Plant(fleet, topo, 0.05), EnvBounds(30.0, 50.0, 0.2)
