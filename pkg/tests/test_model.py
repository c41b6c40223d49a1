import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evcharge.model import (BatteryOvercap, FeederTopology, InfeasibleDischarge, PolicyError,
                            SlotDecision, StationConfig, StationFleet, SystemState,
                            delivered_energy, shifted_level, step_battery, step_queue)

from conftest import slot

CFG = StationConfig(3, 20.0, 500.0, 225.0, 20.0)


@pytest.mark.parametrize("q, rate, arrival, expected", [
    (10, 20, 0, 0),
    (0, 20, 30, 10),
    (0, 0, 0, 0),
])
def test_step_queue_examples(q, rate, arrival, expected):
    assert step_queue(q, rate, arrival) == expected


def test_step_queue_rejects_admission_to_busy_queue():
    with pytest.raises(ValueError):
        step_queue(5.0, 20.0, 10.0)


def test_delivered_energy_caps_at_remaining_demand():
    assert delivered_energy(10, 20) == 10
    assert delivered_energy(0, 20, 30) == 20
    assert delivered_energy(0, 0, 30) == 0


@given(st.lists(st.tuples(st.floats(0, 20), st.floats(0, 30)), max_size=60))
def test_queue_never_exceeds_largest_request(steps):
    q = 0.0
    for rate, arrival in steps:
        q = step_queue(q, rate, arrival if q == 0 else 0.0)
        assert 0.0 <= q <= 30.0


@pytest.mark.parametrize("eta_minus, expected", [(1.0, 90.0), (1.2, 88.0)])
def test_step_battery_discharge_examples(eta_minus, expected):
    cfg = StationConfig(3, 20.0, 500.0, 225.0, 20.0, 1.0, eta_minus)
    assert step_battery(100, 50, 30, 10, 0, cfg) == pytest.approx(expected, abs=1e-12)


def test_step_battery_charging_example():
    cfg = StationConfig(3, 20.0, 500.0, 225.0, 20.0, 0.9, 1.0)
    assert step_battery(100, 0, 40, 0, 40, cfg) == pytest.approx(136.0, abs=1e-12)


def test_step_battery_signals_policy_bugs():
    with pytest.raises(InfeasibleDischarge):
        step_battery(5, 50, 0, 10, 0, CFG)
    with pytest.raises(BatteryOvercap):
        step_battery(490, 0, 40, 0, 40, CFG)
    assert issubclass(InfeasibleDischarge, PolicyError)


@pytest.mark.parametrize("b, expected", [(500, 40), (0, -460), (460, 0)])
def test_shifted_level_examples(b, expected):
    assert shifted_level(b, CFG, 400) == expected


@given(st.floats(0, 1e4), st.floats(0, 1e4))
def test_shifted_level_is_an_affine_bijection(b, t_max):
    h = shifted_level(b, CFG, t_max)
    assert h + t_max + 60 == pytest.approx(b, abs=1e-9)
    assert shifted_level(b + 1, CFG, t_max) - h == pytest.approx(1.0)


def test_station_config_validation():
    StationConfig(1, 20, 100, 10, 20)  # equality allowed
    for bad in [dict(grid_draw_max=10), dict(charge_efficiency=1.1),
                dict(discharge_efficiency=0.9), dict(outlet_count=0)]:
        kw = dict(outlet_count=1, outlet_rate_max=20, battery_capacity=100,
                  battery_charge_rate_max=10, grid_draw_max=20)
        kw.update(bad)
        with pytest.raises(ValueError):
            StationConfig(**kw)


def test_topology_validation():
    with pytest.raises(ValueError, match="fed"):
        FeederTopology([100.0], np.array([[1, 0]]), [0.0], [0.0])
    with pytest.raises(ValueError):
        FeederTopology([0.0], np.array([[1]]), [0.0], [0.0])
    with pytest.raises(ValueError):
        FeederTopology([10.0], np.array([[1]]), [0.0], [-1.0])


def test_radial_incidence_marks_every_ancestor():
    topo = FeederTopology.radial([-1, 0, 1, 0], [2, 3], 100.0, 0.0, 0.0)
    assert topo.incidence.tolist() == [[1, 1], [1, 0], [1, 0], [0, 1]]
    with pytest.raises(ValueError):
        FeederTopology.radial([1, 0], [0], 100.0, 0.0, 0.0)


def test_fleet_flat_outlet_index():
    fleet = StationFleet([StationConfig(2, 10, 50, 5, 10), CFG])
    assert fleet.outlet_total == 5
    assert list(fleet.outlets_of(1)) == [2, 3, 4]
    assert fleet.outlet_station.tolist() == [0, 0, 1, 1, 1]


def _decision(**kw):
    base = dict(assignment=np.zeros((1, 1), int), outlet_rates=np.zeros(1),
                delivered=np.zeros(1), battery_charge=np.zeros(1), grid_draw=np.zeros(1),
                multipliers=np.zeros(1))
    base.update(kw)
    return SlotDecision(**base)


def test_decision_check_catches_violations():
    fleet = StationFleet([StationConfig(1, 20, 100, 50, 20)])
    state = SystemState(np.zeros(1), np.array([5.0]))
    inputs = slot([10], [0], 0.1)
    _decision().check(state, inputs, fleet)
    with pytest.raises(PolicyError, match="rate"):
        _decision(outlet_rates=np.array([25.0])).check(state, inputs, fleet)
    with pytest.raises(PolicyError, match="battery level"):
        _decision(outlet_rates=np.array([20.0]), delivered=np.array([10.0]),
                  assignment=np.ones((1, 1), int)).check(state, inputs, fleet)
    with pytest.raises(PolicyError, match="busy"):
        _decision(assignment=np.ones((1, 1), int)).check(
            SystemState(np.ones(1), np.array([5.0])), inputs, fleet)
    with pytest.raises(PolicyError, match="multiplier"):
        _decision(multipliers=np.array([-1.0])).check(state, inputs, fleet)
