import csv

import numpy as np
import pytest

from evcharge import metrics
from evcharge.config import build_scenario, load_config
from evcharge.scheduler import SlotRecord, run_horizon


def record(t, **kw):
    base = dict(slot=t, price=0.0, cost=0.0, grid_draw=np.zeros(1), delivered=np.zeros(1),
                renewable_used=0.0, battery_charge=0.0, battery_discharge=0.0,
                batteries=np.zeros(1), queues=np.zeros(1), admitted=np.zeros(1), arrivals=0,
                blocked=0, node_load=np.zeros(2), overload=np.zeros(2, bool),
                headroom_violation=False, rate_cut=0.0, lyapunov=0.0)
    base.update(kw)
    return SlotRecord(**base)


def test_all_zero_run():
    rep = metrics.aggregate([record(t) for t in range(10)])
    for key, value in metrics.summary_items(rep):
        if key not in ("slots", "dual_converged_rate"):
            assert value == 0, key
    assert rep.overload_freq.tolist() == [0.0, 0.0]


def test_overload_frequency():
    recs = [record(t, overload=np.array([t < 5, False])) for t in range(360)]
    rep = metrics.aggregate(recs)
    assert rep.overload_freq[0] == pytest.approx(0.01389, abs=1e-5)
    assert rep.overload_counts.tolist() == [5, 0]


def test_waiting_time_counts_from_acceptance_to_completion():
    recs = [record(0, admitted=np.array([20.0]), queues=np.array([10.0])),
            record(1, queues=np.array([5.0])),
            record(2, queues=np.array([0.0])),
            record(3, admitted=np.array([8.0]), queues=np.array([8.0]))]
    times, open_ = metrics.waiting_times(recs)
    assert times == [3 / 20] and open_ == 1


def test_steady_battery_window():
    recs = [record(t, batteries=np.array([float(t)])) for t in range(10)]
    assert metrics.aggregate(recs).steady_battery.tolist() == [7.0]
    assert metrics.aggregate(recs, tail_fraction=0.2).steady_battery.tolist() == [8.5]


@pytest.fixture(scope="module")
def short_run():
    sc = build_scenario(load_config(), horizon=40)
    return sc, run_horizon(sc.init, sc.trace, sc.plant, sc.consts, sc.dual_cfg)


def test_cost_is_price_times_grid(short_run):
    sc, rep = short_run
    expected = sum(s.price * r.grid_draw.sum() for s, r in zip(sc.trace, rep.records))
    assert rep.total_cost == pytest.approx(expected, rel=1e-12)


def test_report_files(short_run, tmp_path):
    _, rep = short_run
    metrics.write_reports(rep, tmp_path, {"seed": 1})
    with (tmp_path / "report.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0][:len(metrics.CSV_COLUMNS)]) == metrics.CSV_COLUMNS
    assert rows[0][-1] == "battery_17" and len(rows) == 41
    summary = metrics.read_summary(tmp_path / "summary.txt")
    assert summary["seed"] == "1"
    assert float(summary["total_cost"]) == rep.total_cost
    assert list(summary)[1:1 + len(metrics.SUMMARY_KEYS)] == list(metrics.SUMMARY_KEYS)
