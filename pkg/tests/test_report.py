import csv
import io
import json

import numpy as np
import pytest

from ecoplatoon import cycle as cycles
from ecoplatoon import report
from ecoplatoon.sim import ScenarioConfig, TripLog, run_scenario


def _log(n=600, tail=0, fuel=1.56e-3, strategy="dmpc", dd=None, gap=5.0):
    m = n + tail
    z = np.zeros((m, 4))
    dd = z.copy() if dd is None else dd
    return TripLog(
        strategy=strategy, Ts=1.0, desired_gap=5.0, n_cycle=n, t=np.arange(m, dtype=float),
        hdv_speed=np.zeros(m), v=z.copy(), a=z.copy(), u=z.copy(), gap=np.full((m, 4), gap) + dd,
        dd=dd, dv=z.copy(), P=z.copy(), fuel=np.full((m, 4), fuel), follower_cost=np.zeros((m, 3)),
    )


def test_fuel_report_constant_idle():
    out = report.fuel_report(_log(tail=50))
    assert out["per_truck"] == pytest.approx([0.936] * 4, rel=1e-12)
    assert out["total"] == pytest.approx(3.744, rel=1e-12)
    assert out["total"] == pytest.approx(sum(out["per_truck"]), rel=1e-15)


def test_improvement_formula():
    assert report.improvement(48.80, 40.28) == pytest.approx(17.46, abs=0.005)
    assert report.improvement(45.88, 40.28) == pytest.approx(12.21, abs=0.005)
    assert report.improvement(10.0, 10.0) == 0.0


def test_string_stability_verdicts():
    assert report.string_stable([2.29, 0.75, 0.56])
    assert not report.string_stable([1.0, 1.5, 0.2])
    assert report.string_stable([1.0, 1.0 + 5e-7, 0.2])


def test_equilibrium_stability_report():
    st = report.stability_report(_log(n=60, tail=100))
    assert st.norms == [0.0, 0.0, 0.0]
    assert st.string_stable and st.all_asymptotic
    assert st.settle_times == [0.0, 0.0, 0.0]


def test_settle_time_measured_from_tail_start():
    dd = np.zeros((160, 4))
    dd[60:72, 2] = 0.5  # follower 2 still off for the first 12 s of the tail
    st = report.stability_report(_log(n=60, tail=100, dd=dd))
    assert st.settle_times == [0.0, 12.0, 0.0]
    assert st.all_asymptotic
    dd[60:95, 3] = 0.5
    st = report.stability_report(_log(n=60, tail=100, dd=dd))
    assert st.settle_times[2] == 35.0 and not st.all_asymptotic


def test_average_gap_over_cycle_rows():
    log = _log(n=10, tail=5, gap=5.0)
    log.gap[:, 0] = 25.0
    log.gap[10:] = 1000.0  # tail rows are ignored
    assert report.average_gap(log) == pytest.approx(10.0)
    assert report.average_gap(log, include_leader=False) == pytest.approx(5.0)


def _quick(strategy, **kw):
    return ScenarioConfig(strategy=strategy, cycle="sawtooth", tail_seconds=30, **kw)


def test_same_strategy_twice_gives_zero_deltas():
    rep, logs = report.compare_strategies([_quick("dmpc"), _quick("dmpc")])
    assert rep.names == ["dmpc", "dmpc#2"]
    assert rep.improvements()[("dmpc", "dmpc#2")] == [0.0] * 5


def test_compare_tables_and_text():
    rep, _ = report.compare_strategies([_quick(s) for s in ("eco-dmpc", "dmpc", "idm")])
    assert rep.complete
    tabs = rep.tables()
    rows = list(csv.reader(io.StringIO(tabs["improvement"])))
    assert [r[0] for r in rows[1:]] == ["Leader", "FT1", "FT2", "FT3", "Total"]
    fuel = list(csv.reader(io.StringIO(tabs["fuel"])))
    assert fuel[0] == ["strategy", "Leader", "FT1", "FT2", "FT3", "Total"]
    text = rep.render_text()
    assert "Trip fuel consumption (L)" in text and "Platoon average gap distance (m)" in text
    assert text == rep.render_text()


def test_parallel_compare_matches_serial():
    cfgs = [_quick(s) for s in ("eco-dmpc", "idm")]
    a, _ = report.compare_strategies(cfgs, jobs=1)
    b, _ = report.compare_strategies(cfgs, jobs=2)
    assert a.render_text() == b.render_text()


def test_sweep_single_and_repeated_points():
    cfg = _quick("eco-dmpc")
    (g, total), = report.sweep_desired_gap(cfg, [5.0])
    assert total == report.fuel_report(run_scenario(cfg.with_(desired_gap=5.0)))["total"]
    curve = report.sweep_desired_gap(cfg, [8.0, 8.0])
    assert curve[0][1] == curve[1][1]
    with pytest.raises(ValueError):
        report.sweep_desired_gap(cfg, [0.0])


def test_trip_csv_and_summary(tmp_path):
    log = run_scenario(ScenarioConfig(strategy="idm", cycle=cycles.constant(10.0, 5), tail_seconds=0))
    rows = list(csv.reader(io.StringIO(report.trip_csv(log))))
    assert rows[0] == list(report.TRIP_COLUMNS)
    assert len(rows) == 1 + 4 * log.n_steps
    summary = report.trip_summary(log)
    assert set(summary["diagnostics"]) <= {"softening_count", "softening_events"}
    report.write_json(tmp_path / "s.json", summary)
    assert json.loads((tmp_path / "s.json").read_text())["strategy"] == "idm"


def test_sweep_csv_columns():
    assert report.sweep_csv([(5.0, 43.1), (10.0, 43.3)]).splitlines()[0] == "gap_m,total_fuel_L"
