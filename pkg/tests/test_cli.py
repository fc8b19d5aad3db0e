import json

import pytest

from ecoplatoon.cli import main
from ecoplatoon.config import ConfigError, load_scenario, scenario_from_mapping
from ecoplatoon.sim import ScenarioConfig


def test_config_overrides_sections(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("strategy: dmpc\ndesired_gap: 8\ntruck: {actuation_lag: 0.3}\nfuel: {lambda0: 1.5}\ngaps: [5, 6]\n")
    cfg, extras = load_scenario(p)
    assert cfg.strategy == "dmpc" and cfg.desired_gap == 8
    assert cfg.truck.actuation_lag == 0.3 and cfg.truck.mass == 29400
    assert cfg.fuel.lambda0 == 1.5
    assert extras == {"gaps": [5, 6]}


def test_json_config(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"strategy": "idm", "limits": {"d_max": 50}}))
    cfg, _ = load_scenario(p)
    assert cfg.limits.d_max == 50


@pytest.mark.parametrize(
    "data, key",
    [({"bogus": 1}, "bogus"), ({"truck": {"massx": 1}}, "truck.massx"), ({"strategy": "x"}, "strategy")],
)
def test_config_errors_name_key(data, key):
    with pytest.raises(ConfigError) as err:
        scenario_from_mapping(data)
    assert err.value.key == key
    assert key in str(err.value)


def test_defaults_are_table_values():
    cfg = ScenarioConfig()
    assert (cfg.Tp, cfg.Ts, cfg.desired_gap, cfg.d_m, cfg.W) == (10, 1.0, 5.0, 3.0, 2.0)
    assert (cfg.limits.d_min, cfg.limits.d_max, cfg.limits.v_max, cfg.limits.a_max, cfg.limits.u_max) == (5, 45, 36, 3, 4)


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["run", "--strategy", "idm", "--cycle", "sawtooth", "--tail-seconds", "10", "--out", str(out)])
    assert rc == 0
    assert (out / "trip_idm.csv").exists() and (out / "trip_idm.png").exists()
    summary = json.loads((out / "summary_idm.json").read_text())
    assert "leader_sqp" not in summary["diagnostics"]
    assert summary["completed"]


def test_run_mph_cycle_file(tmp_path):
    cyc = tmp_path / "c.csv"
    cyc.write_text("\n".join(f"{t},{min(t, 20)}" for t in range(31)) + "\n")
    rc = main(["run", "--strategy", "eco-dmpc", "--cycle", str(cyc), "--units", "mph",
               "--tail-seconds", "5", "--no-plots", "--out", str(tmp_path / "o")])
    assert rc == 0
    summary = json.loads((tmp_path / "o" / "summary_eco-dmpc.json").read_text())
    assert summary["diagnostics"]["leader_sqp"]["solves"] == 35


def test_missing_cycle_exit_2(tmp_path, capsys):
    missing = tmp_path / "nowhere.csv"
    assert main(["run", "--cycle", str(missing), "--out", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_unknown_key_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("limits: {v_top: 3}\n")
    assert main(["compare", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "limits.v_top" in capsys.readouterr().err


def test_sweep_empty_gap_list_exit_2(tmp_path):
    assert main(["sweep", "--gap", ",", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--gap", "5,abc", "--out", str(tmp_path)]) == 2


def test_sweep_csv(tmp_path, capsys):
    rc = main(["sweep", "--cycle", "sawtooth", "--gap", "5,10", "--gap", "15", "--tail-seconds", "0",
               "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "gap_m,total_fuel_L"
    assert [line.split(",")[0] for line in lines[1:]] == ["5.000", "10.000", "15.000"]
    assert (tmp_path / "sweep.png").exists()


def test_compare_is_byte_deterministic(tmp_path):
    args = ["compare", "--cycle", "sawtooth", "--tail-seconds", "30", "--no-plots"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("report.txt", "fuel.csv", "improvement.csv", "gaps.csv", "stability.csv", "trip_eco-dmpc.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    a = json.loads((tmp_path / "a" / "summary.json").read_text())
    b = json.loads((tmp_path / "b" / "summary.json").read_text())
    a.pop("generated_at"), b.pop("generated_at")
    assert a == b


def test_compare_incomplete_exit_1(tmp_path, capsys):
    p = tmp_path / "hard.yaml"
    p.write_text("allow_softening: false\nlimits: {a_min: -1.0, a_max: 1.0}\n")
    cyc = tmp_path / "stop.csv"
    cyc.write_text("".join(f"{t},{30 if t < 20 else 0}\n" for t in range(41)))
    rc = main(["compare", "--config", str(p), "--cycle", str(cyc), "--strategy", "eco-dmpc",
               "--strategy", "idm", "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "INCOMPLETE" in (tmp_path / "o" / "report.txt").read_text()
    assert not json.loads((tmp_path / "o" / "summary.json").read_text())["complete"]


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3 and "FAIL" not in out
