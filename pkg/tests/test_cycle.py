import numpy as np
import pytest

from ecoplatoon import cycle as cycles
from ecoplatoon.cycle import CycleParseError, DriveCycle, load_cycle, preview, resample, write_cycle


def _write(tmp_path, text, name="c.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_two_line_file(tmp_path):
    c = load_cycle(_write(tmp_path, "0,0\n1,10\n"))
    assert len(c) == 2
    np.testing.assert_array_equal(c.speed, [0, 10])


def test_mph_flag_and_header(tmp_path):
    p = _write(tmp_path, "0,0\n1,10\n")
    np.testing.assert_allclose(load_cycle(p, units="mph").speed, [0, 4.4704], rtol=1e-15)
    q = _write(tmp_path, "# units=mph\ntime,speed\n0,0\n1,10\n", "tagged.csv")
    c = load_cycle(q)
    np.testing.assert_allclose(c.speed, [0, 4.4704], rtol=1e-15)
    assert c.source_units == "mph"


@pytest.mark.parametrize(
    "text, line",
    [("0,0\n1,5\n1,6\n", 3), ("0,0\n1,-2\n", 2), ("0,0\n1,abc\n", 2), ("0,0,1\n", 1)],
)
def test_parse_errors_name_the_line(tmp_path, text, line):
    with pytest.raises(CycleParseError) as err:
        load_cycle(_write(tmp_path, text))
    assert err.value.line == line
    assert f":{line}:" in str(err.value)


def test_empty_file(tmp_path):
    with pytest.raises(CycleParseError):
        load_cycle(_write(tmp_path, "# units=mph\n"))


def test_missing_file_mentions_path(tmp_path):
    p = tmp_path / "nope.csv"
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_cycle(p)


def test_resample_identity_and_interpolation():
    c = DriveCycle([0, 1, 2], [0, 5, 7])
    assert resample(c, 1.0) is c
    r = resample(DriveCycle([0, 2], [0, 2]), 1.0)
    np.testing.assert_array_equal(r.time, [0, 1, 2])
    np.testing.assert_array_equal(r.speed, [0, 1, 2])


def test_preview_indexing():
    c = DriveCycle(np.arange(20.0), np.arange(20.0))
    np.testing.assert_array_equal(preview(c, 0, 10), np.arange(1, 11))
    np.testing.assert_array_equal(preview(c, 19, 10), np.full(10, 19.0))
    np.testing.assert_array_equal(preview(cycles.constant(7.0), 3, 5), np.full(5, 7.0))
    np.testing.assert_array_equal(cycles.hold_window(c, 3, 4), [3, 4, 5, 6])


def test_preview_overlap():
    c = cycles.us06()
    for k in (0, 100, 333, 580):
        np.testing.assert_array_equal(preview(c, k, 10)[1:], preview(c, k + 1, 10)[:-1])


def test_accel_preview_forward_difference():
    c = DriveCycle([0, 1, 2, 3], [0, 2, 3, 3])
    np.testing.assert_array_equal(cycles.accel_preview(c, 0, 5, 1.0), [2, 1, 0, 0, 0])


def test_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(3)
    c = DriveCycle(np.cumsum(rng.uniform(0.1, 2.0, 50)), rng.uniform(0, 40, 50))
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    write_cycle(c, a)
    c2 = load_cycle(a)
    np.testing.assert_array_equal(c2.time, c.time)
    np.testing.assert_array_equal(c2.speed, c.speed)
    write_cycle(c2, b)
    assert a.read_bytes() == b.read_bytes()


def test_us06_schedule():
    c = cycles.us06()
    assert c.duration == pytest.approx(600.0)
    assert c.sample_time == 1.0
    assert c.speed.max() == pytest.approx(35.9, abs=0.05)
    assert c.speed.max() / 0.44704 == pytest.approx(80.3, abs=0.05)
    assert c.speed[0] == 0 and c.speed[-1] == 0


def test_sawtooth_is_stop_and_go():
    c = cycles.sawtooth()
    assert c.duration == 60.0
    assert c.speed.max() == pytest.approx(15.0)
    assert np.count_nonzero(c.speed == 0) == 4


def test_cycle_is_immutable():
    c = DriveCycle([0, 1], [0, 1])
    with pytest.raises(ValueError):
        c.speed[0] = 3.0


def test_resolve_builtin_and_path(tmp_path):
    assert cycles.resolve("us06").name == "us06"
    p = _write(tmp_path, "0,0\n1,10\n")
    assert cycles.resolve(str(p), "km/h").speed[1] == pytest.approx(10 / 3.6)
