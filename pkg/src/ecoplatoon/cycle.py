"""Drive cycles: the speed trace of the human-driven vehicle ahead of the platoon.

File format: UTF-8 CSV, one ``time,speed`` sample per line, optional
``time,speed`` header, ``#`` comment lines. A comment ``# units=mph`` (or
``km/h``, ``m/s``) declares the speed unit; an explicit ``units`` argument
wins over the annotation.
"""
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

UNIT_TO_MPS = {"m/s": 1.0, "mph": 0.44704, "km/h": 1.0 / 3.6}
_UNITS_RE = re.compile(r"#\s*units\s*=\s*(\S+)")


class CycleParseError(ValueError):
    def __init__(self, message, line=None, path=None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.line = line
        self.path = path


@dataclass(frozen=True, eq=False)
class DriveCycle:
    time: np.ndarray  # s
    speed: np.ndarray  # m/s
    name: str = "cycle"
    source_units: str = "m/s"

    def __post_init__(self):
        t = np.array(self.time, dtype=float)
        v = np.array(self.speed, dtype=float)
        if t.shape != v.shape or t.ndim != 1 or t.size == 0:
            raise ValueError("time and speed must be equal-length, nonempty 1-D arrays")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("speeds must be nonnegative")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "speed", v)

    def __len__(self):
        return self.time.size

    @property
    def duration(self) -> float:
        return float(self.time[-1] - self.time[0])

    @property
    def sample_time(self) -> float | None:
        """Uniform sample spacing, or None for irregular cycles."""
        if len(self) < 2:
            return None
        dt = np.diff(self.time)
        return float(dt[0]) if np.allclose(dt, dt[0], rtol=0, atol=1e-9) else None

    def speed_at(self, k: int) -> float:
        """Speed at sample ``k``, holding the last sample beyond the end."""
        return float(self.speed[min(k, len(self) - 1)])


def _parse_units(units):
    u = units.strip().lower().replace("mps", "m/s").replace("kph", "km/h").replace("kmh", "km/h")
    if u not in UNIT_TO_MPS:
        raise ValueError(f"unknown speed unit {units!r}; expected one of {sorted(UNIT_TO_MPS)}")
    return u


def load_cycle(path, units=None, name=None) -> DriveCycle:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"drive cycle file not found: {path}") from None
    declared = None
    times, speeds = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _UNITS_RE.match(line)
            if m:
                declared = m.group(1)
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise CycleParseError(f"expected 2 comma-separated fields, got {len(parts)}", lineno, path)
        try:
            t, v = float(parts[0]), float(parts[1])
        except ValueError:
            if not times and parts[0].lower().startswith("time"):
                continue
            raise CycleParseError(f"non-numeric sample {line!r}", lineno, path) from None
        if not (np.isfinite(t) and np.isfinite(v)):
            raise CycleParseError("non-finite sample", lineno, path)
        if v < 0:
            raise CycleParseError(f"negative speed {v}", lineno, path)
        if times and t <= times[-1]:
            raise CycleParseError(f"time {t} does not increase (previous {times[-1]})", lineno, path)
        times.append(t)
        speeds.append(v)
    if not times:
        raise CycleParseError("no samples", None, path)
    unit = _parse_units(units or declared or "m/s")
    return DriveCycle(
        np.array(times), np.array(speeds) * UNIT_TO_MPS[unit],
        name=name or path.stem, source_units=unit,
    )


def write_cycle(cycle: DriveCycle, path) -> None:
    """Canonical m/s file; loading it back gives identical arrays."""
    lines = ["# units=m/s", "time,speed"]
    lines += [f"{t!r},{v!r}" for t, v in zip(cycle.time.tolist(), cycle.speed.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def resample(cycle: DriveCycle, Ts: float) -> DriveCycle:
    """Linear interpolation onto ``t0, t0 + Ts, ...`` up to the last sample."""
    if not Ts > 0:
        raise ValueError(f"sample time must be positive, got {Ts}")
    if cycle.sample_time is not None and abs(cycle.sample_time - Ts) <= 1e-12:
        return cycle
    t0, t1 = cycle.time[0], cycle.time[-1]
    n = int(np.floor((t1 - t0) / Ts + 1e-9)) + 1
    grid = t0 + Ts * np.arange(n)
    if abs(grid[-1] - t1) <= 1e-9 * max(1.0, abs(t1)):
        grid[-1] = t1
    speed = np.interp(grid, cycle.time, cycle.speed)
    return DriveCycle(grid, speed, name=cycle.name, source_units=cycle.source_units)


def preview(cycle: DriveCycle, k: int, Tp: int) -> np.ndarray:
    """Speeds at samples ``k+1 .. k+Tp``, holding the final speed past the end."""
    idx = np.minimum(np.arange(k + 1, k + Tp + 1), len(cycle) - 1)
    return cycle.speed[idx].copy()


def hold_window(cycle: DriveCycle, k: int, Tp: int) -> np.ndarray:
    """Speeds at samples ``k .. k+Tp-1`` (the zero-order-hold values over the horizon)."""
    idx = np.minimum(np.arange(k, k + Tp), len(cycle) - 1)
    return cycle.speed[idx].copy()


def accel_preview(cycle: DriveCycle, k: int, Tp: int, Ts: float) -> np.ndarray:
    """Forward-difference accelerations over intervals ``k .. k+Tp-1``; zero past the end."""
    idx = np.arange(k, k + Tp + 1)
    v = cycle.speed[np.minimum(idx, len(cycle) - 1)]
    return np.diff(v) / Ts


def us06() -> DriveCycle:
    """The EPA US06 schedule bundled with the package (1 Hz, 600 s)."""
    ref = resources.files("ecoplatoon") / "data" / "us06.csv"
    with resources.as_file(ref) as p:
        return load_cycle(p, name="us06")


def sawtooth(duration=60.0, Ts=1.0, peak=15.0, period=20.0) -> DriveCycle:
    """Synthetic stop-and-go cycle: ramps 0 -> peak -> 0 every ``period`` seconds."""
    t = np.arange(0.0, duration + 0.5 * Ts, Ts)
    phase = (t % period) / period
    v = peak * (1.0 - np.abs(2.0 * phase - 1.0))
    return DriveCycle(t, v, name="sawtooth", source_units="m/s")


def constant(speed, duration=60.0, Ts=1.0) -> DriveCycle:
    t = np.arange(0.0, duration + 0.5 * Ts, Ts)
    return DriveCycle(t, np.full(t.size, float(speed)), name=f"constant{speed:g}", source_units="m/s")


BUILTIN = {"us06": us06, "sawtooth": sawtooth}


def resolve(ref, units=None) -> DriveCycle:
    """A built-in cycle name or a CSV path."""
    if isinstance(ref, DriveCycle):
        return ref
    if str(ref) in BUILTIN and not Path(str(ref)).exists():
        return BUILTIN[str(ref)]()
    return load_cycle(ref, units=units)
