"""Scenario configuration files (YAML or JSON) with strict key checking.

Example::

    strategy: eco-dmpc
    cycle: us06
    desired_gap: 5.0
    tail_seconds: 100
    truck: {actuation_lag: 0.5}
    fuel: {lambda0: 1.75}
    limits: {d_max: 45.0}
    strategies: [eco-dmpc, dmpc, idm]   # compare only
    gaps: [5, 10, 15, 20]               # sweep only
"""
from dataclasses import fields, replace
from pathlib import Path

import yaml

from .baselines import IdmParams
from .dynamics import TruckParams
from .fuel import DragCalibration, FuelCoefficients
from .horizon import Limits
from .sim import STRATEGIES, ScenarioConfig

SECTIONS = {"truck": TruckParams, "fuel": FuelCoefficients, "drag": DragCalibration, "limits": Limits, "idm": IdmParams}
CLI_KEYS = {"strategies", "gaps"}
_SCALARS = {f.name for f in fields(ScenarioConfig)} - set(SECTIONS)


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def read_mapping(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", key=str(path)) from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse {path}: {err}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _section(cls, current, values, name):
    if values is None and name == "idm":
        return None
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be a mapping", key=name)
    allowed = {f.name for f in fields(cls)}
    for key in values:
        if key not in allowed:
            raise ConfigError(f"unknown key {name}.{key}", key=f"{name}.{key}")
    if name == "drag" and "followers" in values:
        values = dict(values, followers=tuple(tuple(float(g) for g in t) for t in values["followers"]))
    base = current if current is not None else cls()
    try:
        return replace(base, **values)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid value in section {name!r}: {err}", key=name) from None


def scenario_from_mapping(data: dict, base: ScenarioConfig | None = None):
    """Build a ScenarioConfig; returns ``(config, extras)`` where extras holds CLI-only keys."""
    cfg = base or ScenarioConfig()
    scalar, sections, extras = {}, {}, {}
    for key, value in data.items():
        if key in SECTIONS:
            sections[key] = value
        elif key in _SCALARS:
            scalar[key] = value
        elif key in CLI_KEYS:
            extras[key] = value
        else:
            raise ConfigError(f"unknown key {key}", key=key)
    for name, values in sections.items():
        scalar[name] = _section(SECTIONS[name], getattr(cfg, name), values, name)
    if "strategy" in scalar and scalar["strategy"] not in STRATEGIES:
        raise ConfigError(f"unknown strategy {scalar['strategy']!r}", key="strategy")
    if "strategies" in extras:
        bad = [s for s in extras["strategies"] if s not in STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategy {bad[0]!r} in strategies", key="strategies")
    try:
        cfg = replace(cfg, **scalar)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid configuration: {err}") from None
    return cfg, extras


def load_scenario(path, base=None):
    return scenario_from_mapping(read_mapping(path), base)
