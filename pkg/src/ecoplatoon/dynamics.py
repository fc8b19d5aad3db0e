"""Longitudinal truck dynamics after feedback linearization.

Two third-order models share the same actuator lag ``da/dt = (u - a) / tau``:

* the leader's absolute model, state ``[gap to HDV, speed, accel]`` driven by
  the HDV speed,
* a follower's error model, state ``[spacing error, speed error, accel]``
  driven by the predecessor's acceleration.

Both are discretized exactly with a zero-order hold.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class TruckParams:
    """Physical constants of one truck (the platoon is homogeneous).

    Defaults are the heavy-duty values used throughout the package; the
    actuation lag and mechanical drag are not published with the fuel model
    calibration and are configurable.
    """

    mass: float = 29400.0  # kg
    actuation_lag: float = 0.5  # s
    frontal_area: float = 10.7  # m^2
    air_density: float = 1.2256  # kg/m^3
    mechanical_drag: float = 0.0  # N
    nominal_drag: float = 0.570
    driveline_eff: float = 0.94
    grade: float = 0.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.actuation_lag > 0:
            raise ValueError(f"actuation_lag must be positive, got {self.actuation_lag}")
        if not 0 < self.driveline_eff <= 1:
            raise ValueError(f"driveline_eff must be in (0, 1], got {self.driveline_eff}")
        if not self.nominal_drag > 0:
            raise ValueError(f"nominal_drag must be positive, got {self.nominal_drag}")
        if not self.frontal_area > 0:
            raise ValueError(f"frontal_area must be positive, got {self.frontal_area}")


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """``x' = A x + B u + D w`` (continuous) or ``x+ = A x + B u + D w`` (discrete).

    ``Ts`` is None for a continuous-time system.
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    Ts: float | None = None

    def __post_init__(self):
        for name, shape in (("A", (3, 3)), ("B", (3,)), ("D", (3,))):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.Ts is not None and not self.Ts > 0:
            raise ValueError(f"sample time must be positive, got {self.Ts}")

    @property
    def is_discrete(self) -> bool:
        return self.Ts is not None


def leader_continuous_system(params: TruckParams) -> LinearSystem:
    """Leader model: gap to the HDV shrinks with own speed, grows with HDV speed."""
    r = 1.0 / params.actuation_lag
    A = [[0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -r]]
    return LinearSystem(A, [0.0, 0.0, r], [1.0, 0.0, 0.0])


def follower_continuous_system(params: TruckParams) -> LinearSystem:
    """Follower error model; the predecessor's acceleration feeds the speed error."""
    r = 1.0 / params.actuation_lag
    A = [[0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [0.0, 0.0, -r]]
    return LinearSystem(A, [0.0, 0.0, r], [0.0, 1.0, 0.0])


def discretize_zoh(sys: LinearSystem, Ts: float) -> LinearSystem:
    """Exact zero-order-hold discretization of a continuous system.

    Uses the block-matrix exponential ``expm([[A, B, D], [0, 0, 0]] * Ts)``, whose
    top-right blocks are ``int_0^Ts exp(A s) ds @ [B, D]``.
    """
    if sys.is_discrete:
        raise ValueError("system is already discrete")
    if not Ts > 0:
        raise ValueError(f"sample time must be positive, got {Ts}")
    M = np.zeros((5, 5))
    M[:3, :3] = sys.A
    M[:3, 3] = sys.B
    M[:3, 4] = sys.D
    E = expm(M * Ts)
    return LinearSystem(E[:3, :3], E[:3, 3], E[:3, 4], Ts=float(Ts))


@lru_cache(maxsize=64)
def discrete_models(params: TruckParams, Ts: float) -> tuple[LinearSystem, LinearSystem]:
    """Cached ``(leader, follower)`` discrete models for one parameter set."""
    return (
        discretize_zoh(leader_continuous_system(params), Ts),
        discretize_zoh(follower_continuous_system(params), Ts),
    )


def step_leader(sys_d: LinearSystem, x, u0: float, v_hdv: float) -> np.ndarray:
    """Advance the leader state ``[d0, v0, a0]`` by one sample."""
    if not sys_d.is_discrete:
        raise ValueError("step_leader needs a discrete system")
    return sys_d.A @ np.asarray(x, dtype=float) + sys_d.B * u0 + sys_d.D * v_hdv


def step_follower(sys_d: LinearSystem, x, u: float, a_prev: float) -> np.ndarray:
    """Advance a follower error state ``[dd, dv, a]`` by one sample."""
    if not sys_d.is_discrete:
        raise ValueError("step_follower needs a discrete system")
    return sys_d.A @ np.asarray(x, dtype=float) + sys_d.B * u + sys_d.D * a_prev


def engine_input(params: TruckParams, v, a, u, Cd):
    """Engine force (N) that realizes control ``u`` through the linearizing law.

    Diagnostic only; the closed loop is simulated in terms of ``u``.
    """
    k_aero = params.air_density * params.frontal_area * Cd
    return (
        u * params.mass
        + 0.5 * k_aero * v**2
        + params.mechanical_drag
        + params.actuation_lag * k_aero * v * a
    )
