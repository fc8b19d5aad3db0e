"""Power-based heavy-duty fuel model and gap-dependent drag coefficient.

Public functions take SI speeds (m/s). The resistance/power relation is
calibrated in km/h, so speeds are converted internally; power comes out in kW
and fuel rate in L/s.
"""
from dataclasses import dataclass, field

import numpy as np

from .dynamics import TruckParams

KMH_PER_MPS = 3.6
GRAVITY = 9.8066


@dataclass(frozen=True)
class FuelCoefficients:
    psi0: float = 1.56e-3  # L/s
    psi1: float = 8.10e-5  # L/(s kW)
    psi2: float = 1.00e-8  # L/(s kW^2)
    lambda0: float = 1.75
    lambda1: float = 0.0328
    lambda2: float = 4.575
    height_corr: float = 0.977
    air_density: float = 1.2256

    def __post_init__(self):
        if not self.psi0 > 0:
            raise ValueError(f"psi0 must be positive, got {self.psi0}")
        if self.psi1 < 0 or self.psi2 < 0:
            raise ValueError("psi1 and psi2 must be nonnegative")


@dataclass(frozen=True)
class DragCalibration:
    """Per-position drag calibration ``Cd = Cn * (g1 * d**g2 + g3)``.

    ``followers[j]`` holds ``(g1, g2, g3)`` for follower ``j + 1``; the leader
    always sees the nominal coefficient.
    """

    nominal: float = 0.570
    followers: tuple = field(
        default=(
            (0.1522, 0.2111, 0.5260),
            (0.0726, 0.2842, 0.5794),
            (0.0726, 0.2842, 0.5794),
        )
    )
    clamp_to_nominal: bool = True

    def __post_init__(self):
        if not self.nominal > 0:
            raise ValueError(f"nominal drag must be positive, got {self.nominal}")
        for g1, g2, g3 in self.followers:
            if not (g1 > 0 and g3 > 0):
                raise ValueError("gamma1 and gamma3 must be positive")


def drag_coefficient(position: int, gap, calib: DragCalibration):
    """Drag coefficient of the truck at ``position`` (0 is the leader)."""
    if position == 0:
        return calib.nominal if np.ndim(gap) == 0 else np.full(np.shape(gap), calib.nominal)
    gap = np.asarray(gap, dtype=float)
    if np.any(gap <= 0):
        raise ValueError(f"follower {position} needs a positive gap, got {gap.min()}")
    g1, g2, g3 = calib.followers[position - 1]
    cd = calib.nominal * (g1 * gap**g2 + g3)
    if calib.clamp_to_nominal:
        cd = np.minimum(cd, calib.nominal)
    return float(cd) if cd.ndim == 0 else cd


def resistance_force(params: TruckParams, coefs: FuelCoefficients, v, Cd):
    """Aerodynamic + rolling + grade resistance in N."""
    v_kmh = KMH_PER_MPS * np.asarray(v, dtype=float)
    aero = coefs.air_density / 25.92 * Cd * coefs.height_corr * params.frontal_area * v_kmh**2
    rolling = GRAVITY * params.mass * coefs.lambda0 / 1000 * (coefs.lambda1 * v_kmh + coefs.lambda2)
    return aero + rolling + GRAVITY * params.mass * params.grade


def power(params: TruckParams, coefs: FuelCoefficients, v, a, R):
    """Tractive power in kW; 1.04 accounts for rotating inertia."""
    v_kmh = KMH_PER_MPS * np.asarray(v, dtype=float)
    return (R + 1.04 * params.mass * np.asarray(a, dtype=float)) / (3600 * params.driveline_eff) * v_kmh


def instantaneous_fuel(P, coefs: FuelCoefficients):
    """Fuel rate in L/s; idle rate ``psi0`` whenever power is negative."""
    Pp = np.maximum(P, 0.0)
    return coefs.psi0 + coefs.psi1 * Pp + coefs.psi2 * Pp**2


def fuel_rate(params: TruckParams, coefs: FuelCoefficients, v, a, Cd):
    """Convenience chain speed/accel -> resistance -> power -> fuel rate."""
    R = resistance_force(params, coefs, v, Cd)
    P = power(params, coefs, v, a, R)
    return P, instantaneous_fuel(P, coefs)


def trip_fuel(fuel_series, Ts: float) -> float:
    """Rectangle-rule integral of a uniformly sampled fuel rate, in L."""
    series = np.asarray(fuel_series, dtype=float)
    if series.size == 0:
        return 0.0
    return float(np.sum(series) * Ts)
