"""Comparison strategies: a pure formation-control platoon and a human-driven one.

In the DMPC baseline the leader treats the HDV as its predecessor and runs
the same tracking QP as the followers. The human-driven platoon uses the
Intelligent Driver Model with heavy-truck parameters.
"""
from dataclasses import dataclass

import numpy as np

from .dmpc import FollowerInfeasible, SpacingBounds, build_follower_qp, solve_follower_mpc


class CollisionError(RuntimeError):
    def __init__(self, message, truck=None, step=None):
        super().__init__(message)
        self.truck = truck
        self.step = step


@dataclass(frozen=True)
class IdmParams:
    max_accel: float = 1.14  # m/s^2
    max_decel: float = 2.29  # m/s^2
    delta: float = 4.0
    cruise_speed: float = 35.9  # m/s, set to the HDV's top speed per trip
    time_headway: float = 2.0  # s
    jam_distance: float = 13.6  # m

    def __post_init__(self):
        for name in ("max_accel", "max_decel", "time_headway", "jam_distance", "cruise_speed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.delta < 1:
            raise ValueError(f"delta must be >= 1, got {self.delta}")

    def desired_gap(self, v, dv):
        s_star = self.jam_distance + self.time_headway * v + v * dv / (2 * np.sqrt(self.max_accel * self.max_decel))
        return np.maximum(s_star, self.jam_distance)


def idm_acceleration(p: IdmParams, v, dv, s):
    """IDM acceleration; ``dv = v - v_ahead`` is the closing speed."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise CollisionError(f"nonpositive gap {np.min(s):.3f} m")
    return p.max_accel * (1.0 - (np.asarray(v) / p.cruise_speed) ** p.delta - (p.desired_gap(v, dv) / s) ** 2)


def idm_platoon_step(gaps, speeds, v_hdv, p: IdmParams, Ts, v_hdv_next=None):
    """One semi-implicit Euler step of the human-driven platoon.

    ``gaps[i]`` is truck i's distance to the vehicle ahead (truck 0 follows the
    HDV). Speeds update first and are floored at zero; gaps then integrate the
    new speed differences. Returns ``(gaps, speeds, accels)``, the accelerations
    being those applied over the step.
    """
    gaps = np.asarray(gaps, dtype=float)
    speeds = np.asarray(speeds, dtype=float)
    ahead = np.concatenate([[v_hdv], speeds[:-1]])
    acc = idm_acceleration(p, speeds, speeds - ahead, gaps)
    new_speeds = np.maximum(speeds + Ts * acc, 0.0)
    v_lead_next = v_hdv if v_hdv_next is None else v_hdv_next
    new_ahead = np.concatenate([[v_lead_next], new_speeds[:-1]])
    new_gaps = gaps + Ts * (new_ahead - new_speeds)
    if np.any(new_gaps <= 0):
        i = int(np.argmin(new_gaps))
        raise CollisionError(f"truck {i} collided (gap {new_gaps[i]:.3f} m)", truck=i)
    return new_gaps, new_speeds, acc


def dmpc_leader_baseline_step(sys_d, x0, hdv_accel_pred, weights, limits, Tp, d_m=3.0, soften=True):
    """Leader that regulates ``[gap - d_s, v_hdv - v0, a0]`` to zero like a follower.

    Returns ``(u0, HorizonSolution)``.
    """
    bounds = SpacingBounds(-d_m, d_m)
    qp = build_follower_qp(x0, hdv_accel_pred, weights, bounds, limits, Tp, sys_d)
    try:
        sol = solve_follower_mpc(qp, soften=False)
    except FollowerInfeasible as err:
        if not soften:
            raise FollowerInfeasible(f"DMPC leader infeasible: {', '.join(err.violated)}", err.violated, 0) from None
        sol = solve_follower_mpc(qp, soften=True)
    return float(sol.u_seq[0]), sol
