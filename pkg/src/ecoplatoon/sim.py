"""Closed-loop trip simulation for the three platoon strategies.

Strategies:

``eco-dmpc``
    fuel-optimal NMPC leader, serial DMPC followers.
``dmpc``
    formation control everywhere: the leader tracks the HDV at the desired
    gap with the follower QP, followers as above.
``idm``
    human-driven platoon, every truck follows the Intelligent Driver Model.

A constant-speed tail is appended to the drive cycle so convergence of the
followers can be checked; fuel totals only cover the cycle itself.
"""
import logging
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace

import numpy as np

from . import cycle as cycles
from .baselines import CollisionError, IdmParams, dmpc_leader_baseline_step, idm_platoon_step
from .dmpc import FollowerInfeasible, FollowerWeights, SerialDMPC
from .dynamics import TruckParams, discrete_models, step_follower, step_leader
from .eco_nmpc import EcoLeader, LeaderInfeasible
from .fuel import DragCalibration, FuelCoefficients, drag_coefficient, fuel_rate
from .horizon import Limits

log = logging.getLogger(__name__)

STRATEGIES = ("eco-dmpc", "dmpc", "idm")
N_TRUCKS = 4


@dataclass
class ScenarioConfig:
    strategy: str = "eco-dmpc"
    cycle: object = "us06"  # built-in name, CSV path or DriveCycle
    units: str | None = None
    Ts: float = 1.0
    Tp: int = 10
    desired_gap: float = 5.0
    d_m: float = 3.0
    tail_seconds: float = 100.0
    leader_gap0: float = 25.0
    beta: tuple = (1.0, 1.0, 1.0)
    W: float = 2.0
    truck: TruckParams = field(default_factory=TruckParams)
    fuel: FuelCoefficients = field(default_factory=FuelCoefficients)
    drag: DragCalibration = field(default_factory=DragCalibration)
    limits: Limits = field(default_factory=Limits)
    idm: IdmParams | None = None  # None: cruise speed from the cycle's top speed
    follower_init: tuple = ((0.0, 0.0, 0.0),) * 3
    allow_softening: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        if int(self.Tp) != self.Tp or self.Tp < 1:
            raise ValueError("Tp must be a positive integer")
        self.Tp = int(self.Tp)
        if not self.desired_gap > 0:
            raise ValueError("desired_gap must be positive")
        if not self.d_m > 0:
            raise ValueError("d_m must be positive")
        if self.tail_seconds < 0:
            raise ValueError("tail_seconds must be nonnegative")
        self.beta = tuple(float(b) for b in self.beta)
        self.follower_init = tuple(tuple(float(v) for v in x) for x in self.follower_init)
        if len(self.follower_init) != N_TRUCKS - 1 or any(len(x) != 3 for x in self.follower_init):
            raise ValueError("follower_init needs three [dd, dv, a] triples")

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def echo(self) -> dict:
        """JSON-ready description of the configuration."""
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if is_dataclass(val) and not isinstance(val, type):
                val = asdict(val)
            elif isinstance(val, cycles.DriveCycle):
                val = val.name
            elif isinstance(val, tuple):
                val = [list(v) if isinstance(v, tuple) else v for v in val]
            out[f.name] = val
        return out


@dataclass
class TripLog:
    """Per-step, per-truck trajectories; truck 0 is the leader.

    ``gap`` is the distance to the vehicle ahead, ``dd = gap - desired_gap``
    and ``dv = v_ahead - v``. Rows ``< n_cycle`` cover the drive cycle, the
    remaining rows the constant-speed tail.
    """

    strategy: str
    Ts: float
    desired_gap: float
    n_cycle: int
    t: np.ndarray
    hdv_speed: np.ndarray
    v: np.ndarray
    a: np.ndarray
    u: np.ndarray
    gap: np.ndarray
    dd: np.ndarray
    dv: np.ndarray
    P: np.ndarray
    fuel: np.ndarray
    follower_cost: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    completed: bool = True
    error: str | None = None

    @property
    def n_steps(self) -> int:
        return self.t.size

    @property
    def tail_start(self) -> int:
        return self.n_cycle


class SimulationAborted(RuntimeError):
    def __init__(self, message, log):
        super().__init__(message)
        self.log = log


def _extended_cycle(cfg: ScenarioConfig):
    base = cycles.resample(cycles.resolve(cfg.cycle, cfg.units), cfg.Ts)
    n_tail = int(round(cfg.tail_seconds / cfg.Ts))
    t = np.concatenate([base.time, base.time[-1] + cfg.Ts * np.arange(1, n_tail + 1)])
    v = np.concatenate([base.speed, np.full(n_tail, base.speed[-1])])
    return base, cycles.DriveCycle(t, v, name=base.name, source_units=base.source_units), n_tail


class _Recorder:
    def __init__(self, n):
        shape = (n, N_TRUCKS)
        self.arrays = {k: np.zeros(shape) for k in ("v", "a", "u", "gap", "dd", "dv", "P", "fuel")}
        self.follower_cost = np.full((n, N_TRUCKS - 1), np.nan)
        self.rows = 0

    def put(self, k, **cols):
        for name, val in cols.items():
            self.arrays[name][k] = val
        self.rows = k + 1


def _fuel_columns(cfg, v, a, gap):
    P = np.zeros(N_TRUCKS)
    F = np.zeros(N_TRUCKS)
    for i in range(N_TRUCKS):
        cd = drag_coefficient(i, max(gap[i], 1e-6), cfg.drag)
        P[i], F[i] = fuel_rate(cfg.truck, cfg.fuel, max(v[i], 0.0), a[i], cd)
    return P, F


def run_scenario(cfg: ScenarioConfig) -> TripLog:
    """Simulate one trip. Raises SimulationAborted (carrying the partial log) on failure."""
    base, ext, n_tail = _extended_cycle(cfg)
    n_cycle = len(base) - 1
    n = n_cycle + n_tail
    rec = _Recorder(n)
    diag = {"softening_events": [], "leader_iterations": [], "leader_kkt": [], "leader_status": {}}
    runner = {"eco-dmpc": _run_eco, "dmpc": _run_dmpc, "idm": _run_idm}[cfg.strategy]
    error = None
    try:
        runner(cfg, ext, n, rec, diag)
    except (FollowerInfeasible, LeaderInfeasible, CollisionError) as err:
        error = f"{type(err).__name__} at step {rec.rows}: {err}"
        log.error(error)
    m = rec.rows if error else n
    triplog = TripLog(
        strategy=cfg.strategy, Ts=cfg.Ts, desired_gap=cfg.desired_gap, n_cycle=n_cycle,
        t=ext.time[:m].copy(), hdv_speed=ext.speed[:m].copy(),
        follower_cost=rec.follower_cost[:m],
        diagnostics=_summarize_diag(diag), config=cfg.echo(),
        completed=error is None, error=error,
        **{k: arr[:m] for k, arr in rec.arrays.items()},
    )
    if error:
        raise SimulationAborted(error, triplog)
    return triplog


def _summarize_diag(diag):
    out = {"softening_events": diag["softening_events"], "softening_count": len(diag["softening_events"])}
    if diag["leader_iterations"]:
        its = np.asarray(diag["leader_iterations"])
        out["leader_sqp"] = {
            "solves": int(its.size),
            "mean_iterations": float(its.mean()),
            "max_iterations": int(its.max()),
            "max_kkt_residual": float(np.max(diag["leader_kkt"])),
            "status_counts": dict(sorted(diag["leader_status"].items())),
        }
    if "spacing_guard" in diag:
        out["spacing_guard_activations"] = diag["spacing_guard"]
    return out


def _follower_rows(cfg, x_lead_v, x_lead_a, fstates):
    """Absolute speed/accel/gap columns for followers from their error states."""
    v = [x_lead_v]
    a = [x_lead_a]
    gap, dd, dv = [], [], []
    for x in fstates:
        v.append(v[-1] - x[1])
        a.append(x[2])
        gap.append(cfg.desired_gap + x[0])
        dd.append(x[0])
        dv.append(x[1])
    return v, a, gap, dd, dv


def _check_gaps(gap, k):
    gap = np.asarray(gap)
    if np.any(gap <= 0):
        i = int(np.argmin(gap))
        raise CollisionError(f"truck {i} collided (gap {gap[i]:.3f} m)", truck=i, step=k)


def _make_followers(cfg):
    _, fsys = discrete_models(cfg.truck, cfg.Ts)
    weights = FollowerWeights.for_system(fsys, cfg.beta, cfg.W)
    dmpc = SerialDMPC(fsys, weights, cfg.limits, cfg.Tp, cfg.d_m, N_TRUCKS - 1, cfg.allow_softening)
    return fsys, weights, dmpc


def _run_eco(cfg, ext, n, rec, diag):
    lsys, _ = discrete_models(cfg.truck, cfg.Ts)
    fsys, _, dmpc = _make_followers(cfg)
    leader = EcoLeader(lsys, cfg.truck, cfg.fuel, cfg.limits, cfg.Tp)
    x0 = np.array([cfg.leader_gap0, ext.speed[0], 0.0])
    fx = [np.array(x) for x in cfg.follower_init]
    try:
        for k in range(n):
            u0, sol0 = leader.step(x0, cycles.hold_window(ext, k, cfg.Tp), k)
            if sol0.softened and not cfg.allow_softening:
                raise LeaderInfeasible(f"leader state boxes infeasible at step {k}", state=x0)
            diag["leader_iterations"].append(sol0.iterations)
            diag["leader_kkt"].append(sol0.kkt_residual)
            diag["leader_status"][sol0.status] = diag["leader_status"].get(sol0.status, 0) + 1
            fsol = dmpc.step(sol0, fx, k)
            v, a, gap, dd, dv = _follower_rows(cfg, x0[1], x0[2], fx)
            gap = [x0[0]] + gap
            P, F = _fuel_columns(cfg, v, a, gap)
            rec.follower_cost[k] = [s.cost for _, s in fsol]
            rec.put(k, v=v, a=a, u=[u0] + [u for u, _ in fsol], gap=gap,
                    dd=[x0[0] - cfg.desired_gap] + dd, dv=[ext.speed[k] - x0[1]] + dv, P=P, fuel=F)
            _check_gaps(gap, k)
            a_prev = [x0[2]] + [x[2] for x in fx]
            x0 = step_leader(lsys, x0, u0, ext.speed[k])
            fx = [step_follower(fsys, x, u, ap) for x, (u, _), ap in zip(fx, fsol, a_prev)]
    finally:
        diag["softening_events"].extend(leader.softening_events + dmpc.softening_events)
        diag["spacing_guard"] = dmpc.guard_events


def _run_dmpc(cfg, ext, n, rec, diag):
    fsys, weights, dmpc = _make_followers(cfg)
    xl = np.zeros(3)  # [gap - d_s, v_hdv - v0, a0]
    xl[1] = 0.0
    fx = [np.array(x) for x in cfg.follower_init]
    soft_leader = []
    try:
        for k in range(n):
            a_hdv = cycles.accel_preview(ext, k, cfg.Tp, cfg.Ts)
            u0, sol0 = dmpc_leader_baseline_step(
                fsys, xl, a_hdv, weights, cfg.limits, cfg.Tp, cfg.d_m, soften=cfg.allow_softening)
            if sol0.softened:
                soft_leader.append({"k": k, "truck": 0, "max_widening": float(sol0.slack.max())})
            fsol = dmpc.step(sol0, fx, k)
            v_lead = ext.speed[k] - xl[1]
            v, a, gap, dd, dv = _follower_rows(cfg, v_lead, xl[2], fx)
            gap = [cfg.desired_gap + xl[0]] + gap
            P, F = _fuel_columns(cfg, v, a, gap)
            rec.follower_cost[k] = [s.cost for _, s in fsol]
            rec.put(k, v=v, a=a, u=[u0] + [u for u, _ in fsol], gap=gap,
                    dd=[xl[0]] + dd, dv=[xl[1]] + dv, P=P, fuel=F)
            _check_gaps(gap, k)
            a_prev = [xl[2]] + [x[2] for x in fx]
            xl = step_follower(fsys, xl, u0, a_hdv[0])
            fx = [step_follower(fsys, x, u, ap) for x, (u, _), ap in zip(fx, fsol, a_prev)]
    finally:
        diag["softening_events"].extend(soft_leader + dmpc.softening_events)
        diag["spacing_guard"] = dmpc.guard_events


def _run_idm(cfg, ext, n, rec, diag):
    p = cfg.idm or IdmParams(cruise_speed=float(ext.speed.max()))
    v0 = ext.speed[0]
    speeds = np.full(N_TRUCKS, v0)
    gaps = np.full(N_TRUCKS, float(p.desired_gap(v0, 0.0)))
    for k in range(n):
        v_next = ext.speed[min(k + 1, len(ext) - 1)]
        try:
            new_gaps, new_speeds, acc = idm_platoon_step(gaps, speeds, ext.speed[k], p, cfg.Ts, v_next)
        except CollisionError as err:
            err.step = k
            raise
        ahead = np.concatenate([[ext.speed[k]], speeds[:-1]])
        P, F = _fuel_columns(cfg, speeds, acc, gaps)
        rec.put(k, v=speeds, a=acc, u=acc, gap=gaps, dd=gaps - cfg.desired_gap,
                dv=ahead - speeds, P=P, fuel=F)
        gaps, speeds = new_gaps, new_speeds
