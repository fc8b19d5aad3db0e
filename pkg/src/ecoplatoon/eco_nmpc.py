"""Fuel-optimal receding-horizon controller for the platoon leader.

The leader minimizes the fuel it burns over the preview horizon while
keeping its gap to the human-driven vehicle ahead, its speed, acceleration
and input inside boxes. Predicted states are affine in the input sequence,
so all constraints are linear; only the fuel cost is nonlinear.

The fuel rate ``psi0 + psi1 P+ + psi2 P+^2`` (``P+ = max(P, 0)``) has a kink
at zero power. It is handled exactly with one epigraph variable per stage,
``s >= P(u)``, ``s >= 0``, cost ``psi1 s + psi2 s^2``, which is increasing in
``s`` so the bound is tight at the optimum. The resulting smooth NLP is solved
by SQP (SLSQP).
"""
import logging

import numpy as np
from scipy.optimize import linprog, minimize, nnls

from .dynamics import LinearSystem, TruckParams
from .fuel import GRAVITY, KMH_PER_MPS, FuelCoefficients, instantaneous_fuel
from .horizon import HorizonSolution, InfeasibleQP, Limits, prediction_matrices, simulate, solve_qp

log = logging.getLogger(__name__)

MAX_SQP_ITER = 50
SQP_TOL = 1e-6
SOFT_PENALTY = 1.0e4  # L per unit of state-box violation
_POWER_SCALE = 100.0  # kW per epigraph unit


class LeaderInfeasible(RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class LeaderOCP:
    """Eco-driving optimal control problem at one sampling instant.

    ``hdv_speeds[s]`` is the HDV speed held over interval ``k+s -> k+s+1``.
    """

    def __init__(self, sys_d: LinearSystem, x0, hdv_speeds, params: TruckParams,
                 coefs: FuelCoefficients, limits: Limits, Tp: int, drag=None):
        hdv_speeds = np.asarray(hdv_speeds, dtype=float)
        if hdv_speeds.shape != (Tp,):
            raise ValueError(f"HDV preview has {hdv_speeds.size} entries, expected {Tp}")
        self.sys_d = sys_d
        self.x0 = np.asarray(x0, dtype=float)
        self.hdv = hdv_speeds
        self.params = params
        self.coefs = coefs
        self.limits = limits
        self.Tp = Tp
        self.Cd = params.nominal_drag if drag is None else drag

        F, Gu, Gw = prediction_matrices(sys_d, Tp)
        free = F @ self.x0 + Gw @ hdv_speeds  # (Tp, 3)
        self.c_d, self.c_v, self.c_a = free[:, 0], free[:, 1], free[:, 2]
        self.J_d, self.J_v, self.J_a = Gu[:, 0, :], Gu[:, 1, :], Gu[:, 2, :]

        # P(v, a) = k * (alpha v^2 + beta v + gamma + 1.04 m a) * v, v in m/s
        m = params.mass
        self._k = KMH_PER_MPS / (3600.0 * params.driveline_eff)
        self._alpha = coefs.air_density / 25.92 * self.Cd * coefs.height_corr * params.frontal_area * KMH_PER_MPS**2
        self._beta = GRAVITY * m * coefs.lambda0 / 1000 * coefs.lambda1 * KMH_PER_MPS
        self._gamma = GRAVITY * m * coefs.lambda0 / 1000 * coefs.lambda2 + GRAVITY * m * params.grade
        self._inertia = 1.04 * m

        lim = limits
        J = np.vstack([self.J_d, self.J_v, self.J_a])
        c = np.concatenate([self.c_d, self.c_v, self.c_a])
        lo = np.repeat([lim.d_min, lim.v_min, lim.a_min], Tp)
        hi = np.repeat([lim.d_max, lim.v_max, lim.a_max], Tp)
        # state rows as G u <= h
        self.G_state = np.vstack([J, -J])
        self.h_state = np.concatenate([hi - c, c - lo])
        self.state_lo = lo
        self.state_hi = hi
        self._J_state = J
        self._c_state = c

    @property
    def n_inputs(self) -> int:
        return self.Tp

    def states(self, u):
        u = np.asarray(u, dtype=float)
        return self.c_d + self.J_d @ u, self.c_v + self.J_v @ u, self.c_a + self.J_a @ u

    def power(self, u):
        _, v, a = self.states(u)
        return self._k * (self._alpha * v**2 + self._beta * v + self._gamma + self._inertia * a) * v

    def power_jacobian(self, u):
        _, v, a = self.states(u)
        dPdv = self._k * (3 * self._alpha * v**2 + 2 * self._beta * v + self._gamma + self._inertia * a)
        dPda = self._k * self._inertia * v
        return dPdv[:, None] * self.J_v + dPda[:, None] * self.J_a

    def cost(self, u) -> float:
        """Fuel (L) burnt over the horizon, one sample per predicted state."""
        return float(np.sum(instantaneous_fuel(self.power(u), self.coefs)))

    def cost_gradient(self, u):
        """Gradient of ``cost`` where power is nonzero at every stage."""
        P = self.power(u)
        dF = np.where(P > 0, self.coefs.psi1 + 2 * self.coefs.psi2 * P, 0.0)
        return dF @ self.power_jacobian(u)

    def input_box(self):
        Tp = self.Tp
        eye = np.eye(Tp)
        return np.vstack([eye, -eye]), np.concatenate([np.full(Tp, self.limits.u_max), np.full(Tp, -self.limits.u_min)])

    def violation(self, u) -> float:
        u = np.asarray(u, dtype=float)
        Gi, hi = self.input_box()
        r = np.concatenate([self.G_state @ u - self.h_state, Gi @ u - hi])
        return float(max(r.max(), 0.0))

    def predict(self, u) -> np.ndarray:
        return simulate(self.sys_d, self.x0, u, self.hdv)


def build_leader_ocp(x0, hdv_speeds, params, coefs, limits, Tp, sys_d):
    return LeaderOCP(sys_d, x0, hdv_speeds, params, coefs, limits, Tp)


def _project(ocp: LeaderOCP, u_ref, h_state):
    """Closest input sequence to ``u_ref`` satisfying all boxes (QP)."""
    Gi, hi = ocp.input_box()
    A = np.vstack([ocp.G_state, Gi])
    b = np.concatenate([h_state, hi])
    u, _, _ = solve_qp(np.eye(ocp.Tp), -np.asarray(u_ref, dtype=float), A, b)
    return u


def _min_state_relaxation(ocp: LeaderOCP):
    """Smallest per-row widening of the state boxes that restores feasibility (LP)."""
    Tp = ocp.Tp
    nrow = 3 * Tp
    J = ocp._J_state
    # variables [u (Tp), e (3Tp)]: minimize sum(e)
    c = np.concatenate([np.zeros(Tp), np.ones(nrow)])
    A_ub = np.block([[J, -np.eye(nrow)], [-J, -np.eye(nrow)]])
    b_ub = ocp.h_state
    bounds = [(ocp.limits.u_min, ocp.limits.u_max)] * Tp + [(0, None)] * nrow
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise LeaderInfeasible(f"state-box relaxation LP failed: {res.message}", state=ocp.x0)
    return np.maximum(res.x[Tp:], 0.0)


def _sqp(ocp: LeaderOCP, u_start, h_state):
    """SLSQP on the epigraph form; returns ``(u, iterations, kkt_residual)``."""
    Tp = ocp.Tp
    S = _POWER_SCALE
    psi1, psi2 = ocp.coefs.psi1, ocp.coefs.psi2
    quad = psi2 * S / psi1

    def obj(z):
        s = z[Tp:]
        return float(np.sum(s + quad * s**2))

    def obj_grad(z):
        g = np.zeros(2 * Tp)
        g[Tp:] = 1.0 + 2 * quad * z[Tp:]
        return g

    def cons(z):
        u, s = z[:Tp], z[Tp:]
        return np.concatenate([s - ocp.power(u) / S, h_state - ocp.G_state @ u])

    def cons_jac(z):
        u = z[:Tp]
        top = np.hstack([-ocp.power_jacobian(u) / S, np.eye(Tp)])
        bottom = np.hstack([-ocp.G_state, np.zeros((ocp.G_state.shape[0], Tp))])
        return np.vstack([top, bottom])

    s0 = np.maximum(ocp.power(u_start), 0.0) / S + 1e-6
    z0 = np.concatenate([u_start, s0])
    bounds = [(ocp.limits.u_min, ocp.limits.u_max)] * Tp + [(0.0, None)] * Tp
    res = minimize(
        obj, z0, jac=obj_grad, method="SLSQP", bounds=bounds,
        constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
        options={"maxiter": MAX_SQP_ITER, "ftol": 1e-12},
    )
    z = res.x
    kkt = _kkt_residual(z, obj_grad, cons, cons_jac, bounds)
    return z[:Tp], int(res.nit), kkt


def _kkt_residual(z, grad, cons, jac, bounds, active_tol=1e-6):
    """Stationarity residual with nonnegative multipliers on near-active rows."""
    g = grad(z)
    c = cons(z)
    Jc = jac(z)
    rows = [Jc[i] for i in np.flatnonzero(c <= active_tol)]
    for j, (lo, hi) in enumerate(bounds):
        e = np.zeros(z.size)
        if lo is not None and z[j] - lo <= active_tol:
            e[j] = 1.0
            rows.append(e)
        elif hi is not None and hi - z[j] <= active_tol:
            e[j] = -1.0
            rows.append(e)
    if not rows:
        return float(np.linalg.norm(g, np.inf))
    A = np.array(rows).T
    lam, _ = nnls(A, g)
    return float(np.linalg.norm(g - A @ lam, np.inf))


def solve_leader_nmpc(ocp: LeaderOCP, warm_start=None) -> HorizonSolution:
    """Local fuel-optimal plan that is never worse than the feasible incumbent.

    The warm start (zeros if absent) is projected onto the feasible set and
    used both as the SQP initial point and as the incumbent. If the state
    boxes cannot all be met, they are widened by the minimum total amount
    (the limit of an exact L1 penalty) and the solution is flagged softened.
    """
    Tp = ocp.Tp
    u_ws = np.zeros(Tp) if warm_start is None else np.clip(warm_start, ocp.limits.u_min, ocp.limits.u_max)
    h_state = ocp.h_state
    softened = False
    slack = np.zeros(0)
    try:
        u_inc = _project(ocp, u_ws, h_state)
    except InfeasibleQP:
        slack = _min_state_relaxation(ocp)
        # a zero widening means the hard problem was only infeasible by round-off
        softened = slack.max() > 1e-9
        if softened:
            h_state = h_state + np.concatenate([slack, slack])
        else:
            slack = np.zeros(0)
        h_state = h_state + 1e-9
        try:
            u_inc = _project(ocp, u_ws, h_state)
        except InfeasibleQP:
            raise LeaderInfeasible("leader OCP infeasible after relaxation", state=ocp.x0) from None
        if softened:
            log.warning("leader state boxes softened, max widening %.4g", slack.max())

    ws_feasible = np.max(np.abs(u_inc - u_ws)) <= 1e-9
    incumbent = u_ws if ws_feasible else u_inc

    u_sqp, iters, kkt = _sqp(ocp, incumbent, h_state)
    u_sqp = np.clip(u_sqp, ocp.limits.u_min, ocp.limits.u_max)
    if np.max(ocp.G_state @ u_sqp - h_state) > 1e-9:
        u_sqp = _project(ocp, u_sqp, h_state)

    cost_sqp, cost_inc = ocp.cost(u_sqp), ocp.cost(incumbent)
    converged = kkt <= SQP_TOL
    if cost_sqp <= cost_inc:
        u, status = u_sqp, "optimal" if converged else "iteration-limit"
    else:
        # ties at round-off level mean the incumbent already was the optimum
        tie = converged and cost_sqp - cost_inc <= 1e-9 * abs(cost_inc)
        u, status = incumbent, "optimal" if tie else "incumbent"
    cost = ocp.cost(u)
    if softened:
        cost += SOFT_PENALTY * float(np.sum(slack))
    return HorizonSolution(
        u_seq=u, x_pred=ocp.predict(u), cost=cost, iterations=iters,
        softened=softened, kkt_residual=kkt, status=status, slack=slack,
    )


class EcoLeader:
    """Receding-horizon wrapper: warm starts, applies the first input."""

    def __init__(self, sys_d, params, coefs, limits, Tp):
        self.sys_d = sys_d
        self.params = params
        self.coefs = coefs
        self.limits = limits
        self.Tp = Tp
        self.previous = None
        self.softening_events = []

    def step(self, x0, hdv_speeds, k=None):
        """Returns ``(u0, HorizonSolution)``; the solution is broadcast to follower 1."""
        ocp = build_leader_ocp(x0, hdv_speeds, self.params, self.coefs, self.limits, self.Tp, self.sys_d)
        warm = None if self.previous is None else self.previous.shifted()
        sol = solve_leader_nmpc(ocp, warm)
        if sol.softened:
            self.softening_events.append({"k": k, "truck": 0, "max_widening": float(sol.slack.max())})
        self.previous = sol
        return float(sol.u_seq[0]), sol


def leader_receding_step(controller: EcoLeader, x0, hdv_speeds, k=None):
    return controller.step(x0, hdv_speeds, k)
