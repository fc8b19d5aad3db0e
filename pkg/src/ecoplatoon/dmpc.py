"""Serial distributed MPC for the following trucks.

Each follower regulates its error state ``[dd, dv, a]`` to zero with a
quadratic cost, a Riccati terminal weight and a spacing-error box that is
tied to the peak spacing error of its predecessor. Followers solve in
order 1, 2, 3; each consumes the acceleration plan its predecessor has just
computed.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .dynamics import LinearSystem
from .horizon import HorizonSolution, InfeasibleQP, Limits, prediction_matrices, simulate, solve_qp

log = logging.getLogger(__name__)

SOFT_PENALTY = 1.0e4
SLACK_REGULARIZATION = 1.0e-2
MIN_SPACING_BOUND = 0.01


class DareError(RuntimeError):
    pass


class FollowerInfeasible(RuntimeError):
    """Hard follower QP has no solution; ``violated`` names the offending rows."""

    def __init__(self, message, violated=(), follower=None):
        super().__init__(message)
        self.violated = tuple(violated)
        self.follower = follower


def dare_residual(A, B, Q, W, P) -> float:
    A, B, Q, P = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, Q, P))
    B = B.reshape(A.shape[0], -1)
    gain = np.linalg.solve(np.atleast_2d(W) + B.T @ P @ B, B.T @ P)
    rhs = Q + A.T @ (P - P @ B @ gain) @ A
    return float(np.linalg.norm(P - rhs))


def solve_dare(A, B, Q, W, max_iter=10_000, tol=1e-8, name="system"):
    """Terminal weight from the discrete algebraic Riccati equation.

    Value iteration ``P <- Q + A'(P - P B (W + B'PB)^-1 B'P) A`` from ``P = Q``.
    Raises DareError if the residual is not below ``tol`` after ``max_iter``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Wm = np.atleast_2d(np.asarray(W, dtype=float))
    P = Q.copy()
    for _ in range(max_iter):
        PB = P @ B
        P_next = Q + A.T @ (P - PB @ np.linalg.solve(Wm + B.T @ PB, PB.T)) @ A
        P_next = 0.5 * (P_next + P_next.T)
        step = np.linalg.norm(P_next - P)
        P = P_next
        if step <= 1e-14 * max(1.0, np.linalg.norm(P)):
            break
    res = dare_residual(A, B, Q, Wm, P)
    if not res <= tol:
        raise DareError(f"DARE did not converge for {name}: residual {res:.3e}")
    return P


@dataclass(frozen=True)
class FollowerWeights:
    Q: np.ndarray
    W: float
    Q_P: np.ndarray

    @classmethod
    def for_system(cls, sys_d: LinearSystem, beta=(1.0, 1.0, 1.0), W=2.0):
        if min(beta) <= 0 or W <= 0:
            raise ValueError("stage weights must be positive")
        Q = np.diag(np.asarray(beta, dtype=float))
        return cls(Q, float(W), solve_dare(sys_d.A, sys_d.B, Q, W, name="follower error model"))


@dataclass(frozen=True)
class SpacingBounds:
    lower: float
    upper: float


def spacing_bounds(i, history=(), d_m=3.0, guard=MIN_SPACING_BOUND) -> SpacingBounds:
    """Spacing-error box for follower ``i``.

    Follower 1 gets ``+-d_m``. Later followers may not exceed the largest
    spacing error their predecessor has shown, ``history`` being every
    realized sample plus the predecessor's freshly predicted next one.
    """
    if i < 1:
        raise ValueError(f"follower index must be >= 1, got {i}")
    if i == 1:
        return SpacingBounds(-d_m, d_m)
    history = np.abs(np.asarray(history, dtype=float))
    if history.size == 0:
        raise ValueError(f"follower {i} needs a nonempty predecessor history")
    M = float(history.max())
    if M < guard:
        log.debug("follower %d spacing bound %.3g relaxed to %.3g", i, M, guard)
        M = guard
    return SpacingBounds(-M, M)


class FollowerQP:
    """Condensed tracking QP of one follower over the horizon.

    Decision variables are ``u[k..k+Tp-1]``. ``disturbance`` holds the
    predecessor's accelerations over the same intervals.
    """

    def __init__(self, sys_d, x0, disturbance, weights, bounds, limits, Tp):
        self.sys_d = sys_d
        self.x0 = np.asarray(x0, dtype=float)
        self.disturbance = np.asarray(disturbance, dtype=float)
        self.weights = weights
        self.bounds = bounds
        self.limits = limits
        self.Tp = Tp

        F, Gu, Gw = prediction_matrices(sys_d, Tp)
        free = F @ self.x0 + Gw @ self.disturbance  # (Tp, 3)
        self._free = free.reshape(-1)
        self._Gu = Gu.reshape(3 * Tp, Tp)
        Qbar = np.kron(np.eye(Tp), weights.Q)
        Qbar[-3:, -3:] += weights.Q_P
        self._Qbar = Qbar
        self.H = 2.0 * (self._Gu.T @ Qbar @ self._Gu + weights.W * np.eye(Tp))
        self.f = 2.0 * self._Gu.T @ Qbar @ self._free
        self.const = float(self._free @ Qbar @ self._free)

        eye = np.eye(Tp)
        Ga = Gu[:, 2, :]
        Gd = Gu[:, 0, :]
        fa = free[:, 2]
        fd = free[:, 0]
        self.A_ineq = np.vstack([eye, -eye, Ga, -Ga])
        self.b_ineq = np.concatenate([
            np.full(Tp, limits.u_max), np.full(Tp, -limits.u_min),
            limits.a_max - fa, fa - limits.a_min,
        ])
        self.labels = (
            [f"u[{s}]<=max" for s in range(Tp)] + [f"u[{s}]>=min" for s in range(Tp)]
            + [f"a[{s + 1}]<=max" for s in range(Tp)] + [f"a[{s + 1}]>=min" for s in range(Tp)]
        )
        self.A_spacing = np.vstack([Gd, -Gd])
        self.b_spacing = np.concatenate([bounds.upper - fd, fd - bounds.lower])
        self.spacing_labels = (
            [f"dd[{s + 1}]<=upper" for s in range(Tp)] + [f"dd[{s + 1}]>=lower" for s in range(Tp)]
        )

    @property
    def n_inputs(self) -> int:
        return self.Tp

    def cost(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.H @ u + self.f @ u + self.const)

    def predict(self, u) -> np.ndarray:
        return simulate(self.sys_d, self.x0, u, self.disturbance)

    def violation(self, u) -> float:
        u = np.asarray(u, dtype=float)
        r = np.concatenate([self.A_ineq @ u - self.b_ineq, self.A_spacing @ u - self.b_spacing])
        return float(max(r.max(), 0.0))


def build_follower_qp(x_i, a_prev_pred, weights, bounds, limits: Limits, Tp, sys_d):
    if len(a_prev_pred) != Tp:
        raise ValueError(f"predecessor acceleration plan has {len(a_prev_pred)} entries, expected {Tp}")
    return FollowerQP(sys_d, x_i, a_prev_pred, weights, bounds, limits, Tp)


def solve_follower_mpc(qp: FollowerQP, soften=False) -> HorizonSolution:
    """Global optimum of the follower QP.

    With ``soften=False`` an infeasible problem raises FollowerInfeasible.
    With ``soften=True`` the spacing rows get an L1-penalized slack.
    """
    A = np.vstack([qp.A_ineq, qp.A_spacing])
    b = np.concatenate([qp.b_ineq, qp.b_spacing])
    try:
        u, _, iters = solve_qp(qp.H, qp.f, A, b)
        slack = np.zeros(0)
        softened = False
    except InfeasibleQP:
        if not soften:
            violated = _violated_rows(qp)
            raise FollowerInfeasible("follower QP infeasible", violated) from None
        u, slack, iters = _solve_softened(qp)
        softened = True
    x_pred = qp.predict(u)
    return HorizonSolution(
        u_seq=u, x_pred=x_pred, cost=qp.cost(u), iterations=iters,
        softened=softened, slack=slack,
    )


def _solve_softened(qp: FollowerQP):
    Tp = qp.Tp
    H = np.zeros((2 * Tp, 2 * Tp))
    H[:Tp, :Tp] = qp.H
    H[Tp:, Tp:] = 2.0 * SLACK_REGULARIZATION * np.eye(Tp)
    f = np.concatenate([qp.f, np.full(Tp, SOFT_PENALTY)])
    nh = qp.A_ineq.shape[0]
    A = np.zeros((nh + 2 * Tp + Tp, 2 * Tp))
    A[:nh, :Tp] = qp.A_ineq
    A[nh:nh + 2 * Tp, :Tp] = qp.A_spacing
    A[nh:nh + 2 * Tp, Tp:] = -np.vstack([np.eye(Tp), np.eye(Tp)])
    A[nh + 2 * Tp:, Tp:] = -np.eye(Tp)
    b = np.concatenate([qp.b_ineq, qp.b_spacing, np.zeros(Tp)])
    z, _, iters = solve_qp(H, f, A, b)
    return z[:Tp], np.maximum(z[Tp:], 0.0), iters


def _violated_rows(qp: FollowerQP):
    try:
        u, slack, _ = _solve_softened(qp)
    except InfeasibleQP:
        return tuple(qp.labels)
    r = qp.A_spacing @ u - qp.b_spacing
    return tuple(lbl for lbl, v in zip(qp.spacing_labels, r) if v > 1e-9)


class SerialDMPC:
    """Followers 1..n of one platoon, solved serially each step.

    Keeps, per follower, the running peak of realized spacing errors that
    drives the downstream spacing boxes.
    """

    def __init__(self, sys_d, weights, limits: Limits, Tp, d_m=3.0, n_followers=3, allow_softening=True):
        self.sys_d = sys_d
        self.weights = weights
        self.limits = limits
        self.Tp = Tp
        self.d_m = d_m
        self.n = n_followers
        self.allow_softening = allow_softening
        self.peak_dd = np.zeros(n_followers)
        self.softening_events = []
        self.guard_events = 0

    def record(self, states):
        """Fold realized follower states into the spacing-error histories."""
        for j, x in enumerate(states):
            self.peak_dd[j] = max(self.peak_dd[j], abs(x[0]))

    def bounds_for(self, i, pred_solution):
        if i == 1:
            return spacing_bounds(1, d_m=self.d_m)
        hist = (self.peak_dd[i - 2], pred_solution.x_pred[1, 0])
        b = spacing_bounds(i, hist, d_m=self.d_m)
        if b.upper == MIN_SPACING_BOUND and max(abs(h) for h in hist) < MIN_SPACING_BOUND:
            self.guard_events += 1
        return b

    def step(self, leader_solution: HorizonSolution, states, k=None):
        """Solve followers in order; returns ``[(u_i, HorizonSolution), ...]``."""
        self.record(states)
        out = []
        pred = leader_solution
        for i in range(1, self.n + 1):
            bounds = self.bounds_for(i, pred)
            qp = build_follower_qp(states[i - 1], pred.a_pred, self.weights, bounds, self.limits, self.Tp, self.sys_d)
            try:
                sol = solve_follower_mpc(qp, soften=False)
            except FollowerInfeasible as err:
                err.follower = i
                if not self.allow_softening:
                    raise FollowerInfeasible(f"follower {i} infeasible at step {k}: {', '.join(err.violated)}",
                                             err.violated, follower=i) from None
                sol = solve_follower_mpc(qp, soften=True)
                self.softening_events.append({"k": k, "truck": i, "rows": list(err.violated)})
                log.warning("follower %d spacing box softened at step %s", i, k)
            out.append((float(sol.u_seq[0]), sol))
            pred = sol
        return out


def platoon_dmpc_step(dmpc: SerialDMPC, leader_solution: HorizonSolution, states, k=None):
    return dmpc.step(leader_solution, states, k)
