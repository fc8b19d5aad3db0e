"""Receding-horizon plumbing shared by the leader and follower controllers."""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import quadprog

from .dynamics import LinearSystem


@dataclass(frozen=True)
class Limits:
    """Box constraints on gap, speed, acceleration and control input.

    Followers only use the acceleration and input boxes; the gap and speed
    boxes apply to the eco-driving leader.
    """

    d_min: float = 5.0
    d_max: float = 45.0
    v_min: float = 0.0
    v_max: float = 36.0
    a_min: float = -3.0
    a_max: float = 3.0
    u_min: float = -4.0
    u_max: float = 4.0

    def __post_init__(self):
        for name in ("d", "v", "a", "u"):
            lo, hi = getattr(self, f"{name}_min"), getattr(self, f"{name}_max")
            if not lo < hi:
                raise ValueError(f"{name}_min must be below {name}_max, got {lo} >= {hi}")


LeaderLimits = Limits


@dataclass
class HorizonSolution:
    """Predicted trajectory returned by one local MPC solve.

    ``x_pred[s]`` is the state at ``k + s`` (``x_pred[0]`` is the measured
    state). ``a_pred[s]`` is the acceleration at ``k + s`` for ``s < Tp``, i.e.
    the zero-order-hold disturbance a successor needs over its own horizon.
    """

    u_seq: np.ndarray
    x_pred: np.ndarray
    cost: float
    iterations: int = 0
    softened: bool = False
    kkt_residual: float = 0.0
    status: str = "optimal"
    slack: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def a_pred(self) -> np.ndarray:
        return self.x_pred[:-1, 2]

    def shifted(self) -> np.ndarray:
        """Warm-start control sequence: drop the applied input, hold the last."""
        return np.append(self.u_seq[1:], self.u_seq[-1])


@lru_cache(maxsize=32)
def _prediction_matrices(A_bytes, B_bytes, D_bytes, Tp):
    A = np.frombuffer(A_bytes).reshape(3, 3)
    B = np.frombuffer(B_bytes)
    D = np.frombuffer(D_bytes)
    F = np.zeros((Tp, 3, 3))
    Gu = np.zeros((Tp, 3, Tp))
    Gw = np.zeros((Tp, 3, Tp))
    powers = [np.eye(3)]
    for _ in range(Tp):
        powers.append(A @ powers[-1])
    for s in range(Tp):
        F[s] = powers[s + 1]
        for j in range(s + 1):
            Gu[s, :, j] = powers[s - j] @ B
            Gw[s, :, j] = powers[s - j] @ D
    for arr in (F, Gu, Gw):
        arr.setflags(write=False)
    return F, Gu, Gw


def prediction_matrices(sys_d: LinearSystem, Tp: int):
    """Condensed maps with ``x[k+s+1] = F[s] x0 + Gu[s] u + Gw[s] w``.

    Returns arrays of shape ``(Tp, 3, 3)``, ``(Tp, 3, Tp)``, ``(Tp, 3, Tp)``.
    """
    return _prediction_matrices(sys_d.A.tobytes(), sys_d.B.tobytes(), sys_d.D.tobytes(), int(Tp))


def simulate(sys_d: LinearSystem, x0, u_seq, w_seq) -> np.ndarray:
    """Forward-simulate a discrete system; returns ``len(u_seq) + 1`` states."""
    xs = [np.asarray(x0, dtype=float)]
    for u, w in zip(u_seq, w_seq):
        xs.append(sys_d.A @ xs[-1] + sys_d.B * u + sys_d.D * w)
    return np.array(xs)


class InfeasibleQP(ValueError):
    pass


def solve_qp(H, f, A_ineq=None, b_ineq=None):
    """Minimize ``0.5 x'Hx + f'x`` subject to ``A_ineq x <= b_ineq``.

    Dual active-set (Goldfarb-Idnani) via quadprog; H must be positive definite.
    Returns ``(x, multipliers, iterations)``.
    """
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float)
    if A_ineq is None:
        C = np.zeros((H.shape[0], 0))
        b = np.zeros(0)
    else:
        C = -np.asarray(A_ineq, dtype=float).T
        b = -np.asarray(b_ineq, dtype=float)
    try:
        x, _, _, iters, lagr, _ = quadprog.solve_qp(H, -f, C, b, 0)
    except ValueError as err:
        if "inconsistent" in str(err):
            raise InfeasibleQP(str(err)) from None
        raise
    return x, lagr, int(iters[0])
