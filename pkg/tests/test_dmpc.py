import numpy as np
import pytest

from ecoplatoon import oracles
from ecoplatoon.dmpc import (
    DareError,
    FollowerInfeasible,
    FollowerWeights,
    SerialDMPC,
    SpacingBounds,
    build_follower_qp,
    dare_residual,
    solve_dare,
    solve_follower_mpc,
    spacing_bounds,
)
from ecoplatoon.dynamics import TruckParams, discrete_models, step_follower
from ecoplatoon.horizon import HorizonSolution, Limits

LEADER, FOLLOWER = discrete_models(TruckParams(), 1.0)
WEIGHTS = FollowerWeights.for_system(FOLLOWER)
LIMITS = Limits()


def _lead_plan(a_seq):
    """A broadcast plan whose predicted accelerations are ``a_seq``."""
    a_seq = np.asarray(a_seq, dtype=float)
    x = np.zeros((a_seq.size + 1, 3))
    x[:-1, 2] = a_seq
    return HorizonSolution(u_seq=a_seq.copy(), x_pred=x, cost=0.0)


def test_dare_zero_dynamics_returns_q():
    Q = np.diag([1.0, 2.0, 3.0])
    np.testing.assert_allclose(solve_dare(np.zeros((3, 3)), [0, 0, 1], Q, 2.0), Q, atol=1e-15)


def test_dare_scalar_golden_ratio():
    p = solve_dare(1.0, 1.0, 1.0, 1.0)[0, 0]
    assert p == pytest.approx((1 + np.sqrt(5)) / 2, abs=1e-9)
    assert p == pytest.approx(oracles.scalar_dare(1.0, 1.0, 1.0, 1.0), abs=1e-9)


@pytest.mark.parametrize("a, b, q, w", [(0.5, 1.0, 1.0, 1.0), (1.2, 0.3, 2.0, 0.5), (0.95, 2.0, 0.1, 4.0)])
def test_dare_scalar_against_iteration_oracle(a, b, q, w):
    assert solve_dare(a, b, q, w)[0, 0] == pytest.approx(oracles.scalar_dare(a, b, q, w), rel=1e-9)


def test_dare_production_residual():
    P = WEIGHTS.Q_P
    assert dare_residual(FOLLOWER.A, FOLLOWER.B, np.eye(3), 2.0, P) <= 1e-8
    np.testing.assert_allclose(P, P.T, atol=1e-10)
    assert np.linalg.eigvalsh(P).min() >= -1e-12


def test_dare_failure_names_system():
    # unstable and uncontrollable: no stabilizing solution
    with pytest.raises(DareError, match="toy"):
        solve_dare(np.diag([2.0, 0.5]), [0.0, 1.0], np.eye(2), 1.0, max_iter=50, name="toy")


def test_spacing_bound_examples():
    assert spacing_bounds(1, d_m=3.0) == SpacingBounds(-3.0, 3.0)
    b = spacing_bounds(2, [0.4, -2.29, 1.1], d_m=3.0)
    assert (b.lower, b.upper) == (-2.29, 2.29)
    assert spacing_bounds(2, [0.0, 0.0], guard=0.0) == SpacingBounds(0.0, 0.0)
    assert spacing_bounds(3, [0.0, 0.0]).upper == 0.01
    with pytest.raises(ValueError):
        spacing_bounds(2, [])


def test_equilibrium_qp():
    qp = build_follower_qp(np.zeros(3), np.zeros(10), WEIGHTS, spacing_bounds(1), LIMITS, 10, FOLLOWER)
    assert qp.n_inputs == 10
    assert qp.A_ineq.shape[0] == 40  # 10 input boxes each side, 10 accel boxes each side
    assert qp.A_spacing.shape[0] == 20
    sol = solve_follower_mpc(qp)
    np.testing.assert_allclose(sol.u_seq, 0, atol=1e-12)
    assert sol.cost == pytest.approx(0, abs=1e-12)


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        build_follower_qp(np.zeros(3), np.zeros(9), WEIGHTS, spacing_bounds(1), LIMITS, 10, FOLLOWER)


def test_spacing_offset_is_corrected():
    qp = build_follower_qp([1.0, 0, 0], np.zeros(10), WEIGHTS, SpacingBounds(-3, 3), LIMITS, 10, FOLLOWER)
    sol = solve_follower_mpc(qp)
    assert sol.cost < qp.cost(np.zeros(10))
    assert sol.u_seq[0] > 0  # close the extra gap
    assert sol.status == "optimal"


def test_prediction_is_dynamics_consistent():
    a_prev = np.linspace(-1, 1, 10)
    qp = build_follower_qp([0.5, -0.3, 0.2], a_prev, WEIGHTS, SpacingBounds(-3, 3), LIMITS, 10, FOLLOWER)
    sol = solve_follower_mpc(qp)
    x = np.array([0.5, -0.3, 0.2])
    for s in range(10):
        x = step_follower(FOLLOWER, x, sol.u_seq[s], a_prev[s])
        np.testing.assert_allclose(sol.x_pred[s + 1], x, atol=1e-10)
    np.testing.assert_array_equal(sol.a_pred, sol.x_pred[:-1, 2])


def _simulate_batch(x0, U, w):
    X = np.tile(np.asarray(x0, dtype=float), (U.shape[0], 1))
    traj = []
    for s in range(U.shape[1]):
        X = X @ FOLLOWER.A.T + np.outer(U[:, s], FOLLOWER.B) + w[s] * FOLLOWER.D
        traj.append(X)
    return np.stack(traj, axis=1)  # (N, Tp, 3)


def _grid_case(x0, w, bounds, limits):
    Tp = 3
    weights = WEIGHTS
    qp = build_follower_qp(x0, w, weights, bounds, limits, Tp, FOLLOWER)
    sol = solve_follower_mpc(qp)

    def cost(U):
        X = _simulate_batch(x0, U, w)
        stage = np.einsum("nsi,ij,nsj->n", X, weights.Q, X) + weights.W * np.sum(U**2, axis=1)
        return stage + np.einsum("ni,ij,nj->n", X[:, -1], weights.Q_P, X[:, -1])

    def feasible(U):
        X = _simulate_batch(x0, U, w)
        a, dd = X[:, :, 2], X[:, :, 0]
        return (
            np.all((a <= limits.a_max + 1e-12) & (a >= limits.a_min - 1e-12), axis=1)
            & np.all((dd <= bounds.upper + 1e-12) & (dd >= bounds.lower - 1e-12), axis=1)
        )

    u_grid, c_grid = oracles.grid_qp(cost, feasible, limits.u_min, limits.u_max, 0.1, Tp)
    return qp, sol, u_grid, c_grid, cost


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_qp_matches_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    x0 = rng.uniform([-1, -1, -0.5], [1, 1, 0.5])
    w = rng.uniform(-1, 1, 3)
    qp, sol, u_grid, c_grid, cost = _grid_case(x0, w, SpacingBounds(-3, 3), LIMITS)
    assert cost(sol.u_seq[None, :])[0] == pytest.approx(sol.cost, rel=1e-10, abs=1e-10)
    # optimum beats every grid point, and the nearest grid point is within half a step
    assert sol.cost <= c_grid + 1e-9
    lam = np.linalg.eigvalsh(qp.H).max() / 2
    assert c_grid - sol.cost <= lam * 3 * 0.05**2 + 1e-9
    assert np.max(np.abs(u_grid - sol.u_seq)) <= 0.1


@pytest.mark.parametrize(
    "x0, w, bound",
    [([0.0, 0.5, 0.0], [0.0, 0.0, 0.0], 0.3), ([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 1.5)],
    ids=["spacing-active", "accel-active"],
)
def test_qp_matches_grid_oracle_with_active_boxes(x0, w, bound):
    limits = Limits(a_min=-1.0, a_max=1.0, u_min=-2.0, u_max=2.0)
    qp, sol, u_grid, c_grid, _ = _grid_case(np.array(x0), np.array(w), SpacingBounds(-bound, bound), limits)
    rows = np.vstack([qp.A_ineq, qp.A_spacing]) @ sol.u_seq - np.concatenate([qp.b_ineq, qp.b_spacing])
    assert np.any(np.abs(rows) < 1e-9)
    assert rows.max() <= 1e-9
    assert sol.cost <= c_grid + 1e-9
    # nearest feasible grid point lies within one step per coordinate
    g = qp.H @ sol.u_seq + qp.f
    lam = np.linalg.eigvalsh(qp.H).max() / 2
    assert c_grid - sol.cost <= 0.1 * np.abs(g).sum() + lam * 3 * 0.1**2
    assert np.max(np.abs(u_grid - sol.u_seq)) <= 0.3


def test_infeasible_qp_reports_rows():
    tight = SpacingBounds(-0.01, 0.01)
    qp = build_follower_qp([0.0, 5.0, 0.0], np.zeros(10), WEIGHTS, tight, LIMITS, 10, FOLLOWER)
    with pytest.raises(FollowerInfeasible) as err:
        solve_follower_mpc(qp)
    assert err.value.violated and all(r.startswith("dd[") for r in err.value.violated)
    soft = solve_follower_mpc(qp, soften=True)
    assert soft.softened and soft.slack.max() > 0


def test_serial_equilibrium():
    dmpc = SerialDMPC(FOLLOWER, WEIGHTS, LIMITS, 10)
    out = dmpc.step(_lead_plan(np.zeros(10)), [np.zeros(3)] * 3, k=0)
    for u, sol in out:
        assert u == pytest.approx(0, abs=1e-12)
        np.testing.assert_allclose(sol.x_pred, 0, atol=1e-12)


def test_serial_propagation_through_predictions():
    lead = _lead_plan(np.full(10, 0.8))
    dmpc = SerialDMPC(FOLLOWER, WEIGHTS, LIMITS, 10)
    out = dmpc.step(lead, [np.zeros(3)] * 3, k=0)
    assert out[0][0] > 0
    # follower 2 sees only follower 1's broadcast plan
    qp2 = build_follower_qp(np.zeros(3), out[0][1].a_pred, WEIGHTS, dmpc.bounds_for(2, out[0][1]), LIMITS, 10, FOLLOWER)
    assert solve_follower_mpc(qp2).u_seq[0] == pytest.approx(out[1][0], abs=1e-12)
    assert out[1][0] > 0
    # a silent follower 1 plan leaves follower 2 at rest
    qp_quiet = build_follower_qp(np.zeros(3), np.zeros(10), WEIGHTS, SpacingBounds(-1, 1), LIMITS, 10, FOLLOWER)
    assert solve_follower_mpc(qp_quiet).u_seq[0] == pytest.approx(0, abs=1e-12)


def test_follower_one_ignores_downstream_states():
    lead = _lead_plan(np.linspace(0.5, -0.5, 10))
    s1 = [np.array([0.2, 0.1, 0.0]), np.array([0.3, 0.0, 0.1]), np.array([-0.1, 0.2, 0.0])]
    s2 = [s1[0], s1[2], s1[1]]
    u1 = SerialDMPC(FOLLOWER, WEIGHTS, LIMITS, 10).step(lead, s1, 0)[0]
    u2 = SerialDMPC(FOLLOWER, WEIGHTS, LIMITS, 10).step(lead, s2, 0)[0]
    assert u1[0] == u2[0]
    np.testing.assert_array_equal(u1[1].u_seq, u2[1].u_seq)


def test_cost_nonincreasing_with_quiet_leader():
    # leader acceleration identically zero, followers start off equilibrium
    lead = _lead_plan(np.zeros(10))
    dmpc = SerialDMPC(FOLLOWER, WEIGHTS, LIMITS, 10, d_m=3.0)
    states = [np.array([1.5, -0.5, 0.2]), np.array([-1.0, 0.3, 0.0]), np.array([0.5, 0.5, -0.1])]
    dmpc.peak_dd[:] = 3.0  # wide downstream boxes so the test isolates the cost decrease
    costs = []
    for k in range(60):
        out = dmpc.step(lead, states, k)
        costs.append([sol.cost for _, sol in out])
        prev_a = 0.0
        nxt = []
        for (u, sol), x in zip(out, states):
            nxt.append(step_follower(FOLLOWER, x, u, prev_a))
            prev_a = x[2]
        states = nxt
    costs = np.array(costs)
    # follower 1 sees exactly a quiet predecessor; the others see converging ones
    assert np.all(np.diff(costs[:, 0]) <= 1e-6)
    assert costs[-1].max() < 1e-6
