"""Independent reference computations for the numerical kernels.

None of these share code with the production paths they check: the matrix
exponential is a plain Taylor series with scaling and squaring (production
uses scipy's Pade-based ``expm``), the scalar Riccati equation is solved by
iterating the scalar map, and the QP oracle enumerates a grid.
"""
import itertools

import numpy as np


def expm_series(M, tol=1e-12):
    """exp(M) by Taylor series on ``M / 2**j`` followed by ``j`` squarings."""
    M = np.asarray(M, dtype=float)
    norm = np.abs(M).sum(axis=1).max() if M.size else 0.0
    j = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    X = M / 2.0**j
    term = np.eye(M.shape[0])
    total = term.copy()
    for n in range(1, 200):
        term = term @ X / n
        total = total + term
        if np.abs(term).max() < tol * 1e-4:
            break
    for _ in range(j):
        total = total @ total
    return total


def zoh_oracle(A, B, D, Ts):
    """``(A', B', D')`` from the series exponential of the augmented matrix."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    M = np.zeros((n + 2, n + 2))
    M[:n, :n] = A
    M[:n, n] = np.ravel(B)
    M[:n, n + 1] = np.ravel(D)
    E = expm_series(M * Ts)
    return E[:n, :n], E[:n, n], E[:n, n + 1]


def lag_closed_form(tau, Ts):
    """Entries of the discretized actuator-lag chain, in closed form.

    Returns ``(e, g, h)`` with ``e = exp(-Ts/tau)``, ``g = tau (1 - e)`` (speed
    gained per unit initial accel) and ``h = Ts - g`` (speed gained per unit held input).
    """
    e = np.exp(-Ts / tau)
    g = tau * (1 - e)
    return e, g, Ts - g


def scalar_dare(a, b, q, w, tol=1e-13, max_iter=100_000):
    p = q
    for _ in range(max_iter):
        nxt = q + a * a * (p - p * b * b * p / (w + b * b * p))
        if abs(nxt - p) < tol:
            return nxt
        p = nxt
    raise RuntimeError("scalar Riccati iteration did not converge")


def grid_qp(cost, feasible, lo, hi, step, n):
    """Exhaustive search over a uniform input grid; returns ``(best_u, best_cost)``.

    ``cost`` and ``feasible`` take an ``(N, n)`` batch of candidates.
    """
    values = np.round(np.arange(lo, hi + 0.5 * step, step), 12)
    U = np.array(list(itertools.product(values, repeat=n)))
    ok = feasible(U)
    if not ok.any():
        return None, np.inf
    c = np.where(ok, cost(U), np.inf)
    j = int(np.argmin(c))
    return U[j], float(c[j])


def central_difference(fn, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def fuel_rate_by_hand(mass, eta, area, rho, ca, cd, l0, l1, l2, grade, psi, v_mps, a):
    """Fuel rate spelled out term by term in km/h units, without vectorization."""
    v = v_mps * 3.6
    aero = rho / 25.92 * cd * ca * area * v * v
    roll = 9.8066 * mass * (l0 / 1000.0) * l1 * v + 9.8066 * mass * (l0 / 1000.0) * l2
    R = aero + roll + 9.8066 * mass * grade
    P = (R + 1.04 * mass * a) / (3600.0 * eta) * v
    if P < 0:
        return P, psi[0]
    return P, psi[0] + psi[1] * P + psi[2] * P * P
