"""Quick numerical self-checks run by ``ecoplatoon selftest``."""
import numpy as np

from . import oracles
from .dmpc import dare_residual, solve_dare
from .dynamics import TruckParams, discretize_zoh, follower_continuous_system, leader_continuous_system
from .fuel import FuelCoefficients, instantaneous_fuel, power, trip_fuel


def _zoh():
    worst = 0.0
    for tau in (0.25, 0.5, 1.0):
        for Ts in (0.1, 1.0):
            for make in (leader_continuous_system, follower_continuous_system):
                sys_c = make(TruckParams(actuation_lag=tau))
                got = discretize_zoh(sys_c, Ts)
                ref = oracles.zoh_oracle(sys_c.A, sys_c.B, sys_c.D, Ts)
                for x, y in zip((got.A, got.B, got.D), ref):
                    worst = max(worst, float(np.abs(x - y).max()))
    return worst <= 1e-9, f"max |ZOH - series oracle| = {worst:.2e}"


def _dare():
    sys_d = discretize_zoh(follower_continuous_system(TruckParams()), 1.0)
    P = solve_dare(sys_d.A, sys_d.B, np.eye(3), 2.0)
    res = dare_residual(sys_d.A, sys_d.B, np.eye(3), 2.0, P)
    golden = float(solve_dare([[1.0]], [[1.0]], [[1.0]], 1.0)[0, 0])
    err = abs(golden - (1 + np.sqrt(5)) / 2)
    ok = res <= 1e-8 and err <= 1e-9 and np.all(np.linalg.eigvalsh(P) >= -1e-12)
    return ok, f"residual {res:.2e}, scalar golden-ratio error {err:.2e}"


def _fuel_units():
    coefs = FuelCoefficients()
    truck = TruckParams()
    f100 = float(instantaneous_fuel(100.0, coefs))
    P = float(power(truck, coefs, 20.0, 0.5, 3000.0))
    trip = trip_fuel(np.full(600, coefs.psi0), 1.0)
    ok = abs(f100 - 9.76e-3) < 1e-12 and abs(P - 18288 / 3384 * 72) < 1e-9 and abs(trip - 0.936) < 1e-12
    return ok, f"F(100 kW) = {f100:.5g} L/s, P(20 m/s, 0.5 m/s2, 3000 N) = {P:.2f} kW, 600 s idle = {trip:.4g} L"


CHECKS = (("zoh-vs-series-exponential", _zoh), ("dare-residual", _dare), ("fuel-model-units", _fuel_units))


def run_selftest(echo=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        ok, detail = fn()
        all_ok &= ok
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
