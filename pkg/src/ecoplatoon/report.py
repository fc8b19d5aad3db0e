"""Trip metrics, strategy comparison and gap sweeps, plus their serialization."""
import csv
import io
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .fuel import trip_fuel
from .sim import ScenarioConfig, SimulationAborted, TripLog, run_scenario

TRUCK_LABELS = ("Leader", "FT1", "FT2", "FT3")
CONVERGENCE_TOL = 0.01
STRING_SLACK = 1e-6


def fuel_report(log: TripLog) -> dict:
    """Trip fuel per truck and in total (L), drive cycle only (no tail)."""
    per_truck = [trip_fuel(log.fuel[: log.n_cycle, i], log.Ts) for i in range(log.fuel.shape[1])]
    return {"per_truck": per_truck, "total": float(sum(per_truck))}


def improvement(base: float, new: float) -> float:
    """Fuel saving of ``new`` relative to ``base`` in percent."""
    return (base - new) / base * 100.0


def average_gap(log: TripLog, include_leader=True) -> float:
    """Mean inter-vehicle gap over cycle steps and trucks."""
    gaps = log.gap[: log.n_cycle]
    if not include_leader:
        gaps = gaps[:, 1:]
    return float(gaps.mean())


def linf_norms(log: TripLog) -> list:
    """Peak absolute spacing error of each follower over the whole log."""
    return [float(np.max(np.abs(log.dd[:, i]))) for i in range(1, log.dd.shape[1])]


def string_stable(norms, slack=STRING_SLACK) -> bool:
    return all(b <= a + slack for a, b in zip(norms, norms[1:]))


def settle_times(log: TripLog, tol=CONVERGENCE_TOL) -> list:
    """Seconds into the tail after which each follower's |dd|, |dv|, |a| stay below ``tol``.

    None when a follower has not settled by the end of the log.
    """
    start = log.tail_start
    out = []
    for i in range(1, log.dd.shape[1]):
        ok = (np.abs(log.dd[start:, i]) < tol) & (np.abs(log.dv[start:, i]) < tol) & (np.abs(log.a[start:, i]) < tol)
        if ok.size == 0 or not ok[-1]:
            out.append(None)
            continue
        bad = np.flatnonzero(~ok)
        out.append(float((bad[-1] + 1 if bad.size else 0) * log.Ts))
    return out


@dataclass
class StabilityReport:
    norms: list
    string_stable: bool
    settle_times: list
    asymptotic: list
    window: float

    @property
    def all_asymptotic(self) -> bool:
        return all(self.asymptotic)


def stability_report(log: TripLog, tol=CONVERGENCE_TOL, window=30.0, slack=STRING_SLACK) -> StabilityReport:
    norms = linf_norms(log)
    settle = settle_times(log, tol)
    asym = [s is not None and s <= window for s in settle]
    return StabilityReport(norms, string_stable(norms, slack), settle, asym, window)


@dataclass
class ComparisonReport:
    names: list
    fuel: dict  # name -> {"per_truck": [...], "total": x}
    avg_gap: dict
    stability: dict  # name -> StabilityReport (DMPC-based strategies only)
    softening: dict
    errors: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.errors

    def improvements(self) -> dict:
        """``{(new, base): [leader, FT1, FT2, FT3, total]}`` in percent, pairs in list order."""
        out = {}
        for i, new in enumerate(self.names):
            for base in self.names[i + 1:]:
                if new in self.fuel and base in self.fuel:
                    fn, fb = self.fuel[new], self.fuel[base]
                    out[(new, base)] = [improvement(b, n) for b, n in zip(fb["per_truck"], fn["per_truck"])] + [
                        improvement(fb["total"], fn["total"])
                    ]
        return out

    def tables(self) -> dict:
        """CSV text of each table, keyed by file stem."""
        tabs = {}
        rows = [["strategy", *TRUCK_LABELS, "Total"]]
        for n in self.names:
            if n in self.fuel:
                rows.append([n, *(_f(x) for x in self.fuel[n]["per_truck"]), _f(self.fuel[n]["total"])])
        tabs["fuel"] = rows
        imp = self.improvements()
        rows = [["truck", *(f"{a} vs {b} (%)" for a, b in imp)]]
        for j, label in enumerate((*TRUCK_LABELS, "Total")):
            rows.append([label, *(_f(v[j], 2) for v in imp.values())])
        tabs["improvement"] = rows
        rows = [["strategy", "average_gap_m"]] + [[n, _f(self.avg_gap[n], 2)] for n in self.names if n in self.avg_gap]
        tabs["gaps"] = rows
        rows = [["strategy", "linf_FT1_m", "linf_FT2_m", "linf_FT3_m", "string_stable", "asymptotic",
                 "settle_FT1_s", "settle_FT2_s", "settle_FT3_s"]]
        for n, st in self.stability.items():
            rows.append([n, *(_f(x) for x in st.norms), str(st.string_stable).lower(),
                         str(st.all_asymptotic).lower(), *("" if s is None else _f(s, 1) for s in st.settle_times)])
        tabs["stability"] = rows
        return {k: _csv(v) for k, v in tabs.items()}

    def render_text(self) -> str:
        lines = []
        if not self.complete:
            lines += ["INCOMPLETE: " + "; ".join(f"{k}: {v}" for k, v in self.errors.items()), ""]
        lines += ["Trip fuel consumption (L)", _row("", *TRUCK_LABELS, "Total")]
        for n in self.names:
            if n in self.fuel:
                f = self.fuel[n]
                lines.append(_row(n, *(f"{x:.2f}" for x in f["per_truck"]), f"{f['total']:.2f}"))
        imp = self.improvements()
        if imp:
            lines += ["", "Trip fuel consumption improvement (%)", _row("Truck", *(f"{a} vs {b}" for a, b in imp), width=20)]
            for j, label in enumerate((*TRUCK_LABELS, "Total")):
                lines.append(_row(label, *(f"{v[j]:.2f}" for v in imp.values()), width=20))
        lines += ["", "Platoon average gap distance (m)"]
        lines += [_row(n, f"{self.avg_gap[n]:.2f}") for n in self.names if n in self.avg_gap]
        if self.stability:
            lines += ["", "Stability (follower spacing-error L-inf norms, m)",
                      _row("", "FT1", "FT2", "FT3", "string", "asymptotic", width=11)]
            for n, st in self.stability.items():
                lines.append(_row(n, *(f"{x:.3f}" for x in st.norms),
                                  "yes" if st.string_stable else "no", "yes" if st.all_asymptotic else "no", width=11))
        lines += ["", "Softening events"] + [_row(n, str(c)) for n, c in self.softening.items()]
        return "\n".join(lines) + "\n"


def _f(x, nd=4):
    return f"{x:.{nd}f}"


def _row(label, *cells, width=10):
    return f"{label:<12}" + "".join(f"{c:>{width}}" for c in cells)


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _run_safe(cfg):
    try:
        return run_scenario(cfg), None
    except SimulationAborted as err:
        return err.log, str(err)


def _map(fn, items, jobs):
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def unique_names(cfgs) -> list:
    names, seen = [], {}
    for c in cfgs:
        seen[c.strategy] = seen.get(c.strategy, 0) + 1
        names.append(c.strategy if seen[c.strategy] == 1 else f"{c.strategy}#{seen[c.strategy]}")
    return names


def compare_strategies(cfgs, jobs=1):
    """Run every config and tabulate fuel, improvements, gaps and stability.

    Returns ``(ComparisonReport, {name: TripLog})``. A failed run leaves its
    partial log and marks the report incomplete.
    """
    cfgs = list(cfgs)
    names = unique_names(cfgs)
    results = _map(_run_safe, cfgs, jobs)
    fuel, gaps, stab, soft, errors, logs = {}, {}, {}, {}, {}, {}
    for name, (log, err) in zip(names, results):
        logs[name] = log
        soft[name] = log.diagnostics.get("softening_count", 0)
        if err:
            errors[name] = err
            continue
        fuel[name] = fuel_report(log)
        gaps[name] = average_gap(log)
        if log.strategy != "idm":
            stab[name] = stability_report(log)
    return ComparisonReport(names, fuel, gaps, stab, soft, errors), logs


def _sweep_point(cfg):
    return fuel_report(run_scenario(cfg))["total"]


def sweep_desired_gap(cfg: ScenarioConfig, gaps, jobs=1) -> list:
    """``[(gap, total fuel)]`` for one eco-dmpc run per desired gap."""
    gaps = [float(g) for g in gaps]
    if any(g <= 0 for g in gaps):
        raise ValueError("desired gaps must be positive")
    cfgs = [cfg.with_(strategy="eco-dmpc", desired_gap=g) for g in gaps]
    return list(zip(gaps, _map(_sweep_point, cfgs, jobs)))


# -- serialization -----------------------------------------------------------

TRIP_COLUMNS = ("k", "t", "truck", "v", "a", "u", "gap", "dd", "dv", "P_kW", "fuel_Lps")


def trip_csv(log: TripLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIP_COLUMNS)
    cols = (log.v, log.a, log.u, log.gap, log.dd, log.dv, log.P, log.fuel)
    for k in range(log.n_steps):
        t = repr(float(log.t[k]))
        for i in range(log.v.shape[1]):
            w.writerow([k, t, i, *(repr(float(c[k, i])) for c in cols)])
    return buf.getvalue()


def trip_summary(log: TripLog, error=None) -> dict:
    out = {
        "strategy": log.strategy,
        "completed": log.completed,
        "error": error or log.error,
        "steps": log.n_steps,
        "cycle_steps": log.n_cycle,
    }
    if log.n_steps >= log.n_cycle:
        out["fuel_L"] = fuel_report(log)
        out["average_gap_m"] = average_gap(log)
        if log.strategy != "idm":
            st = stability_report(log)
            out["stability"] = {
                "linf_m": st.norms, "string_stable": st.string_stable,
                "settle_s": st.settle_times, "asymptotic": st.asymptotic,
            }
    out["diagnostics"] = log.diagnostics if log.strategy != "idm" else {
        k: v for k, v in log.diagnostics.items() if k in ("softening_count", "softening_events")}
    out["config"] = log.config
    out["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return out


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=False, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def sweep_csv(curve) -> str:
    return _csv([["gap_m", "total_fuel_L"]] + [[_f(g, 3), _f(f, 6)] for g, f in curve])

