"""Simulate and compare truck-platoon control strategies on a drive cycle.

    ecoplatoon run      --strategy eco-dmpc --cycle us06 --out out/
    ecoplatoon compare  --config scenario.yaml --out out/
    ecoplatoon sweep    --gap 5,10,15,20 --out out/
    ecoplatoon selftest

Exit codes: 0 success, 1 runtime or solver failure, 2 configuration error.
"""
import argparse
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import cycle as cycles
from . import plotting, report
from .config import ConfigError, load_scenario
from .selftest import run_selftest
from .sim import STRATEGIES, ScenarioConfig, SimulationAborted, run_scenario

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
DEFAULT_GAPS = (5.0, 10.0, 15.0, 20.0)

log = logging.getLogger("ecoplatoon")


class _ConfigFailure(Exception):
    pass


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON scenario file")
    common.add_argument("--cycle", help="built-in cycle name (us06, sawtooth) or CSV path")
    common.add_argument("--units", choices=sorted(cycles.UNIT_TO_MPS), help="speed unit of the cycle file")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--tail-seconds", type=float, help="constant-speed tail appended to the cycle")
    common.add_argument("--tau", type=float, help="actuation lag in s")
    common.add_argument("--lambda0", type=float, help="rolling-resistance coefficient lambda0")
    common.add_argument("--lambda1", type=float, help="rolling-resistance coefficient lambda1")
    common.add_argument("--lambda2", type=float, help="rolling-resistance coefficient lambda2")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    common.add_argument("-v", "--verbose", action="store_true", help="log solver warnings")

    p = argparse.ArgumentParser(prog="ecoplatoon", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="simulate one strategy")
    run.add_argument("--strategy", choices=STRATEGIES)
    run.add_argument("--gap", type=float, help="desired inter-truck gap in m")

    cmp_ = sub.add_parser("compare", parents=[common], help="run all strategies and tabulate")
    cmp_.add_argument("--strategy", action="append", choices=STRATEGIES,
                      help="strategy to include (repeatable; default: all three)")
    cmp_.add_argument("--gap", type=float, help="desired inter-truck gap in m")
    cmp_.add_argument("--jobs", type=int, default=1, help="worker processes")

    sw = sub.add_parser("sweep", parents=[common], help="total fuel against desired gap")
    sw.add_argument("--gap", action="append", help="gap(s) in m, comma-separated or repeated")
    sw.add_argument("--jobs", type=int, default=1, help="worker processes")

    sub.add_parser("selftest", help="run the numerical oracle checks")
    return p


def _scenario(args):
    """Config file plus overrides; raises _ConfigFailure with a readable message."""
    extras = {}
    cfg = ScenarioConfig()
    try:
        if args.config:
            cfg, extras = load_scenario(args.config)
        changes = {}
        if args.cycle:
            changes["cycle"] = args.cycle
        if args.units:
            changes["units"] = args.units
        if args.tail_seconds is not None:
            changes["tail_seconds"] = args.tail_seconds
        if getattr(args, "gap", None) is not None and not isinstance(args.gap, list):
            changes["desired_gap"] = args.gap
        if args.tau is not None:
            changes["truck"] = replace(cfg.truck, actuation_lag=args.tau)
        lam = {f"lambda{i}": getattr(args, f"lambda{i}") for i in range(3) if getattr(args, f"lambda{i}") is not None}
        if lam:
            changes["fuel"] = replace(cfg.fuel, **lam)
        cfg = replace(cfg, **changes)
        cyc = cycles.resolve(cfg.cycle, cfg.units)
    except ConfigError as err:
        raise _ConfigFailure(f"configuration error ({err.key}): {err}" if err.key else f"configuration error: {err}")
    except FileNotFoundError as err:
        raise _ConfigFailure(str(err))
    except ValueError as err:
        raise _ConfigFailure(f"configuration error: {err}")
    return replace(cfg, cycle=cyc), extras


def _write_trip(out: Path, name, trip, plots, error=None):
    report.atomic_write(out / f"trip_{name}.csv", report.trip_csv(trip))
    report.write_json(out / f"summary_{name}.json", report.trip_summary(trip, error))
    if plots and trip.n_steps:
        plotting.trip_overview(trip, out / f"trip_{name}.png")
        if trip.strategy != "idm":
            plotting.follower_errors(trip, out / f"followers_{name}.png")


def cmd_run(args) -> int:
    cfg, _ = _scenario(args)
    if args.strategy:
        cfg = replace(cfg, strategy=args.strategy)
    out = Path(args.out)
    try:
        trip = run_scenario(cfg)
    except SimulationAborted as err:
        _write_trip(out, cfg.strategy, err.log, not args.no_plots, str(err))
        print(f"run aborted: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_trip(out, cfg.strategy, trip, not args.no_plots)
    fuel = report.fuel_report(trip)
    print(f"{cfg.strategy}: total fuel {fuel['total']:.3f} L, average gap {report.average_gap(trip):.2f} m -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg, extras = _scenario(args)
    names = args.strategy or extras.get("strategies") or list(STRATEGIES)
    cfgs = [replace(cfg, strategy=s) for s in names]
    rep, logs = report.compare_strategies(cfgs, jobs=args.jobs)
    out = Path(args.out)
    text = rep.render_text()
    report.atomic_write(out / "report.txt", text)
    for stem, body in rep.tables().items():
        report.atomic_write(out / f"{stem}.csv", body)
    for name, trip in logs.items():
        report.atomic_write(out / f"trip_{name}.csv", report.trip_csv(trip))
    report.write_json(out / "summary.json", {
        "complete": rep.complete,
        "errors": rep.errors,
        "fuel_L": rep.fuel,
        "improvement_pct": {f"{a} vs {b}": v for (a, b), v in rep.improvements().items()},
        "average_gap_m": rep.avg_gap,
        "stability": {n: {"linf_m": s.norms, "string_stable": s.string_stable, "settle_s": s.settle_times,
                          "asymptotic": s.asymptotic} for n, s in rep.stability.items()},
        "softening_counts": rep.softening,
        "config": cfg.echo(),
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    })
    if not args.no_plots:
        done = {n: t for n, t in logs.items() if n not in rep.errors}
        if done:
            plotting.leader_profiles(done, out / "leader_profiles.png")
            plotting.fuel_bars(rep, out / "fuel.png")
        for n, t in done.items():
            if t.strategy != "idm":
                plotting.follower_errors(t, out / f"followers_{n}.png")
    sys.stdout.write(text)
    return EXIT_OK if rep.complete else EXIT_RUNTIME


def _parse_gaps(values):
    gaps = []
    for v in values:
        for tok in str(v).split(","):
            tok = tok.strip()
            if tok:
                try:
                    gaps.append(float(tok))
                except ValueError:
                    raise _ConfigFailure(f"configuration error (gap): not a number: {tok!r}") from None
    return gaps


def cmd_sweep(args) -> int:
    cfg, extras = _scenario(args)
    if args.gap is not None:
        gaps = _parse_gaps(args.gap)
    else:
        gaps = [float(g) for g in extras.get("gaps", DEFAULT_GAPS)]
    if not gaps:
        raise _ConfigFailure("configuration error (gap): empty gap list")
    if any(g <= 0 for g in gaps):
        raise _ConfigFailure("configuration error (gap): gaps must be positive")
    try:
        curve = report.sweep_desired_gap(cfg, gaps, jobs=args.jobs)
    except SimulationAborted as err:
        print(f"sweep aborted: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(args.out)
    body = report.sweep_csv(curve)
    report.atomic_write(out / "sweep.csv", body)
    if not args.no_plots:
        plotting.gap_sweep(curve, out / "sweep.png")
    sys.stdout.write(body)
    return EXIT_OK


def cmd_selftest(args) -> int:
    return EXIT_OK if run_selftest() else EXIT_RUNTIME


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep, "selftest": cmd_selftest}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _ConfigFailure as err:
        print(str(err), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
