"""Command line: ``trapstab run|adev|list-scenarios|validate``.

Exit codes: 0 success, 1 validation failure, 2 runtime failure,
3 acceptance threshold missed.
"""
from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import list_scenarios, load_scenario
from .errors import ScenarioValidationError, TrapStabError
from .stability import allan_deviation, classify_noise_slope, fill_gaps

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3
FREQUENCY_COLUMNS = ("f_est_hz", "omega_zz_hz", "omega_r_hz", "omega_hz", "omega_z_hz", "omega_y_hz")


def _print_validation(exc: ScenarioValidationError, source):
    for fld, msg in exc.problems:
        print(f"{source}: {fld}: {msg}", file=sys.stderr)


def _run_one(target, out_root, seed, duration):
    from .scenario import override, run_scenario
    try:
        s = load_scenario(target)
        if seed is not None or duration is not None:
            s = override(s, seed=seed, duration=duration)
    except ScenarioValidationError as exc:
        _print_validation(exc, target)
        return target, EXIT_VALIDATION, []
    try:
        b = run_scenario(s, Path(out_root) / s.name)
    except (TrapStabError, ValueError, ArithmeticError, RuntimeError) as exc:
        return s.name, EXIT_RUNTIME, [f"{s.name}: run failed: {type(exc).__name__}: {exc}"]
    lines = [f"{s.name}: bundle written to {b.out_dir}"]
    lines += [f"  {'PASS' if c['passed'] else 'FAIL'} {c['metric']} {c['op']} {c['threshold']:g} "
              f"(value {c['value']!r})" for c in b.checks]
    return s.name, EXIT_OK if b.passed else EXIT_ACCEPTANCE, lines


def cmd_run(args):
    jobs = max(1, args.jobs)
    calls = [(t, args.out_dir, args.seed, args.duration) for t in args.scenarios]
    if jobs == 1 or len(calls) == 1:
        results = [_run_one(*c) for c in calls]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, *zip(*calls)))
    for _, _, lines in results:
        for line in lines:
            print(line)
    return max(code for _, code, _ in results)


def _read_trace(path, column):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ScenarioValidationError([(str(path), "empty trace")])
    names = rows[0].keys()
    if column is None:
        column = next((c for c in FREQUENCY_COLUMNS if c in names), None)
        if column is None:
            raise ScenarioValidationError([(str(path), "no frequency column found; use --column")])
    if column not in names or "t_s" not in names:
        raise ScenarioValidationError([(str(path), f"needs columns t_s and {column}")])
    t = np.array([float(r["t_s"]) for r in rows])
    y = np.array([float(r[column]) for r in rows])
    if "in_range" in names:
        y = fill_gaps(y, np.array([r["in_range"] == "1" for r in rows]))
    step = np.diff(t)
    if len(step) == 0 or np.ptp(step) > 1e-6 * step.mean():
        raise ScenarioValidationError([(str(path), "t_s must be evenly spaced")])
    return column, y, float(step.mean())


def cmd_adev(args):
    try:
        column, y, period = _read_trace(args.trace, args.column)
    except ScenarioValidationError as exc:
        _print_validation(exc, args.trace)
        return EXIT_VALIDATION
    try:
        rep = allan_deviation(y, period, taus=args.taus, mode=args.mode)
    except TrapStabError as exc:
        print(f"{args.trace}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"# {column}, sample period {period:g} s, {len(y)} samples, mode {rep.mode}")
    print("tau_s,adev")
    for t, a in zip(rep.taus, rep.adev):
        print(f"{t:g},{a:.6g}")
    try:
        for sl in classify_noise_slope(rep):
            slope = "n/a" if sl.slope is None else f"{sl.slope:+.2f}"
            print(f"# slope {sl.tau_start:g}-{sl.tau_stop:g} s: {slope} ({sl.label})")
    except TrapStabError:
        pass
    if args.out:
        rep.to_csv(args.out)
    return EXIT_OK


def cmd_list(args):
    for name in list_scenarios():
        s = load_scenario(name)
        print(f"{name:34s} {s.kind:17s} {s.description}")
    return EXIT_OK


def cmd_validate(args):
    code = EXIT_OK
    for target in args.files:
        try:
            s = load_scenario(target)
        except ScenarioValidationError as exc:
            _print_validation(exc, target)
            code = EXIT_VALIDATION
            continue
        print(f"{target}: ok ({s.name}, kind {s.kind}, config hash {s.config_hash()[:12]})")
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="trapstab", description="Trap-frequency stabilisation scenarios")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run scenarios (file path or shipped name)")
    r.add_argument("scenarios", nargs="+")
    r.add_argument("--seed", type=int)
    r.add_argument("--duration", type=float, help="override duration_s")
    r.add_argument("--out-dir", default="runs")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("adev", help="Allan deviation of a trace CSV")
    a.add_argument("trace")
    a.add_argument("--column")
    a.add_argument("--mode", choices=("absolute", "fractional"), default="absolute")
    a.add_argument("--taus", type=float, nargs="+")
    a.add_argument("--out")
    a.set_defaults(func=cmd_adev)

    ls = sub.add_parser("list-scenarios", help="list shipped scenarios")
    ls.set_defaults(func=cmd_list)

    v = sub.add_parser("validate", help="check scenario files")
    v.add_argument("files", nargs="+")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
