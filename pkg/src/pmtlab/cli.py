"""Command line entry point: ``run``, ``verify`` and ``calibrate``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .pipeline import RunConfig, StageError, emit_report, read_report, run_sweep, verify


def _load_constants(path):
    from .functional import Constants

    data = json.loads(Path(path).read_text())
    return Constants.for_dimension(int(data.get("n", 3)), float(data["S_n"]))


def cmd_run(args) -> int:
    cfg_path = args.config or args.config_opt
    if not cfg_path:
        print("error: run needs a config file", file=sys.stderr)
        return 2
    try:
        cfg = RunConfig.load(cfg_path)
        constants = _load_constants(args.constants) if args.constants else None
        t0 = time.perf_counter()
        report = run_sweep(cfg, threads=args.threads, constants=constants)
        out = args.out or cfg.out_dir
        paths = emit_report(report, out, args.format, args.emit_profiles)
    except (OSError, ValueError, StageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for k, v in report.verdict.items():
        if k != "overall":
            print(f"{'PASS' if v['pass'] else 'FAIL'}  {k:18s} {v['detail']}")
    print(f"overall: {report.verdict['overall']}  ({time.perf_counter() - t0:.1f} s)")
    for p in paths:
        print(f"wrote {p}")
    return 0 if report.verdict["overall"] == "PASS" else 1


def cmd_verify(args) -> int:
    try:
        report = read_report(args.report)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    verdict = verify(report)
    for k, v in verdict.items():
        if k != "overall":
            print(f"{'PASS' if v['pass'] else 'FAIL'}  {k:18s} slack={v['slack']}")
    print(f"overall: {verdict['overall']}")
    return 0 if verdict["overall"] == "PASS" else 1


def cmd_calibrate(args) -> int:
    from .functional import bubble_sobolev_constant, sharp_sobolev_constant
    from .grid import Grid
    from .mass import adm_mass
    from .metrics import schwarzschild_isotropic

    S_bubble, a_opt = bubble_sobolev_constant(3)
    S_closed = sharp_sobolev_constant(3)
    try:
        grid = Grid(16.0, args.nodes, 3.0)
        est = adm_mass(schwarzschild_isotropic(1.0).sample(grid), (7.5, 15.0))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    data = {
        "n": 3,
        "S_n": S_closed,
        "S_n_bubble": S_bubble,
        "bubble_exponent": a_opt,
        "schwarzschild_mass": est.value,
        "schwarzschild_error_bar": est.error_bar,
        "schwarzschild_grid": {"extent": 16.0, "nodes": args.nodes, "radii": [7.5, 15.0]},
    }
    out = Path(args.out or "constants.json")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(data, indent=1) + "\n")
    except OSError as exc:
        print(f"error: cannot write {out}: {exc}", file=sys.stderr)
        return 2
    print(f"S_3 closed form {S_closed:.12f}, bubble search {S_bubble:.12f} at a = {a_opt:.6f}")
    print(f"schwarzschild m = 1 -> {est.value:.6f} +/- {est.error_bar:.2e}")
    print(f"wrote {out}")
    ok = abs(S_bubble / S_closed - 1) < 1e-6 and abs(est.value - 1.0) < 0.01
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pmtlab", description="Smoothing, conformal-factor and mass sweeps.")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run a t-sweep from a TOML config")
    r.add_argument("config", nargs="?")
    r.add_argument("--config", dest="config_opt")
    r.add_argument("--out")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--format", choices=("csv", "json", "both"), default="both")
    r.add_argument("--emit-profiles", action="store_true")
    r.add_argument("--constants", help="constants file written by calibrate")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="re-check a report.json")
    v.add_argument("report")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("calibrate", help="Sobolev constant and Schwarzschild mass calibration")
    c.add_argument("--out")
    c.add_argument("--nodes", type=int, default=96)
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
