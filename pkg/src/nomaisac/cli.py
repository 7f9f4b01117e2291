"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 a requested cell stayed
infeasible after resampling, 4 solver failure without a usable iterate.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime
import logging
import sys
from pathlib import Path

from .experiment import (
    default_jobs,
    run_sweep,
    write_run,
)
from .scenario import ConfigError, load_config
from .schemes import SchemeKind

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

DEFAULT_SEED = 42
SCHEME_NAMES = [k.value for k in SchemeKind]


def _default_out() -> Path:
    return Path("runs") / datetime.datetime.now().strftime("%Y%m%d-%H%M%S")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nomaisac", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", required=True, type=Path, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default {DEFAULT_SEED})")
        if out:
            p.add_argument("--out", type=Path, default=None,
                           help="output directory (default ./runs/<timestamp>)")

    p = sub.add_parser("validate", help="check a configuration file")
    common(p, out=False)

    p = sub.add_parser("solve", help="solve one scheme on one channel realization")
    common(p)
    p.add_argument("--scheme", required=True, choices=SCHEME_NAMES)
    p.add_argument("--r-min", type=float, default=None, help="minimum rate in bits/s/Hz")
    p.add_argument("--realization", type=int, default=0)

    p = sub.add_parser("sweep", help="matching error versus minimum rate for every scheme")
    common(p)
    p.add_argument("--jobs", type=int, default=default_jobs(), help="worker processes")
    p.add_argument("--realizations", type=int, default=None, help="override n_realizations")
    p.add_argument("--paper-scale", action="store_true", help="use 50 realizations")

    p = sub.add_parser("beampattern", help="transmit beampatterns of every scheme on one realization")
    common(p)
    p.add_argument("--r-min", type=float, default=4.5)
    p.add_argument("--realization", type=int, default=0)
    p.add_argument("--jobs", type=int, default=default_jobs())

    p = sub.add_parser("trace", help="convergence trace of the SCA algorithm")
    common(p)
    p.add_argument("--scheme", choices=["noma_sca", "comm_only"], default="noma_sca")
    p.add_argument("--r-min", type=float, default=4.5)
    p.add_argument("--realization", type=int, default=0)
    return parser


def _exit_code(outs) -> int:
    statuses = {o.result.status for o in outs}
    if "failed" in statuses:
        return EXIT_SOLVER
    if "infeasible" in statuses:
        return EXIT_INFEASIBLE
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        run_config = load_config(args.config)
    except FileNotFoundError:
        print(f"config file not found: {args.config}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for v in exc.violations:
            print(v, file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print("ok", file=sys.stderr)
        return EXIT_OK

    out = args.out or _default_out()
    seed = args.seed
    if args.command == "sweep":
        spec = run_config.sweep
        if args.paper_scale:
            spec = dataclasses.replace(spec, n_realizations=50)
        if args.realizations is not None:
            if args.realizations < 1:
                print("--realizations must be ≥ 1", file=sys.stderr)
                return EXIT_CONFIG
            spec = dataclasses.replace(spec, n_realizations=args.realizations)
        outs = run_sweep(spec, run_config, seed=seed, jobs=max(1, args.jobs))
        snapshot = 0
    else:
        r_min = args.r_min
        if r_min is None:
            r_min = float(run_config.scenario.rate_floors()[0])
        if args.command == "beampattern":
            schemes = list(run_config.sweep.schemes)
            jobs = args.jobs
        else:
            schemes = [args.scheme]
            jobs = 1
        if args.realization < 0:
            print("--realization must be ≥ 0", file=sys.stderr)
            return EXIT_CONFIG
        spec = dataclasses.replace(run_config.sweep, r_min_values=(r_min,), schemes=tuple(schemes),
                                   n_realizations=args.realization + 1)
        outs = run_sweep(spec, run_config, seed=seed, jobs=max(1, jobs),
                         realizations=[args.realization])
        snapshot = args.realization

    run_config = dataclasses.replace(run_config, sweep=dataclasses.replace(spec, base_seed=seed))
    write_run(out, outs, run_config, seed, snapshot_realization=snapshot)
    print(f"wrote {out}", file=sys.stderr)
    return _exit_code(outs)


if __name__ == "__main__":
    sys.exit(main())
