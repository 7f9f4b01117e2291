"""Matching error versus minimum rate for every scheme (Monte Carlo sweep).

    python scripts/error_vs_rate.py [--realizations 10] [--jobs 4] [--out runs/sweep]

Writes the usual run directory and prints the aggregate table.
"""
import argparse
import dataclasses
from pathlib import Path

from nomaisac.experiment import aggregate, run_sweep, write_run
from nomaisac.scenario import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "paper.json")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--realizations", type=int, default=None)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("runs") / "error_vs_rate")
    args = ap.parse_args()

    rc = load_config(args.config)
    spec = rc.sweep
    if args.realizations is not None:
        spec = dataclasses.replace(spec, n_realizations=args.realizations)
    outs = run_sweep(spec, rc, seed=args.seed, jobs=args.jobs)
    write_run(args.out, outs, dataclasses.replace(rc, sweep=spec), args.seed)

    aggs = aggregate([o.result for o in outs])
    r_values = sorted({a.r_min for a in aggs})
    print(f"{'scheme':>13} " + " ".join(f"{'R=' + format(r, 'g'):>12}" for r in r_values))
    for scheme in spec.schemes:
        cells = {a.r_min: a for a in aggs if a.scheme == scheme}
        vals = [cells[r].mean_error for r in r_values]
        print(f"{scheme:>13} " + " ".join(f"{v:12.6f}" if v is not None else f"{'-':>12}" for v in vals))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
