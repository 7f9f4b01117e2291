"""Transmit beampatterns of all schemes on one channel draw.

    python scripts/beampatterns.py [--r-min 4.5] [--out runs/beampatterns]

Writes one beampattern CSV per scheme and prints the in-window contrast
and the power at each target direction.
"""
import argparse
import dataclasses
from pathlib import Path

import numpy as np

from nomaisac.array import beampattern, power_db
from nomaisac.experiment import run_sweep, write_run
from nomaisac.scenario import load_config
from nomaisac.schemes import Beamspace, assemble_covariance

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "paper.json")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--realization", type=int, default=0)
    ap.add_argument("--r-min", type=float, default=4.5)
    ap.add_argument("--out", type=Path, default=Path("runs") / "beampatterns")
    args = ap.parse_args()

    rc = load_config(args.config)
    spec = dataclasses.replace(rc.sweep, r_min_values=(args.r_min,), n_realizations=args.realization + 1)
    outs = run_sweep(spec, rc, seed=args.seed, realizations=[args.realization])
    write_run(args.out, outs, dataclasses.replace(rc, sweep=spec), args.seed,
              snapshot_realization=args.realization)

    space = Beamspace.from_config(rc.scenario)
    inside = space.desired.values > 0
    targets = [int(np.argmin(np.abs(space.grid.angles - phi))) for phi in rc.scenario.target_directions]
    for o in outs:
        if o.lifted is None:
            print(f"{o.result.scheme:>13}  {o.result.status}")
            continue
        R = o.beamformers.covariance() if o.result.kind.uses_sca else assemble_covariance(o.lifted)
        P = beampattern(R, space.steering)
        contrast = 10 * np.log10(P[inside].mean() / P[~inside].mean())
        peaks = " ".join(f"{v:6.1f}" for v in power_db(P[targets]))
        print(f"{o.result.scheme:>13}  contrast {contrast:5.2f} dB  target power [dBW] {peaks}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
