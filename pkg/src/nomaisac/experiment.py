"""Monte Carlo orchestration: sweeps, aggregation and run-directory outputs."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .array import beampattern, beampattern_csv, matching_error
from .conic import Status, solve
from .evaluate import BeamformerSet, FeasibilityReport, feasibility_audit, recover_beamformers
from .penalty import penalty_value
from .sca import (
    InfeasibleInstance,
    IterationTrace,
    SolverFailure,
    initialize,
    lifted_matching_error,
    run_algorithm1,
)
from .scenario import ChannelSet, RunConfig, ScenarioConfig, SolverConfig, SweepSpec, generate_channels
from .schemes import Beamspace, LiftedSolution, SchemeKind, assemble_covariance, build_relaxation

log = logging.getLogger(__name__)

MAX_RESAMPLES = 10

RESULTS_HEADER = (
    "scheme", "r_min_bits", "realization", "matching_error_recovered", "matching_error_lifted",
    "penalty_final", "status", "resamples", "wall_seconds",
)
AGGREGATE_HEADER = (
    "scheme", "r_min_bits", "mean_error", "std_error", "n_converged", "n_degraded", "n_infeasible",
)


@dataclass
class CellResult:
    scheme: str
    r_min: float
    realization: int
    matching_error_recovered: float | None
    matching_error_lifted: float | None
    objective: float | None
    penalty_final: float | None
    status: str                      # converged | degraded | infeasible | failed
    resample_count: int = 0
    wall_seconds: float = 0.0
    delta: float | None = None
    sensing_power: float | None = None
    channel_digest: str = ""
    n_outer: int = 0

    @property
    def kind(self) -> SchemeKind:
        return SchemeKind.from_name(self.scheme)

    @property
    def reported_error(self) -> float | None:
        """Recovered error for SCA schemes, lifted error for SDR schemes."""
        if self.kind.uses_sca:
            return self.matching_error_recovered
        return self.matching_error_lifted

    def sort_key(self):
        return (list(SchemeKind).index(self.kind), self.r_min, self.realization)


@dataclass
class CellOutcome:
    result: CellResult
    lifted: LiftedSolution | None = None
    beamformers: BeamformerSet | None = None
    trace: IterationTrace | None = None
    audit_lifted: FeasibilityReport | None = None
    audit_recovered: FeasibilityReport | None = None
    channels: ChannelSet | None = None


def _sensing_power(sol: LiftedSolution) -> float:
    parts = list(sol.Wr) + ([sol.R_resid] if sol.R_resid is not None else [])
    return float(sum(np.trace(P).real for P in parts))


def solve_cell(kind: SchemeKind, channels: ChannelSet, config: ScenarioConfig,
               solver_config: SolverConfig, space: Beamspace,
               relaxation: LiftedSolution | None = None) -> CellOutcome:
    """Build, solve, recover and audit one scheme on one channel draw.

    ``relaxation`` may carry an already-solved NOMA relaxation, reused as the
    NOMA-SDR answer or as the SCA starting point.
    """
    t0 = time.perf_counter()
    r_min = float(config.rate_floors()[0])
    base = dict(scheme=kind.value, r_min=r_min, realization=channels.realization_index,
                channel_digest=channels.digest())
    trace = None
    try:
        if kind.uses_sca:
            start = relaxation if (relaxation is not None and kind.is_noma) else None
            lifted, trace = run_algorithm1(channels, config, solver_config, space, kind, start=start)
            status = "converged" if trace.converged else "degraded"
        elif relaxation is not None and kind is SchemeKind.NOMA_SDR:
            lifted, status = relaxation, "converged"
        else:
            lifted = initialize(channels, config, space, kind, solver_config)
            status = "converged"
    except InfeasibleInstance:
        res = CellResult(**base, matching_error_recovered=None, matching_error_lifted=None,
                         objective=None, penalty_final=None, status="infeasible",
                         wall_seconds=time.perf_counter() - t0)
        return CellOutcome(res, channels=channels)
    except SolverFailure as exc:
        log.warning("solver failure for %s r_min=%s realization=%s: %s",
                    kind.value, r_min, channels.realization_index, exc)
        res = CellResult(**base, matching_error_recovered=None, matching_error_lifted=None,
                         objective=None, penalty_final=None, status="failed",
                         wall_seconds=time.perf_counter() - t0)
        return CellOutcome(res, channels=channels)

    bf = recover_beamformers(lifted, solver_config.rank_tol)
    err_lifted = lifted_matching_error(lifted, space)
    err_recovered = matching_error(lifted.delta, bf.covariance(), space.desired, space.steering)
    res = CellResult(
        **base,
        matching_error_recovered=err_recovered,
        matching_error_lifted=err_lifted,
        objective=lifted.objective_value,
        penalty_final=penalty_value(lifted.rank_one_matrices()),
        status=status,
        wall_seconds=time.perf_counter() - t0,
        delta=lifted.delta,
        sensing_power=_sensing_power(lifted),
        n_outer=trace.n_outer if trace else 0,
    )
    return CellOutcome(
        res, lifted, bf, trace,
        audit_lifted=feasibility_audit(channels, lifted, config, solver_config),
        audit_recovered=feasibility_audit(channels, bf, config, solver_config),
        channels=channels,
    )


def _noma_relaxation(channels, config, solver_config, space) -> LiftedSolution | None:
    sp = build_relaxation(SchemeKind.NOMA_SDR, channels, config, space)
    sol = solve(sp.program, solver_config.solver_tol)
    return sp.lifted(sol) if sol.ok else None


def _solve_group(kinds: Sequence[SchemeKind], config: ScenarioConfig, solver_config: SolverConfig,
                 seed: int, realization: int) -> list[CellOutcome]:
    """All schemes on one shared draw; the draw is replaced while any scheme is infeasible."""
    space = Beamspace.from_config(config)
    for attempt in range(MAX_RESAMPLES + 1):
        channels = generate_channels(config, seed, realization, attempt)
        relax, relax_seconds = None, 0.0
        if any(k.is_noma for k in kinds):
            t0 = time.perf_counter()
            relax = _noma_relaxation(channels, config, solver_config, space)
            relax_seconds = time.perf_counter() - t0
        outs = [solve_cell(k, channels, config, solver_config, space, relax) for k in kinds]
        for o in outs:
            # the shared relaxation is the NOMA-SDR answer, so it pays for it
            if o.result.kind is SchemeKind.NOMA_SDR:
                o.result.wall_seconds += relax_seconds
        if not any(o.result.status == "infeasible" for o in outs) or attempt == MAX_RESAMPLES:
            break
        log.info("r_min=%s realization=%d attempt=%d infeasible for %s; resampling",
                 config.min_rate_bits, realization, attempt,
                 [o.result.scheme for o in outs if o.result.status == "infeasible"])
    for o in outs:
        o.result.resample_count = attempt
    return outs


def _stream_seed(seed: int, *keys: int) -> int:
    state = np.random.SeedSequence([int(seed), *keys]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _work_items(spec: SweepSpec, run_config: RunConfig, seed: int,
                realizations: Sequence[int] | None = None):
    kinds = [SchemeKind.from_name(s) for s in spec.schemes]
    if realizations is None:
        realizations = range(spec.n_realizations)
    items = []
    for ri, r_min in enumerate(spec.r_min_values):
        cfg = run_config.scenario.with_min_rate(r_min)
        for real in realizations:
            if spec.shared_channels:
                items.append((kinds, cfg, run_config.solver, seed, real))
            else:
                for k in kinds:
                    s = _stream_seed(seed, list(SchemeKind).index(k) + 1, ri + 1)
                    items.append(([k], cfg, run_config.solver, s, real))
    return items


def _run_item(item) -> list[CellOutcome]:
    return _solve_group(*item)


def run_sweep(spec: SweepSpec, run_config: RunConfig, seed: int | None = None,
              jobs: int = 1, realizations: Sequence[int] | None = None) -> list[CellOutcome]:
    """Every (scheme, r_min, realization) cell, in canonical order.

    ``realizations`` restricts the sweep to the given indices (default: all
    ``spec.n_realizations``).
    """
    seed = spec.base_seed if seed is None else seed
    items = _work_items(spec, run_config, seed, realizations)
    outs: list[CellOutcome] = []
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for group in pool.map(_run_item, items):
                outs.extend(group)
    else:
        for item in items:
            outs.extend(_run_item(item))
    outs.sort(key=lambda o: o.result.sort_key())
    return outs


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

@dataclass
class Aggregate:
    scheme: str
    r_min: float
    mean_error: float | None
    std_error: float | None
    n_converged: int
    n_degraded: int
    n_infeasible: int
    n_failed: int = 0


def aggregate(results: Iterable[CellResult]) -> list[Aggregate]:
    """Mean and sample std of the reported error over converged cells."""
    results = list(results)
    if not results:
        raise ValueError("no results to aggregate")
    groups: dict[tuple[str, float], list[CellResult]] = {}
    for r in sorted(results, key=CellResult.sort_key):
        groups.setdefault((r.scheme, r.r_min), []).append(r)
    out = []
    for (scheme, r_min), cells in groups.items():
        errs = [c.reported_error for c in cells if c.status == "converged"]
        if errs:
            mean = float(np.mean(errs))
            std = float(np.std(errs, ddof=1)) if len(errs) > 1 else 0.0
        else:
            mean = std = None
        count = lambda s: sum(c.status == s for c in cells)  # noqa: E731
        out.append(Aggregate(scheme, r_min, mean, std, count("converged"), count("degraded"),
                             count("infeasible"), count("failed")))
    return out


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def results_csv(results: Sequence[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for r in sorted(results, key=CellResult.sort_key):
        w.writerow([r.scheme, _fmt(float(r.r_min)), r.realization, _fmt(r.matching_error_recovered),
                    _fmt(r.matching_error_lifted), _fmt(r.penalty_final), r.status,
                    r.resample_count, f"{r.wall_seconds:.3f}"])
    return buf.getvalue()


def aggregate_csv(aggs: Sequence[Aggregate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_HEADER)
    for a in aggs:
        w.writerow([a.scheme, _fmt(float(a.r_min)), _fmt(a.mean_error), _fmt(a.std_error),
                    a.n_converged, a.n_degraded, a.n_infeasible])
    return buf.getvalue()


def beampattern_snapshot(outcome: CellOutcome, space: Beamspace) -> str:
    """Scaled desired pattern and achieved pattern of one solved cell.

    SCA cells use the recovered beamformers, SDR cells the lifted covariance.
    """
    if outcome.lifted is None:
        raise ValueError("cell has no solution to plot")
    if outcome.result.kind.uses_sca:
        R = outcome.beamformers.covariance()
    else:
        R = assemble_covariance(outcome.lifted)
    power = beampattern(R, space.steering)
    return beampattern_csv(space.grid, outcome.lifted.delta * space.desired.values, power)


def _complex_json(a: np.ndarray | None):
    if a is None:
        return None
    a = np.asarray(a)
    return {"shape": list(a.shape), "real": a.real.ravel().tolist(), "imag": a.imag.ravel().tolist()}


def complex_from_json(d) -> np.ndarray | None:
    if d is None:
        return None
    return (np.asarray(d["real"]) + 1j * np.asarray(d["imag"])).reshape(d["shape"])


def solution_record(outcome: CellOutcome, seed: int) -> dict:
    r = outcome.result
    rec = {"cell": dataclasses.asdict(r), "seed": seed}
    rec["cell"].pop("wall_seconds")
    if outcome.channels is not None:
        rec["channels"] = {"h": _complex_json(outcome.channels.h),
                           "attempt": outcome.channels.attempt}
    if outcome.lifted is not None:
        L = outcome.lifted
        rec["lifted"] = {"W": _complex_json(L.W), "Wr": _complex_json(L.Wr),
                         "R_resid": _complex_json(L.R_resid), "delta": L.delta,
                         "objective_value": L.objective_value}
        bf = outcome.beamformers
        rec["beamformers"] = {"w": _complex_json(bf.w), "wr": _complex_json(bf.wr),
                              "rank_ratios": bf.rank_ratios, "approximate": bf.approximate}
        rec["audit_lifted"] = outcome.audit_lifted.to_dict()
        rec["audit_recovered"] = outcome.audit_recovered.to_dict()
    return rec


def _rtag(r_min: float) -> str:
    return f"{r_min:g}"


def write_run(out_dir: str | Path, outs: Sequence[CellOutcome], run_config: RunConfig,
              seed: int, snapshot_realization: int = 0) -> Path:
    out = Path(out_dir)
    (out / "solutions").mkdir(parents=True, exist_ok=True)
    results = [o.result for o in outs]
    (out / "results.csv").write_text(results_csv(results))
    (out / "aggregate.csv").write_text(aggregate_csv(aggregate(results)))
    by_scheme_r: dict[tuple[str, float], list[CellOutcome]] = {}
    for o in outs:
        by_scheme_r.setdefault((o.result.scheme, o.result.r_min), []).append(o)
        r = o.result
        stem = f"{r.scheme}_{_rtag(r.r_min)}_{r.realization}"
        if o.trace is not None:
            (out / f"trace_{stem}.csv").write_text(o.trace.to_csv())
        (out / "solutions" / f"{stem}.json").write_text(json.dumps(solution_record(o, seed), indent=1))
    space = Beamspace.from_config(run_config.scenario)
    for (scheme, r_min), cells in by_scheme_r.items():
        pick = [c for c in cells if c.result.realization == snapshot_realization and c.lifted is not None]
        if pick:
            (out / f"beampattern_{scheme}_{_rtag(r_min)}.csv").write_text(beampattern_snapshot(pick[0], space))
    manifest = {
        "artifact": "nomaisac",
        "version": __version__,
        "seed": seed,
        "config": run_config.to_dict(),
        "snapshot_realization": snapshot_realization,
        "n_cells": len(outs),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


def default_jobs() -> int:
    return max(1, os.cpu_count() or 1)
