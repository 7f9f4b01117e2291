"""Penalty-based SCA driver (two loops: Taylor-point updates, then rho reduction)."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .array import matching_error
from .conic import Status, solve
from .penalty import TaylorPoint, penalty_value, taylor_upper_bound  # noqa: F401  (re-exported)
from .schemes import (
    Beamspace,
    LiftedSolution,
    SchemeKind,
    assemble_covariance,
    build_penalized_subproblem,
    build_relaxation,
)
from .scenario import ChannelSet, ScenarioConfig, SolverConfig

RHO_FLOOR = 1e-8

TRACE_HEADER = (
    "outer_iter", "inner_iter", "rho", "penalized_objective",
    "matching_error", "penalty_value", "solve_seconds",
)


class InfeasibleInstance(RuntimeError):
    """The relaxation (hence the whole instance) admits no feasible point."""


class SolverFailure(RuntimeError):
    """The conic solver failed before any usable iterate existed."""


@dataclass
class TraceRow:
    outer_iter: int
    inner_iter: int
    rho: float
    penalized_objective: float
    matching_error: float
    penalty_value: float
    solve_seconds: float


@dataclass
class IterationTrace:
    rows: list[TraceRow] = field(default_factory=list)
    status: str = "running"          # converged | max_outer | degraded
    outer_cap_hit: bool = False
    inner_cap_hits: int = 0
    rho_floor_hit: bool = False

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def n_outer(self) -> int:
        return 1 + max((r.outer_iter for r in self.rows), default=-1)

    def outer_exit_rows(self) -> list[TraceRow]:
        last = {}
        for r in self.rows:
            last[r.outer_iter] = r
        return [last[k] for k in sorted(last)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.rows:
            w.writerow([r.outer_iter, r.inner_iter, repr(r.rho), repr(r.penalized_objective),
                        repr(r.matching_error), repr(r.penalty_value), f"{r.solve_seconds:.6f}"])
        return buf.getvalue()


def lifted_matching_error(sol: LiftedSolution, space: Beamspace) -> float:
    return matching_error(sol.delta, assemble_covariance(sol), space.desired, space.steering)


def penalized_objective(sol: LiftedSolution, space: Beamspace, rho: float) -> float:
    """True (non-linearized) penalized objective in physical units."""
    return lifted_matching_error(sol, space) + penalty_value(sol.rank_one_matrices()) / rho


def initialize(channels: ChannelSet, config: ScenarioConfig, space: Beamspace, kind: SchemeKind,
               solver_config: SolverConfig | None = None) -> LiftedSolution:
    """Solve the scheme's relaxation; its solution is the first expansion point."""
    tol = (solver_config or SolverConfig()).solver_tol
    sp = build_relaxation(kind, channels, config, space)
    sol = solve(sp.program, tol)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleInstance(f"{kind.value} relaxation infeasible")
    if not sol.ok:
        raise SolverFailure(f"{kind.value} relaxation: {sol.status.value}")
    return sp.lifted(sol)


def run_algorithm1(
    channels: ChannelSet,
    config: ScenarioConfig,
    solver_config: SolverConfig,
    space: Beamspace,
    kind: SchemeKind = SchemeKind.NOMA_SCA,
    start: LiftedSolution | None = None,
) -> tuple[LiftedSolution, IterationTrace]:
    """Run the penalty/SCA iterations for ``NomaSca`` or ``CommOnly``.

    Raises :class:`InfeasibleInstance` when the relaxation is infeasible and
    :class:`SolverFailure` when no iterate could be produced at all.  A solver
    failure later on returns the last good iterate with status ``degraded``.
    """
    if not kind.uses_sca:
        raise ValueError(f"{kind.value} is not solved by the SCA driver")
    sc = solver_config
    current = start if start is not None else initialize(channels, config, space, kind, sc)
    trace = IterationTrace()
    rho = sc.rho_init

    for outer in range(sc.max_outer_iters):
        f_prev = penalized_objective(current, space, rho)
        for inner in range(sc.max_inner_iters):
            point = TaylorPoint.from_matrices(current.W, current.Wr)
            sp = build_penalized_subproblem(kind, channels, config, space, point, rho)
            t0 = time.perf_counter()
            sol = solve(sp.program, sc.solver_tol)
            elapsed = time.perf_counter() - t0
            if not sol.ok:
                trace.status = "degraded"
                return current, trace
            current = sp.lifted(sol)
            f_new = penalized_objective(current, space, rho)
            trace.rows.append(TraceRow(
                outer, inner, rho, f_new, lifted_matching_error(current, space),
                penalty_value(current.rank_one_matrices()), elapsed,
            ))
            reduction = abs(f_prev - f_new) / max(abs(f_prev), np.finfo(float).tiny)
            f_prev = f_new
            if reduction < sc.inner_tol:
                break
        else:
            trace.inner_cap_hits += 1

        if penalty_value(current.rank_one_matrices()) <= sc.penalty_tol:
            trace.status = "converged"
            return current, trace
        rho = sc.rho_factor * rho
        if rho < RHO_FLOOR:
            rho = RHO_FLOOR
            trace.rho_floor_hit = True

    trace.status = "max_outer"
    trace.outer_cap_hit = True
    return current, trace


def rho_schedule(solver_config: SolverConfig, n: int) -> list[float]:
    """First ``n`` penalty factors visited by the outer loop."""
    out, rho = [], solver_config.rho_init
    for _ in range(n):
        out.append(rho)
        rho = max(rho * solver_config.rho_factor, RHO_FLOOR)
    return out
