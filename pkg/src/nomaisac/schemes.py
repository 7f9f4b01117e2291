"""Convex programs for the NOMA-inspired scheme and the benchmarks.

Programs are built in normalized units so the solver sees O(1) data:
matrix variables are ``W / P_t``, the scale is ``delta / P_t`` and channels
are whitened as ``h * sqrt(P_t) / sigma_n``.  The matching-error objective
is therefore ``error / P_t**2``.  :meth:`SchemeProgram.lifted` maps a solver
result back to physical units.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .array import AngularGrid, DesiredPattern, beampattern_operator, desired_pattern, steering_matrix
from .conic import Affine, ConicSolution, Constraint, ConvexProgram, HermitianVar, ScalarVar
from .penalty import TaylorPoint, taylor_upper_bound
from .scenario import ChannelSet, ScenarioConfig


class SchemeKind(enum.Enum):
    NOMA_SDR = "noma_sdr"
    NOMA_SCA = "noma_sca"
    IDEAL_ISAC = "ideal"
    CONVENTIONAL_ISAC = "conventional"
    COMM_ONLY = "comm_only"

    @classmethod
    def from_name(cls, name: str) -> "SchemeKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown scheme {name!r}; expected one of {[k.value for k in cls]}")

    @property
    def is_noma(self) -> bool:
        return self in (SchemeKind.NOMA_SDR, SchemeKind.NOMA_SCA)

    @property
    def uses_sca(self) -> bool:
        return self in (SchemeKind.NOMA_SCA, SchemeKind.COMM_ONLY)

    @property
    def has_sensing(self) -> bool:
        return self is not SchemeKind.COMM_ONLY


@dataclass(frozen=True, eq=False)
class Beamspace:
    """Angular grid, steering matrix and desired pattern shared by all builders."""

    grid: AngularGrid
    steering: np.ndarray        # (N, L)
    desired: DesiredPattern
    outer: np.ndarray           # (L, N, N): a_l a_l^H

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "Beamspace":
        grid = AngularGrid.uniform(config.grid_spacing)
        A = steering_matrix(grid, config.n_antennas, config.antenna_spacing_ratio)
        desired = desired_pattern(grid, config.target_directions, config.beam_width)
        return cls(grid, A, desired, beampattern_operator(A))


@dataclass
class LiftedSolution:
    W: np.ndarray                 # (K, N, N)
    Wr: np.ndarray                # (M, N, N); empty unless NOMA
    R_resid: np.ndarray | None    # residual sensing covariance (NOMA) or full sensing covariance
    delta: float
    objective_value: float
    scheme: SchemeKind

    def matrices(self) -> list[np.ndarray]:
        parts = list(self.W) + list(self.Wr)
        if self.R_resid is not None:
            parts.append(self.R_resid)
        return parts

    def rank_one_matrices(self) -> list[np.ndarray]:
        return list(self.W) + list(self.Wr)


def assemble_covariance(solution: LiftedSolution) -> np.ndarray:
    """Total transmit covariance: all communication, virtual and residual parts."""
    n = solution.W.shape[-1] if solution.W.size else solution.Wr.shape[-1]
    R = np.zeros((n, n), dtype=complex)
    for part in solution.matrices():
        R = R + part
    return R


def sinr_target(r_min_bits) -> np.ndarray:
    return 2.0 ** np.asarray(r_min_bits, dtype=float) - 1.0


# ---------------------------------------------------------------------------
# program construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SchemeProgram:
    kind: SchemeKind
    program: ConvexProgram
    power: float
    n_users: int
    n_beams: int
    resid_name: str | None
    penalty_weight: float = 0.0       # normalized weight on the linearized penalty
    meta: dict = field(default_factory=dict)

    def lifted(self, sol: ConicSolution) -> LiftedSolution:
        m = sol.matrices
        p = self.power
        n = self.program.psd_vars[0].dim
        W = np.array([p * m[f"W{k}"] for k in range(self.n_users)]).reshape(self.n_users, n, n)
        Wr = np.array([p * m[f"Wr{i}"] for i in range(self.n_beams)]).reshape(self.n_beams, n, n)
        R = p * m[self.resid_name] if self.resid_name else None
        return LiftedSolution(
            W=W, Wr=Wr, R_resid=R,
            delta=p * sol.scalars["delta"],
            objective_value=p * p * sol.objective,
            scheme=self.kind,
        )


def _whitened(channels: ChannelSet, config: ScenarioConfig) -> np.ndarray:
    return channels.h * np.sqrt(config.tx_power / config.noise_power)


def _build(kind: SchemeKind, channels: ChannelSet, config: ScenarioConfig, space: Beamspace,
           n_beams: int, resid: str | None, resid_in_rate: bool, sic: bool,
           full_power: bool) -> SchemeProgram:
    n = config.n_antennas
    K = channels.n_users
    users = [f"W{k}" for k in range(K)]
    beams = [f"Wr{i}" for i in range(n_beams)]
    mats = users + beams + ([resid] if resid else [])
    psd = tuple(HermitianVar(name, n) for name in mats)

    phi = space.desired.values
    squares = tuple(
        Affine({"delta": float(phi[l]), **{v: -space.outer[l] for v in mats}})
        for l in range(len(phi))
    )

    gamma = sinr_target(config.rate_floors()[:K]) if K else np.zeros(0)
    hbar = _whitened(channels, config)
    cons = []
    eye = np.eye(n)
    cons.append(Constraint(Affine({v: eye for v in mats}, -1.0), "==" if full_power else "<=", "power"))
    for k in range(K):
        g = hbar[k]
        Q = np.outer(g, g.conj()) / float(np.real(g.conj() @ g))
        terms = {users[k]: Q}
        for i in range(K):
            if i != k:
                terms[users[i]] = -gamma[k] * Q
        if resid and resid_in_rate:
            terms[resid] = -gamma[k] * Q
        cons.append(Constraint(Affine(terms, -gamma[k] / float(np.real(g.conj() @ g))), ">=", f"rate{k}"))
        if sic:
            for i, b in enumerate(beams):
                cons.append(Constraint(Affine({b: Q, users[k]: -Q}), ">=", f"sic{k}_{i}"))

    program = ConvexProgram(
        psd_vars=psd,
        scalar_vars=(ScalarVar("delta", 0.0),),
        squares=squares,
        constraints=tuple(cons),
    )
    return SchemeProgram(kind, program, config.tx_power, K, n_beams, resid)


# With a free scale delta, an inequality budget lets the optimizer shrink the
# matching error by radiating less power; the full budget is spent by default.

def build_noma_sdr(channels: ChannelSet, config: ScenarioConfig, space: Beamspace,
                   kind: SchemeKind = SchemeKind.NOMA_SDR, full_power: bool = True) -> SchemeProgram:
    """Relaxation with rank constraints dropped; SIC and residual interference kept."""
    return _build(kind, channels, config, space, config.n_virtual_beams, "Rt",
                  resid_in_rate=True, sic=True, full_power=full_power)


def build_ideal_isac(channels: ChannelSet, config: ScenarioConfig, space: Beamspace,
                     full_power: bool = True) -> SchemeProgram:
    return _build(SchemeKind.IDEAL_ISAC, channels, config, space, 0, "Rr",
                  resid_in_rate=False, sic=False, full_power=full_power)


def build_conventional_isac(channels: ChannelSet, config: ScenarioConfig, space: Beamspace,
                            full_power: bool = True) -> SchemeProgram:
    return _build(SchemeKind.CONVENTIONAL_ISAC, channels, config, space, 0, "Rr",
                  resid_in_rate=True, sic=False, full_power=full_power)


def build_comm_only(channels: ChannelSet, config: ScenarioConfig, space: Beamspace,
                    full_power: bool = True) -> SchemeProgram:
    return _build(SchemeKind.COMM_ONLY, channels, config, space, 0, None,
                  resid_in_rate=False, sic=False, full_power=full_power)


def build_relaxation(kind: SchemeKind, channels: ChannelSet, config: ScenarioConfig,
                     space: Beamspace, full_power: bool = True) -> SchemeProgram:
    """SDR program of any scheme (the SCA schemes share their relaxation)."""
    if kind.is_noma:
        return build_noma_sdr(channels, config, space, kind, full_power)
    return {
        SchemeKind.IDEAL_ISAC: build_ideal_isac,
        SchemeKind.CONVENTIONAL_ISAC: build_conventional_isac,
        SchemeKind.COMM_ONLY: build_comm_only,
    }[kind](channels, config, space, full_power)


def build_penalized_subproblem(kind: SchemeKind, channels: ChannelSet, config: ScenarioConfig,
                               space: Beamspace, taylor: TaylorPoint, rho: float,
                               full_power: bool = True) -> SchemeProgram:
    """Relaxation plus ``(1/rho) * sum(||W||_* + majorizer of -||W||_2)``.

    ``taylor`` holds physical-unit matrices.  In normalized units the penalty
    weight becomes ``1 / (rho * P_t)``.
    """
    if not rho > 0:
        raise ValueError("rho must be > 0")
    base = build_relaxation(kind, channels, config, space, full_power)
    p = config.tx_power
    names = [f"W{k}" for k in range(base.n_users)] + [f"Wr{i}" for i in range(base.n_beams)]
    points = taylor.matrices()
    if len(points) != len(names):
        raise ValueError(f"Taylor point has {len(points)} matrices, program needs {len(names)}")
    weight = 1.0 / (rho * p)
    n = config.n_antennas
    linear = Affine()
    for j, name in enumerate(names):
        nuclear = Affine({name: np.eye(n)})
        maj = taylor_upper_bound(name, points[j] / p, taylor.u_max[j], taylor.lam_max[j] / p)
        linear = linear + (nuclear + maj).scale(weight)
    program = ConvexProgram(
        psd_vars=base.program.psd_vars,
        scalar_vars=base.program.scalar_vars,
        squares=base.program.squares,
        linear=linear,
        constraints=base.program.constraints,
    )
    return SchemeProgram(kind, program, p, base.n_users, base.n_beams, base.resid_name,
                         penalty_weight=weight)
