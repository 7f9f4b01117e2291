"""Rank-one recovery, achievable rates, SIC margins and feasibility audits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .penalty import principal_eigpair, rank_one_ratio
from .scenario import ChannelSet, ScenarioConfig, SolverConfig
from .schemes import LiftedSolution, SchemeKind


@dataclass
class BeamformerSet:
    w: np.ndarray                  # (K, N)
    wr: np.ndarray                 # (M, N)
    R_resid: np.ndarray | None
    scheme: SchemeKind
    rank_ratios: list[float] = field(default_factory=list)
    approximate: bool = False

    def covariance(self) -> np.ndarray:
        n = self.w.shape[1] if self.w.size else self.wr.shape[1]
        R = self.w.T @ self.w.conj() + self.wr.T @ self.wr.conj()
        R = R.reshape(n, n)
        if self.R_resid is not None:
            R = R + self.R_resid
        return R


def recover_beamformers(lifted: LiftedSolution, rank_tol: float = 1e-3) -> BeamformerSet:
    """``w = sqrt(lambda_1) u_1`` per rank-one-constrained matrix."""

    def beam(W):
        lam, u = principal_eigpair(W)
        if lam <= 0:
            raise ValueError("cannot recover a beam from a matrix with no positive eigenvalue")
        return np.sqrt(lam) * u, rank_one_ratio(W)

    n = lifted.W.shape[-1]
    ws, ratios = [], []
    for W in lifted.rank_one_matrices():
        w, r = beam(W)
        ws.append(w)
        ratios.append(r)
    K = lifted.W.shape[0]
    w_all = np.array(ws, dtype=complex).reshape(len(ws), n)
    return BeamformerSet(
        w=w_all[:K],
        wr=w_all[K:],
        R_resid=lifted.R_resid,
        scheme=lifted.scheme,
        rank_ratios=ratios,
        approximate=any(r > rank_tol for r in ratios),
    )


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

@dataclass
class RateEntry:
    rate_bits: float
    sinr_linear: float
    signal: float
    inter_user: float
    sensing_removed: float
    sensing_residual: float
    noise: float


def _quad(h: np.ndarray, M: np.ndarray) -> float:
    return float(np.real(h.conj() @ M @ h))


def _rate_entry(scheme: SchemeKind, signal: float, inter: float, virtual: float,
                sensing: float, noise: float) -> RateEntry:
    # virtual: power of the SIC-removable beams; sensing: remaining sensing covariance
    if scheme.is_noma:
        removed, residual = virtual, sensing
    elif scheme is SchemeKind.IDEAL_ISAC:
        removed, residual = virtual + sensing, 0.0
    elif scheme is SchemeKind.CONVENTIONAL_ISAC:
        removed, residual = 0.0, virtual + sensing
    else:
        removed, residual = 0.0, 0.0
    sinr = signal / (inter + residual + noise)
    return RateEntry(float(np.log2(1.0 + sinr)), sinr, signal, inter, removed, residual, noise)


def achievable_rate(channels: ChannelSet, bf: BeamformerSet, k: int, noise_power: float) -> RateEntry:
    h = channels.h[k]
    gains = np.abs(bf.w.conj() @ h) ** 2          # |h^H w_i|^2
    virtual = float(np.sum(np.abs(bf.wr.conj() @ h) ** 2))
    sensing = _quad(h, bf.R_resid) if bf.R_resid is not None else 0.0
    return _rate_entry(bf.scheme, float(gains[k]), float(gains.sum() - gains[k]),
                       virtual, sensing, noise_power)


def lifted_rate(channels: ChannelSet, lifted: LiftedSolution, k: int, noise_power: float) -> RateEntry:
    """Rate implied by the lifted matrices (the linearized constraint form)."""
    h = channels.h[k]
    gains = np.array([_quad(h, W) for W in lifted.W])
    virtual = sum(_quad(h, W) for W in lifted.Wr)
    sensing = _quad(h, lifted.R_resid) if lifted.R_resid is not None else 0.0
    return _rate_entry(lifted.scheme, float(gains[k]), float(gains.sum() - gains[k]),
                       virtual, sensing, noise_power)


def rate_report(channels: ChannelSet, bf: BeamformerSet, noise_power: float) -> list[RateEntry]:
    return [achievable_rate(channels, bf, k, noise_power) for k in range(channels.n_users)]


def sic_condition_check(channels: ChannelSet, bf: BeamformerSet) -> np.ndarray:
    """Margins ``|h_k^H w_r,i|^2 - |h_k^H w_k|^2`` with shape ``(K, M)``."""
    own = np.abs(np.einsum("kn,kn->k", bf.w.conj(), channels.h)) ** 2
    virt = np.abs(channels.h.conj() @ bf.wr.T) ** 2 if bf.wr.size else np.zeros((channels.n_users, 0))
    return virt - own[:, None]


def sic_passes(channels: ChannelSet, margins: np.ndarray, power: float, feas_tol: float) -> np.ndarray:
    scale = feas_tol * power * np.sum(np.abs(channels.h) ** 2, axis=1)
    return margins >= -scale[:, None]


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------

@dataclass
class FeasibilityReport:
    rate_bits: list[float]
    sinr_linear: list[float]
    rate_margins_bits: list[float]
    sic_margins: list[list[float]]
    power_margin_watts: float
    psd_min_eigs: list[float]
    rank_ratios: list[float]
    checks: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "rate_bits": self.rate_bits,
            "sinr_linear": self.sinr_linear,
            "rate_margins_bits": self.rate_margins_bits,
            "sic_margins": self.sic_margins,
            "power_margin_watts": self.power_margin_watts,
            "psd_min_eigs": self.psd_min_eigs,
            "rank_ratios": self.rank_ratios,
            "checks": self.checks,
            "passed": self.passed,
        }


def _safe_ratio(W: np.ndarray) -> float:
    try:
        return rank_one_ratio(W)
    except ValueError:
        return float("nan")


def feasibility_audit(channels: ChannelSet, solution: LiftedSolution | BeamformerSet,
                      config: ScenarioConfig, solver_config: SolverConfig | None = None,
                      require_rank_one: bool | None = None) -> FeasibilityReport:
    """Evaluate every constraint of the originating scheme; never raises on failure.

    Lifted solutions use the linearized rate form, beamformer sets the true
    rate formula.  Rank ratios gate the result only when ``require_rank_one``
    (default: lifted solutions of SCA schemes).
    """
    sc = solver_config or SolverConfig()
    tol = sc.feas_tol
    p_t = config.tx_power
    noise = config.noise_power
    K = channels.n_users
    floors = config.rate_floors()[:K]

    if isinstance(solution, LiftedSolution):
        scheme = solution.scheme
        rates = [lifted_rate(channels, solution, k, noise) for k in range(K)]
        own = np.array([_quad(channels.h[k], solution.W[k]) for k in range(K)])
        virt = np.array([[_quad(channels.h[k], Wr) for Wr in solution.Wr] for k in range(K)])
        sic = virt.reshape(K, len(solution.Wr)) - own[:, None]
        parts = solution.matrices()
        total = sum(float(np.trace(P).real) for P in parts)
        psd = [float(np.linalg.eigvalsh(0.5 * (P + P.conj().T))[0]) for P in parts]
        ratios = [_safe_ratio(W) for W in solution.rank_one_matrices()]
        if require_rank_one is None:
            require_rank_one = scheme.uses_sca
    else:
        scheme = solution.scheme
        rates = rate_report(channels, solution, noise)
        sic = sic_condition_check(channels, solution)
        total = float(np.trace(solution.covariance()).real)
        psd = []
        if solution.R_resid is not None:
            R = solution.R_resid
            psd.append(float(np.linalg.eigvalsh(0.5 * (R + R.conj().T))[0]))
        ratios = list(solution.rank_ratios)
        if require_rank_one is None:
            require_rank_one = False

    margins = [r.rate_bits - f for r, f in zip(rates, floors)]
    checks = {
        "rate": all(m >= -tol for m in margins),
        "sic": bool(np.all(sic_passes(channels, sic, p_t, tol))) if scheme.is_noma else True,
        "power": total <= p_t * (1 + tol),
        "psd": all(e >= -tol * p_t for e in psd),
    }
    if require_rank_one:
        checks["rank_one"] = all(r <= sc.rank_tol for r in ratios)
    return FeasibilityReport(
        rate_bits=[r.rate_bits for r in rates],
        sinr_linear=[r.sinr_linear for r in rates],
        rate_margins_bits=margins,
        sic_margins=sic.tolist(),
        power_margin_watts=p_t - total,
        psd_min_eigs=psd,
        rank_ratios=ratios,
        checks=checks,
    )
