"""Rank-one penalty: nuclear minus spectral norm and its affine majorizer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .conic import Affine


def hermitian_eigh(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs with eigenvalues descending and phase-normalized eigenvectors.

    Each eigenvector is rotated so that its largest-magnitude entry (first one
    on ties) is real and positive.
    """
    W = 0.5 * (W + W.conj().T)
    lam, U = np.linalg.eigh(W)
    lam, U = lam[::-1], U[:, ::-1]
    for j in range(U.shape[1]):
        col = U[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] != 0:
            U[:, j] = col * (abs(col[k]) / col[k])
    return lam, U


def principal_eigpair(W: np.ndarray) -> tuple[float, np.ndarray]:
    lam, U = hermitian_eigh(W)
    return float(lam[0]), U[:, 0]


def nuclear_minus_spectral(W: np.ndarray) -> float:
    """``||W||_* - ||W||_2`` for Hermitian PSD ``W``; zero iff rank <= 1."""
    lam = np.linalg.eigvalsh(0.5 * (W + W.conj().T))
    s = np.abs(lam)
    return float(s.sum() - s.max(initial=0.0))


def rank_one_ratio(W: np.ndarray) -> float:
    """``lambda_2 / lambda_1`` of a PSD matrix (0 for exact rank one)."""
    lam = np.sort(np.linalg.eigvalsh(0.5 * (W + W.conj().T)))[::-1]
    if lam[0] <= 0:
        raise ValueError("rank_one_ratio of a zero (or negative) matrix")
    if lam.size == 1:
        return 0.0
    return max(0.0, float(lam[1] / lam[0]))


def penalty_value(matrices: Sequence[np.ndarray]) -> float:
    return float(sum(nuclear_minus_spectral(W) for W in matrices))


@dataclass(frozen=True, eq=False)
class TaylorPoint:
    """Expansion points of ``-||W||_2`` for every rank-one-constrained matrix."""

    W: np.ndarray        # (K, N, N)
    Wr: np.ndarray       # (M, N, N)
    u_max: np.ndarray    # (K + M, N), unit norm
    lam_max: np.ndarray  # (K + M,)

    @classmethod
    def from_matrices(cls, W: np.ndarray, Wr: np.ndarray) -> "TaylorPoint":
        mats = list(W) + list(Wr)
        pairs = [principal_eigpair(M) for M in mats]
        n = W.shape[-1] if len(W) else Wr.shape[-1]
        u = np.array([p[1] for p in pairs]).reshape(len(mats), n)
        lam = np.array([p[0] for p in pairs], dtype=float)
        return cls(np.asarray(W), np.asarray(Wr), u, lam)

    def matrices(self) -> list[np.ndarray]:
        return list(self.W) + list(self.Wr)

    def scaled(self, c: float) -> "TaylorPoint":
        return TaylorPoint(c * self.W, c * self.Wr, self.u_max, c * self.lam_max)


def taylor_upper_bound(var: str, point: np.ndarray, u: np.ndarray | None = None,
                       lam: float | None = None) -> Affine:
    """Affine majorizer of ``-||W||_2`` expanded at ``point``.

    ``-lam - Re tr(u u^H (W - point))`` with ``(lam, u)`` the principal
    eigenpair of ``point``; exact at ``W = point``.
    """
    if u is None or lam is None:
        lam, u = principal_eigpair(point)
    uuH = np.outer(u, u.conj())
    const = -lam + float(np.real(u.conj() @ point @ u))
    return Affine({var: -uuH}, const)


def taylor_value(W: np.ndarray, point: np.ndarray) -> float:
    return taylor_upper_bound("W", point).evaluate({"W": W})
