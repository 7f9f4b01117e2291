"""ULA steering vectors and transmit beampattern metrics.

Angles are in degrees at every interface and are converted to radians only
inside the trigonometric evaluation.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

POWER_DB_FLOOR = -120.0


@dataclass(frozen=True, eq=False)
class AngularGrid:
    angles: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.size < 2 or a[0] != -90.0 or a[-1] != 90.0 or np.any(np.diff(a) <= 0):
            raise ValueError("grid must be strictly increasing from -90 to 90 with L >= 2")
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)

    @classmethod
    def uniform(cls, spacing: float = 1.0) -> "AngularGrid":
        n = max(2, int(round(180.0 / spacing)) + 1)
        return cls(np.linspace(-90.0, 90.0, n))

    def __len__(self) -> int:
        return self.angles.size


@dataclass(frozen=True, eq=False)
class DesiredPattern:
    values: np.ndarray
    directions: tuple[float, ...]
    beam_width: float


def steering_vector(theta_deg: float, n_antennas: int, spacing_ratio: float = 0.5) -> np.ndarray:
    n = np.arange(n_antennas)
    return np.exp(2j * np.pi * spacing_ratio * n * np.sin(np.deg2rad(theta_deg)))


def steering_matrix(grid: AngularGrid, n_antennas: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Columns ``a(theta_l)``, shape ``(N, L)``."""
    n = np.arange(n_antennas)[:, None]
    phase = 2 * np.pi * spacing_ratio * n * np.sin(np.deg2rad(grid.angles))[None, :]
    return np.exp(1j * phase)


def desired_pattern(grid: AngularGrid, directions: Sequence[float], beam_width: float) -> DesiredPattern:
    """Rectangular pattern: 1 inside any closed window ``[phi - bw/2, phi + bw/2]``."""
    if not beam_width > 0:
        raise ValueError("beam_width must be > 0")
    theta = grid.angles
    on = np.zeros(theta.size, dtype=bool)
    for phi in directions:
        on |= (theta >= phi - beam_width / 2) & (theta <= phi + beam_width / 2)
    return DesiredPattern(on.astype(float), tuple(float(d) for d in directions), float(beam_width))


def beampattern(R: np.ndarray, steering: np.ndarray, feas_tol: float | None = None) -> np.ndarray:
    """``P(theta_l) = a_l^H R a_l`` for every grid column of ``steering``.

    With ``feas_tol`` set, a value below ``-feas_tol * max(1, max|P|)`` raises,
    flagging an input that is not PSD.
    """
    P = np.real(np.einsum("nl,nm,ml->l", steering.conj(), R, steering))
    if feas_tol is not None:
        scale = max(1.0, float(np.abs(P).max(initial=0.0)))
        if P.min(initial=0.0) < -feas_tol * scale:
            raise ValueError(f"negative beampattern value {P.min():.3e}: covariance is not PSD")
    return P


def beampattern_operator(steering: np.ndarray) -> np.ndarray:
    """Rank-one matrices ``a_l a_l^H`` stacked along axis 0."""
    return np.einsum("nl,ml->lnm", steering, steering.conj())


def matching_error(delta: float, R: np.ndarray, desired: DesiredPattern, steering: np.ndarray) -> float:
    return float(np.sum((delta * desired.values - beampattern(R, steering)) ** 2))


def optimal_scale(R: np.ndarray, desired: DesiredPattern, steering: np.ndarray) -> float:
    """Least-squares scale ``delta >= 0`` for a fixed covariance."""
    phi = desired.values
    denom = float(phi @ phi)
    if denom == 0:
        raise ValueError("desired pattern is identically zero")
    return max(0.0, float(phi @ beampattern(R, steering)) / denom)


def power_db(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10 * np.log10(np.where(p > 0, p, 0.0))
    return np.maximum(out, POWER_DB_FLOOR)


BEAMPATTERN_HEADER = ("theta_deg", "desired", "power_linear", "power_db")


def beampattern_csv(grid: AngularGrid, desired_values: np.ndarray, power: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BEAMPATTERN_HEADER)
    for th, d, p, pdb in zip(grid.angles, desired_values, power, power_db(power)):
        w.writerow([repr(float(th)), repr(float(d)), repr(float(p)), repr(float(pdb))])
    return buf.getvalue()
