"""Modeling layer and solver wrapper for the convex subproblems.

Programs are stated over complex Hermitian PSD matrices and bounded real
scalars.  Every affine functional of a Hermitian variable ``W`` is written
as ``Re tr(C W)`` for a Hermitian coefficient ``C``.  The objective is a sum
of squared affine functionals plus one affine functional, which keeps every
program convex by construction.

``solve`` realifies the Hermitian variables, builds the conic standard form
and hands it to Clarabel (an interior-point solver).  All factor-of-two
bookkeeping of the realification lives in this module.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import clarabel
import numpy as np
import scipy.sparse as sp

Coef = Union[np.ndarray, float]

HERMITIAN_TOL = 1e-10


# ---------------------------------------------------------------------------
# realification
# ---------------------------------------------------------------------------

def embed_hermitian(H: np.ndarray) -> np.ndarray:
    """Real symmetric embedding ``[[Re H, -Im H], [Im H, Re H]]``.

    The embedding is PSD iff ``H`` is, has trace ``2 tr(H)`` and repeats every
    eigenvalue of ``H`` twice.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    scale = max(1.0, float(np.abs(H).max(initial=0.0)))
    if np.abs(H - H.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian")
    X, Y = H.real, H.imag
    return np.block([[X, -Y], [Y, X]])


def extract_hermitian(E: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed_hermitian` (averages the redundant blocks)."""
    E = np.asarray(E, dtype=float)
    n = E.shape[0] // 2
    X = 0.5 * (E[:n, :n] + E[n:, n:])
    Y = 0.5 * (E[n:, :n] - E[:n, n:])
    H = X + 1j * Y
    return 0.5 * (H + H.conj().T)


def realify_vector(a: np.ndarray) -> np.ndarray:
    """``[Re a; Im a]``, for which ``v^T embed(R) v == a^H R a``."""
    a = np.asarray(a, dtype=complex)
    return np.concatenate([a.real, a.imag])


def real_inner(C: np.ndarray, W: np.ndarray) -> float:
    """``Re tr(C W)`` evaluated through the embedding: ``tr(emb C emb W) / 2``."""
    return 0.5 * float(np.sum(embed_hermitian(C) * embed_hermitian(W).T))


@functools.lru_cache(maxsize=None)
def _triu(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, 1)


def n_params(dim: int) -> int:
    return dim * dim


def hermitian_coeffs(C: np.ndarray) -> np.ndarray:
    """Coefficient vector ``c`` with ``Re tr(C W) = c @ pack(W)``."""
    C = np.asarray(C, dtype=complex)
    iu = _triu(C.shape[0])
    return np.concatenate([C.diagonal().real, 2.0 * C[iu].real, 2.0 * C[iu].imag])


def pack(W: np.ndarray) -> np.ndarray:
    """Real parameters of a Hermitian matrix: diagonal, then upper real, then upper imag."""
    W = np.asarray(W, dtype=complex)
    iu = _triu(W.shape[0])
    return np.concatenate([W.diagonal().real, W[iu].real, W[iu].imag])


def unpack(p: np.ndarray, dim: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    iu = _triu(dim)
    m = len(iu[0])
    W = np.zeros((dim, dim), dtype=complex)
    W[iu] = p[dim:dim + m] + 1j * p[dim + m:]
    W = W + W.conj().T
    W[np.diag_indices(dim)] = p[:dim]
    return W


def _svec_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    # Clarabel ordering: upper triangle, column by column
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def svec(S: np.ndarray) -> np.ndarray:
    rows, cols = _svec_indices(S.shape[0])
    scale = np.where(rows == cols, 1.0, math.sqrt(2.0))
    return scale * S[rows, cols]


@functools.lru_cache(maxsize=None)
def _embedding_operator(dim: int) -> sp.csc_matrix:
    """Sparse map from packed parameters to ``svec(embed_hermitian(W))``."""
    cols = []
    for m in range(n_params(dim)):
        e = np.zeros(n_params(dim))
        e[m] = 1.0
        cols.append(svec(embed_hermitian(unpack(e, dim))))
    return sp.csc_matrix(np.column_stack(cols))


# ---------------------------------------------------------------------------
# modeling layer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HermitianVar:
    name: str
    dim: int


@dataclass(frozen=True)
class ScalarVar:
    name: str
    lower: float | None = None


@dataclass(frozen=True)
class Affine:
    """``sum_v <coef_v, v> + constant``; matrix coefficients act as ``Re tr(C W)``."""

    terms: Mapping[str, Coef] = field(default_factory=dict)
    constant: float = 0.0

    def __add__(self, other: "Affine") -> "Affine":
        terms = dict(self.terms)
        for name, coef in other.terms.items():
            terms[name] = terms[name] + coef if name in terms else coef
        return Affine(terms, self.constant + other.constant)

    def __neg__(self) -> "Affine":
        return self.scale(-1.0)

    def __sub__(self, other: "Affine") -> "Affine":
        return self + (-other)

    def scale(self, c: float) -> "Affine":
        return Affine({k: c * v for k, v in self.terms.items()}, c * self.constant)

    def evaluate(self, values: Mapping[str, Coef]) -> float:
        total = self.constant
        for name, coef in self.terms.items():
            x = values[name]
            if np.ndim(coef) == 0:
                total += float(coef) * float(x)
            else:
                total += float(np.real(np.vdot(np.asarray(coef).conj().T, x)))
        return total


@dataclass(frozen=True)
class Constraint:
    expr: Affine
    sense: str  # ">=", "<=" or "==", compared against zero
    label: str = ""

    def __post_init__(self):
        if self.sense not in (">=", "<=", "=="):
            raise ValueError(f"unknown constraint sense {self.sense!r}")

    def violation(self, values: Mapping[str, Coef]) -> float:
        v = self.expr.evaluate(values)
        if self.sense == ">=":
            return max(0.0, -v)
        if self.sense == "<=":
            return max(0.0, v)
        return abs(v)


@dataclass(frozen=True)
class ConvexProgram:
    psd_vars: tuple[HermitianVar, ...]
    scalar_vars: tuple[ScalarVar, ...] = ()
    squares: tuple[Affine, ...] = ()
    linear: Affine = field(default_factory=Affine)
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        names = [v.name for v in self.psd_vars] + [v.name for v in self.scalar_vars]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        dims = {v.name: v.dim for v in self.psd_vars}
        scalars = {v.name for v in self.scalar_vars}
        exprs = list(self.squares) + [self.linear] + [c.expr for c in self.constraints]
        for expr in exprs:
            for name, coef in expr.terms.items():
                if name in dims:
                    if np.shape(coef) != (dims[name], dims[name]):
                        raise ValueError(f"coefficient for {name} has shape {np.shape(coef)}")
                elif name in scalars:
                    if np.ndim(coef) != 0:
                        raise ValueError(f"scalar variable {name} needs a scalar coefficient")
                else:
                    raise ValueError(f"undeclared variable {name!r}")

    def objective_value(self, values: Mapping[str, Coef]) -> float:
        return sum(e.evaluate(values) ** 2 for e in self.squares) + self.linear.evaluate(values)

    def max_violation(self, values: Mapping[str, Coef]) -> float:
        worst = max((c.violation(values) for c in self.constraints), default=0.0)
        for v in self.scalar_vars:
            if v.lower is not None:
                worst = max(worst, v.lower - float(values[v.name]))
        return worst


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class ConicSolution:
    status: Status
    matrices: dict[str, np.ndarray]
    scalars: dict[str, float]
    objective: float
    residuals: dict[str, float]
    iterations: int = 0
    solve_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    def values(self) -> dict[str, Coef]:
        return {**self.matrices, **self.scalars}


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

class _Layout:
    """Column offsets of each variable in the stacked real decision vector."""

    def __init__(self, program: ConvexProgram):
        self.offsets: dict[str, int] = {}
        self.dims: dict[str, int] = {}
        pos = 0
        for v in program.psd_vars:
            self.offsets[v.name] = pos
            self.dims[v.name] = v.dim
            pos += n_params(v.dim)
        for v in program.scalar_vars:
            self.offsets[v.name] = pos
            pos += 1
        self.n_base = pos
        self.n_aux = len(program.squares)
        self.n = pos + self.n_aux

    def row(self, expr: Affine) -> tuple[np.ndarray, np.ndarray]:
        idx, val = [], []
        for name, coef in expr.terms.items():
            off = self.offsets[name]
            if name in self.dims:
                c = hermitian_coeffs(coef)
                nz = np.flatnonzero(c)
                idx.append(off + nz)
                val.append(c[nz])
            elif coef != 0.0:
                idx.append(np.array([off]))
                val.append(np.array([float(coef)]))
        if not idx:
            return np.zeros(0, dtype=int), np.zeros(0)
        idx_all = np.concatenate(idx)
        val_all = np.concatenate(val)
        # merge duplicates so that repeated variable references add up
        uniq, inv = np.unique(idx_all, return_inverse=True)
        return uniq, np.bincount(inv, weights=val_all)


def _standard_form(program: ConvexProgram):
    lay = _Layout(program)
    rows: list[tuple[np.ndarray, np.ndarray]] = []
    b: list[float] = []
    zero_rows = 0
    # squares: t_l - (g_l x + k_l) = 0
    for l, expr in enumerate(program.squares):
        idx, val = lay.row(expr)
        rows.append((np.append(idx, lay.n_base + l), np.append(-val, 1.0)))
        b.append(expr.constant)
        zero_rows += 1
    for c in program.constraints:
        if c.sense != "==":
            continue
        idx, val = lay.row(c.expr)
        rows.append((idx, val))
        b.append(-c.expr.constant)
        zero_rows += 1
    nonneg_rows = 0
    for c in program.constraints:
        if c.sense == "==":
            continue
        idx, val = lay.row(c.expr)
        if c.sense == ">=":
            rows.append((idx, -val))
            b.append(c.expr.constant)
        else:
            rows.append((idx, val))
            b.append(-c.expr.constant)
        nonneg_rows += 1
    for v in program.scalar_vars:
        if v.lower is not None:
            rows.append((np.array([lay.offsets[v.name]]), np.array([-1.0])))
            b.append(-v.lower)
            nonneg_rows += 1

    data, ri, ci = [], [], []
    for r, (idx, val) in enumerate(rows):
        ri.append(np.full(len(idx), r))
        ci.append(idx)
        data.append(val)
    A_lin = sp.csc_matrix(
        (np.concatenate(data) if data else np.zeros(0),
         (np.concatenate(ri) if ri else np.zeros(0, int), np.concatenate(ci) if ci else np.zeros(0, int))),
        shape=(len(rows), lay.n),
    )
    blocks = [A_lin]
    cones: list = []
    if zero_rows:
        cones.append(clarabel.ZeroConeT(zero_rows))
    if nonneg_rows:
        cones.append(clarabel.NonnegativeConeT(nonneg_rows))
    for v in program.psd_vars:
        E = _embedding_operator(v.dim)
        off = lay.offsets[v.name]
        blk = sp.hstack([
            sp.csc_matrix((E.shape[0], off)),
            -E,
            sp.csc_matrix((E.shape[0], lay.n - off - E.shape[1])),
        ])
        blocks.append(blk)
        b.extend([0.0] * E.shape[0])
        cones.append(clarabel.PSDTriangleConeT(2 * v.dim))
    A = sp.vstack(blocks).tocsc()

    P = sp.csc_matrix(
        (np.full(lay.n_aux, 2.0), (np.arange(lay.n_base, lay.n), np.arange(lay.n_base, lay.n))),
        shape=(lay.n, lay.n),
    )
    q = np.zeros(lay.n)
    idx, val = lay.row(program.linear)
    q[idx] = val
    return lay, P, q, A, np.asarray(b, dtype=float), cones


_STATUS = {
    "Solved": Status.OPTIMAL,
    "PrimalInfeasible": Status.INFEASIBLE,
    "AlmostPrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.UNBOUNDED,
    "AlmostDualInfeasible": Status.UNBOUNDED,
}


# Clarabel is asked for this much more accuracy than the caller's contract.
INTERNAL_ACCURACY = 1e-2


def solve(program: ConvexProgram, tol: float = 1e-6, max_iter: int = 200) -> ConicSolution:
    """Solve ``program`` to tolerance ``tol``.

    ``Optimal`` carries a point whose scaled primal/dual residuals and relative
    duality gap are all at most ``tol``.  The solver targets
    ``tol * INTERNAL_ACCURACY``; a run that stalls short of that target but
    within ``tol`` is still ``Optimal``.  Anything else that is not an
    infeasibility certificate is ``NumericalFailure``.  Never raises.
    """
    lay, P, q, A, b, cones = _standard_form(program)
    inner = tol * INTERNAL_ACCURACY
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = inner
    settings.tol_gap_rel = inner
    settings.tol_feas = inner
    settings.max_iter = max_iter
    settings.max_threads = 1
    raw = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()

    name = str(raw.status).split(".")[-1]
    x = np.asarray(raw.x, dtype=float)
    matrices = {
        v.name: unpack(x[lay.offsets[v.name]:lay.offsets[v.name] + n_params(v.dim)], v.dim)
        for v in program.psd_vars
    }
    scalars = {v.name: float(x[lay.offsets[v.name]]) for v in program.scalar_vars}
    objective = float(raw.obj_val) + program.linear.constant
    gap = abs(raw.obj_val - raw.obj_val_dual) / max(1.0, abs(raw.obj_val))
    residuals = {"primal": float(raw.r_prim), "dual": float(raw.r_dual), "gap": float(gap)}

    status = _STATUS.get(name, Status.NUMERICAL_FAILURE)
    if status is Status.NUMERICAL_FAILURE and max(residuals.values()) <= tol:
        status = Status.OPTIMAL
    if status is Status.OPTIMAL and not np.all(np.isfinite(x)):
        status = Status.NUMERICAL_FAILURE
    return ConicSolution(
        status=status,
        matrices=matrices,
        scalars=scalars,
        objective=objective,
        residuals=residuals,
        iterations=int(raw.iterations),
        solve_seconds=float(raw.solve_time),
    )


# ---------------------------------------------------------------------------
# debug dump
# ---------------------------------------------------------------------------

def program_to_dict(program: ConvexProgram) -> dict:
    """Solver-independent description with coefficients in coordinate form.

    Matrix coefficients are given over the packed real parameters of each
    Hermitian variable (diagonal, upper-real, upper-imag).
    """
    lay = _Layout(program)

    def coo(expr: Affine) -> dict:
        idx, val = lay.row(expr)
        return {"index": idx.tolist(), "value": val.tolist(), "constant": expr.constant}

    return {
        "variables": [
            {"name": v.name, "kind": "hermitian_psd", "dim": v.dim, "offset": lay.offsets[v.name]}
            for v in program.psd_vars
        ] + [
            {"name": v.name, "kind": "scalar", "lower": v.lower, "offset": lay.offsets[v.name]}
            for v in program.scalar_vars
        ],
        "n_real_params": lay.n_base,
        "objective": {"squares": [coo(e) for e in program.squares], "linear": coo(program.linear)},
        "constraints": [
            {"label": c.label, "sense": c.sense, **coo(c.expr)} for c in program.constraints
        ],
    }
