"""
Direct sparse solves and condition-number estimates.

Constraint rows couple every node near a closed line, which makes a plain
sparse LU of the full matrix fill in badly.  Systems with constraint rows are
therefore factored as a low-rank row modification: the constraint rows are
swapped for identity rows (a sparse nine-point matrix with cheap LU), and the
true rows are restored through a small dense capacitance system.  Both paths
give the same solution; ``strategy="direct"`` forces the plain LU.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import LinearSystem, RowKind


class SingularSystemError(RuntimeError):
    pass


@dataclass
class SolveReport:
    solution: np.ndarray
    residual_norm: float
    nnz: int
    fill: int
    backward_error: float = 0.0
    cond_estimate: float | None = None

    def as_dict(self) -> dict:
        return {
            "residual_norm": self.residual_norm,
            "backward_error": self.backward_error,
            "nnz": self.nnz,
            "fill": self.fill,
            "cond_estimate": self.cond_estimate,
        }


def row_scaling(A: sp.spmatrix) -> np.ndarray:
    """Reciprocal infinity norms of the rows of ``A``."""
    norms = np.asarray(abs(A).max(axis=1).todense()).ravel()
    if np.any(norms == 0):
        raise SingularSystemError("matrix has an empty row")
    return 1.0 / norms


def equilibrate(A: sp.spmatrix) -> sp.csr_matrix:
    return (sp.diags(row_scaling(A)) @ A).tocsr()


def _splu(A):
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc


class Factorization:
    """Solves with ``A`` and ``A^T`` for a row-equilibrated sparse matrix.

    ``rows`` lists the long (constraint) rows handled by the capacitance
    correction; with no such rows this is a plain sparse LU.
    """

    def __init__(self, A: sp.spmatrix, rows=(), scale_rows: bool = True):
        A = sp.csr_matrix(A, dtype=float)
        n = A.shape[0]
        if A.shape[1] != n:
            raise ValueError("system matrix is not square")
        self.n = n
        self.scale = row_scaling(A) if scale_rows else np.ones(n)
        As = (sp.diags(self.scale) @ A).tocsr()
        rows = np.asarray(rows, dtype=np.int64)
        self.rows = rows
        if rows.size == 0:
            self.lu = _splu(As)
            self.fill = int(self.lu.L.nnz + self.lu.U.nnz)
            return
        sel = np.zeros(n, dtype=bool)
        sel[rows] = True
        keep = sp.diags((~sel).astype(float))
        base = (keep @ As + sp.diags(sel.astype(float))).tocsc()
        self.lu = _splu(base)
        self.C = As[rows].tocsr()
        P = np.zeros((n, rows.size))
        P[rows, np.arange(rows.size)] = 1.0
        self.X = self.lu.solve(P)
        # capacitance: (I + Delta X) with Delta = C - P^T, and P^T X = I
        S = self.C @ self.X
        if not np.all(np.isfinite(S)):
            raise SingularSystemError("non-finite capacitance matrix")
        try:
            self.S = sla.lu_factor(S, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SingularSystemError(str(exc)) from exc
        if np.any(np.diag(self.S[0]) == 0):
            raise SingularSystemError("singular capacitance matrix")
        self.fill = int(self.lu.L.nnz + self.lu.U.nnz + S.size)

    def _solve_scaled(self, b):
        y = self.lu.solve(b)
        if self.rows.size == 0:
            return y
        r = b[self.rows] - self.C @ y
        return y + self.X @ sla.lu_solve(self.S, r)

    def _solve_scaled_T(self, b):
        if self.rows.size == 0:
            return self.lu.solve(b, trans="T")
        # (A0^T + Delta^T P^T)^{-1} = A0^{-T} - A0^{-T} Delta^T S^{-T} X^T
        z = self.lu.solve(b, trans="T")
        v = sla.lu_solve(self.S, self.X.T @ b, trans=1)
        dv = self.C.T @ v
        dv[self.rows] -= v
        return z - self.lu.solve(dv, trans="T")

    def solve(self, b):
        b = np.asarray(b, float)
        return self._solve_scaled(self.scale * b)

    def solve_T(self, b):
        b = np.asarray(b, float)
        return self.scale * self._solve_scaled_T(b)


def solve(sys: LinearSystem, *, strategy: str = "capacitance", scale_rows: bool = True) -> SolveReport:
    """Solve ``sys`` by sparse LU (rows equilibrated, solution unchanged)."""
    A = sys.matrix.tocsr()
    if A.shape[0] != A.shape[1]:
        raise ValueError("system matrix is not square")
    b = np.asarray(sys.rhs, float)
    if strategy == "capacitance":
        rows = np.flatnonzero(sys.row_kind == RowKind.CONSTRAINT)
    elif strategy == "direct":
        rows = ()
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    fac = Factorization(A, rows, scale_rows)
    u = fac.solve(b)
    if not np.all(np.isfinite(u)):
        raise SingularSystemError("non-finite solution")
    res = np.max(np.abs(A @ u - b))
    bnorm = np.max(np.abs(b))
    anorm = float(abs(A).sum(axis=1).max())
    residual = float(res / (bnorm if bnorm > 0 else 1.0))
    backward = float(res / (anorm * np.max(np.abs(u)) + bnorm))
    return SolveReport(u, residual, int(A.nnz), fac.fill, backward)


def condition_estimate(sys_or_matrix, mode: str = "dense", *, equilibrated: bool = False) -> float:
    """Infinity-norm condition number, exact (dense) or via a 1-norm estimator.

    ``kappa_inf(A) = kappa_1(A^T)``; the iterative mode estimates
    ``||A^{-T}||_1`` by block 1-norm estimation driven by LU solves.
    Returns ``inf`` for singular matrices.
    """
    if isinstance(sys_or_matrix, LinearSystem):
        A = sys_or_matrix.matrix
        rows = np.flatnonzero(sys_or_matrix.row_kind == RowKind.CONSTRAINT)
    else:
        A = sys_or_matrix
        rows = ()
    A = sp.csr_matrix(A, dtype=float)
    if equilibrated:
        A = equilibrate(A)
    norm_A = float(abs(A).sum(axis=1).max())
    if mode == "dense":
        D = A.toarray()
        try:
            inv = np.linalg.inv(D)
        except np.linalg.LinAlgError:
            return float("inf")
        if not np.all(np.isfinite(inv)):
            return float("inf")
        return norm_A * float(np.max(np.sum(np.abs(inv), axis=1)))
    if mode == "iterative":
        try:
            fac = Factorization(A, rows)
        except SingularSystemError:
            return float("inf")
        n = A.shape[0]
        op = spla.LinearOperator(
            (n, n),
            matvec=lambda v: fac.solve_T(np.asarray(v, float).ravel()),
            rmatvec=lambda v: fac.solve(np.asarray(v, float).ravel()),
            dtype=float,
        )
        return norm_A * float(spla.onenormest(op))
    raise ValueError(f"unknown mode {mode!r}")
