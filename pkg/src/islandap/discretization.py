"""
Sparse assembly of the nine-point scheme and the field-line constraint rows.

Every interior node carries the flux-form nine-point discretization of
-div(A grad u) with the tensor evaluated at the four edge midpoints.  In the
asymptotic-preserving assembly the row of each cut node is replaced by the
trapezoid approximation of

    integral over the closed line of  E * (f + div(alpha b_perp (b_perp . grad u))) ds = 0

where the bracket is interpolated from node values of the perpendicular
nine-point operator.  Boundary nodes carry identity (Dirichlet) rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
import scipy.sparse as sp

from .field import FieldSpec, ProblemCase, tensor_parts
from .grid import Grid, NodeClass, NodeKind
from .quadrature import QuadratureSet, build_quadrature, host_weights
from .tracer import TraceMethod


class RowKind(IntEnum):
    STENCIL = 0
    DIRICHLET = 1
    CONSTRAINT = 2


class AssemblyError(RuntimeError):
    pass


# neighbour offsets in stencil order: C, E, W, N, S, NE, NW, SE, SW
OFFSETS = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1))


def stencil_coefficients(hx, hy, tE, tW, tN, tS):
    """Nine coefficients of -div(A grad u) from edge-midpoint tensors.

    Each ``t*`` is an ``(a11, a12, a22)`` triple (scalars or arrays) taken at
    (i+1/2, j), (i-1/2, j), (i, j+1/2), (i, j-1/2).  Normal derivatives use
    two-point differences, tangential ones four-point averages.
    """
    a11E, a12E, _ = tE
    a11W, a12W, _ = tW
    _, a12N, a22N = tN
    _, a12S, a22S = tS
    hx2, hy2, hxy = hx * hx, hy * hy, 4.0 * hx * hy
    c = a11E / hx2 + a11W / hx2 + a22N / hy2 + a22S / hy2
    e = -a11E / hx2 - (a12N - a12S) / hxy
    w = -a11W / hx2 + (a12N - a12S) / hxy
    n = -a22N / hy2 - (a12E - a12W) / hxy
    s = -a22S / hy2 + (a12E - a12W) / hxy
    ne = -(a12E + a12N) / hxy
    nw = (a12W + a12N) / hxy
    se = (a12E + a12S) / hxy
    sw = -(a12W + a12S) / hxy
    return (c, e, w, n, s, ne, nw, se, sw)


def _interior(grid: Grid):
    i = np.arange(-grid.I + 1, grid.I)
    j = np.arange(-grid.J + 1, grid.J)
    II, JJ = np.meshgrid(i, j)
    return II.ravel(), JJ.ravel()


def operator_matrix(grid: Grid, tensor_fn) -> sp.csr_matrix:
    """Nine-point operator with rows at interior nodes (boundary rows empty).

    ``tensor_fn(x, y)`` returns ``(a11, a12, a22)`` arrays.
    """
    i, j = _interior(grid)
    x, y = grid.coords(i, j)
    hx, hy = grid.hx, grid.hy
    tE = tensor_fn(x + 0.5 * hx, y)
    tW = tensor_fn(x - 0.5 * hx, y)
    tN = tensor_fn(x, y + 0.5 * hy)
    tS = tensor_fn(x, y - 0.5 * hy)
    coeffs = stencil_coefficients(hx, hy, tE, tW, tN, tS)
    row = grid.index(i, j)
    rows, cols, vals = [], [], []
    for (di, dj), cf in zip(OFFSETS, coeffs):
        rows.append(row)
        cols.append(grid.index(i + di, j + dj))
        vals.append(np.broadcast_to(cf, row.shape))
    n = grid.n_nodes
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def parallel_tensor(fld: FieldSpec):
    def fn(x, y):
        return tensor_parts(fld, x, y)[0]

    return fn


def perp_tensor(fld: FieldSpec):
    def fn(x, y):
        return tensor_parts(fld, x, y)[1]

    return fn


def full_tensor(fld: FieldSpec):
    inv_eps = 1.0 / fld.epsilon

    def fn(x, y):
        par, perp = tensor_parts(fld, x, y)
        return tuple(inv_eps * p + q for p, q in zip(par, perp))

    return fn


def _row_of(matrix: sp.csr_matrix, grid: Grid, node) -> dict[tuple[int, int], float]:
    k = int(grid.index(*node))
    r = matrix.getrow(k)
    out = {}
    for col, v in zip(r.indices, r.data):
        ci, cj = grid.ij(col)
        out[(int(ci) - node[0], int(cj) - node[1])] = float(v)
    return out


def stencil_row(grid: Grid, tensor_fn, node, source=None):
    """Coefficients of one interior row keyed by neighbour offset, plus its rhs."""
    i, j = node
    if grid.is_boundary(i, j):
        raise AssemblyError(f"node {node} is on the boundary")
    x, y = grid.coords(i, j)
    hx, hy = grid.hx, grid.hy
    tE = tensor_fn(np.array([x + 0.5 * hx]), np.array([y]))
    tW = tensor_fn(np.array([x - 0.5 * hx]), np.array([y]))
    tN = tensor_fn(np.array([x]), np.array([y + 0.5 * hy]))
    tS = tensor_fn(np.array([x]), np.array([y - 0.5 * hy]))
    coeffs = stencil_coefficients(hx, hy, tE, tW, tN, tS)
    row = {off: float(np.asarray(c).ravel()[0]) for off, c in zip(OFFSETS, coeffs)}
    rhs = None if source is None else float(source(x, y))
    return row, rhs


def perp_operator_row(grid: Grid, fld: FieldSpec, node):
    """Nine-point row of -div(alpha b_perp (b_perp . grad u)) at ``node``."""
    return stencil_row(grid, perp_tensor(fld), node)[0]


def extrapolate_boundary(grid: Grid, W: np.ndarray) -> np.ndarray:
    """Move weights sitting on boundary nodes onto interior nodes.

    Node values on the boundary are replaced by the linear extrapolation
    2 v(inner) - v(inner2) along the inward normal (x first, then y).
    """
    W = np.array(W, float).reshape(grid.ny, grid.nx).copy()
    for col, c1, c2 in ((0, 1, 2), (-1, -2, -3)):
        w = W[:, col].copy()
        W[:, col] = 0.0
        W[:, c1] += 2.0 * w
        W[:, c2] -= w
    for row, r1, r2 in ((0, 1, 2), (-1, -2, -3)):
        w = W[row, :].copy()
        W[row, :] = 0.0
        W[r1, :] += 2.0 * w
        W[r2, :] -= w
    return W.ravel()


def node_weights(q: QuadratureSet, grid: Grid) -> np.ndarray:
    """Per-node weights of the trapezoid sum  sum_k c_k E_k Theta(p_k)."""
    interp = host_weights(q, grid)
    ck = q.trapezoid_coefficients() * q.E
    W = interp.T @ ck
    return extrapolate_boundary(grid, W)


def constraint_row(grid: Grid, fld: FieldSpec, case: ProblemCase, q: QuadratureSet, perp=None):
    """Sparse constraint row and rhs for one closed line.

    Row = -(sum_n W_n * perp_row_n), rhs = -(sum_n W_n f_n).
    """
    if q is None or len(q) < 2:
        raise AssemblyError("empty quadrature set")
    if perp is None:
        perp = operator_matrix(grid, perp_tensor(fld))
    W = node_weights(q, grid)
    X, Y = grid.node_coords()
    nz = np.flatnonzero(W)
    f = case.source(X[nz], Y[nz])
    row = -(sp.csr_matrix(W[None, :]) @ perp)
    rhs = -float(W[nz] @ f)
    return row.tocsr(), rhs


@dataclass
class LinearSystem:
    grid: Grid
    matrix: sp.csr_matrix
    rhs: np.ndarray
    row_kind: np.ndarray
    epsilon: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]

    def dump(self, matrix_path, rhs_path=None):
        """Write ``row col value`` triplets (and ``row value`` rhs lines)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(matrix_path, "w") as fh:
            fh.write(f"# {self.n_unknowns} {self.n_unknowns} {coo.nnz}\n")
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{r} {c} {float(v)!r}\n")
        if rhs_path is not None:
            with open(rhs_path, "w") as fh:
                for r, v in enumerate(self.rhs):
                    fh.write(f"{r} {float(v)!r}\n")


class Discretization:
    """Epsilon-independent pieces of the assembly for one field and grid.

    The traced lines, quadrature sets, parallel and perpendicular nine-point
    operators and the constraint weights depend only on the field direction,
    so they are built once and reused for every anisotropy strength.
    """

    def __init__(self, grid: Grid, case: ProblemCase, classification: NodeClass, two_sided_E: bool = True):
        self.grid = grid
        self.classification = classification
        fld = case.field
        self.field = fld
        self.par = operator_matrix(grid, parallel_tensor(fld))
        self.perp = operator_matrix(grid, perp_tensor(fld))
        self.cut_nodes = classification.cut_nodes
        self.quadrature: dict[int, QuadratureSet] = {}
        weights = []
        for k in self.cut_nodes:
            line = classification.lines.get(int(k))
            if line is None:
                raise AssemblyError(f"cut node {int(k)} has no traced line")
            q = build_quadrature(line, grid, fld, two_sided_E)
            if len(q) < 2:
                raise AssemblyError(f"empty quadrature set for cut node {int(k)}")
            self.quadrature[int(k)] = q
            weights.append(node_weights(q, grid))
        n = grid.n_nodes
        self.W = sp.csr_matrix(np.array(weights)) if weights else sp.csr_matrix((0, n))
        self.constraints = -(self.W @ self.perp).tocsr()

    @property
    def method(self) -> TraceMethod:
        return self.classification.method

    def assemble(self, case: ProblemCase, baseline: bool = False) -> LinearSystem:
        grid = self.grid
        n = grid.n_nodes
        eps = case.field.epsilon
        X, Y = grid.node_coords()
        boundary = grid.boundary_mask()
        kind = np.full(n, RowKind.STENCIL, dtype=np.int8)
        kind[boundary] = RowKind.DIRICHLET
        if not baseline:
            if np.any(boundary[self.cut_nodes]):
                raise AssemblyError("cut node on the boundary")
            kind[self.cut_nodes] = RowKind.CONSTRAINT

        f = case.source(X, Y)
        g = case.boundary(X[boundary], Y[boundary])
        rhs = np.where(kind == RowKind.STENCIL, f, 0.0)
        rhs[boundary] = g

        keep = sp.diags((kind == RowKind.STENCIL).astype(float))
        A = keep @ ((1.0 / eps) * self.par + self.perp)
        A = A + sp.diags(boundary.astype(float))
        if not baseline and len(self.cut_nodes):
            place = sp.csr_matrix(
                (np.ones(len(self.cut_nodes)), (self.cut_nodes, np.arange(len(self.cut_nodes)))),
                shape=(n, len(self.cut_nodes)),
            )
            A = A + place @ self.constraints
            rhs[self.cut_nodes] = -(self.W @ f)
        if not np.all(np.isfinite(rhs)):
            raise AssemblyError("non-finite right-hand side")
        A = A.tocsr()
        A.eliminate_zeros()
        meta = dict(scheme="baseline" if baseline else "ap", method=self.method.value, n_constraints=int(np.sum(kind == RowKind.CONSTRAINT)))
        return LinearSystem(grid, A, rhs, kind, eps, meta)


def assemble_system(grid: Grid, case: ProblemCase, classification: NodeClass, baseline: bool = False, two_sided_E: bool = True) -> LinearSystem:
    if classification.grid != grid:
        raise AssemblyError("classification was built for a different grid")
    tags = classification.tags
    if len(tags) != grid.n_nodes:
        raise AssemblyError("classification/grid size mismatch")
    if np.any((tags == NodeKind.BOUNDARY) != grid.boundary_mask()):
        raise AssemblyError("classification boundary tags do not match the grid")
    return Discretization(grid, case, classification, two_sided_E).assemble(case, baseline)
