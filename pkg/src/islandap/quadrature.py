"""
Quadrature sets along closed field lines.

The abscissae are the intersections of the traced polyline with the grid
lines x = x_i and y = y_j, the crossings of known div(b) discontinuity rays,
and the cut node at both ends.  The raw tracer points are only used to locate
these intersections.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import scipy.sparse as sp

from .field import FieldSpec

DEDUP_TOL = 1e-12
ONE_SIDED_OFFSET = 1e-10


class PointKind(IntEnum):
    CUT_NODE = 0
    EDGE_X = 1  # on a vertical grid line x = x_i
    EDGE_Y = 2  # on a horizontal grid line y = y_j
    DISCONTINUITY = 3
    TRACE_END = 4  # unmatched end of a method-one loop


class DomainError(ValueError):
    """Quadrature point outside the computational domain."""


@dataclass(frozen=True)
class QuadratureSet:
    points: np.ndarray
    kinds: np.ndarray
    weights: np.ndarray  # omega_i = |p_{i+1} - p_i|
    div_left: np.ndarray  # div b seen from the panel before each point
    div_right: np.ndarray  # div b seen from the panel after each point
    E: np.ndarray

    def __len__(self):
        return len(self.points)

    @property
    def panels(self) -> np.ndarray:
        return 0.5 * self.weights * (self.div_right[:-1] + self.div_left[1:])

    @property
    def loop_integral(self) -> float:
        """Trapezoid value of the integral of div b along the line."""
        return float(np.sum(self.panels))

    @property
    def length(self) -> float:
        return float(np.sum(self.weights))

    def trapezoid_coefficients(self) -> np.ndarray:
        c = np.zeros(len(self.points))
        c[:-1] += 0.5 * self.weights
        c[1:] += 0.5 * self.weights
        return c


def _grid_crossings(A, B, h, axis, kind):
    lo = np.minimum(A[:, axis], B[:, axis])
    hi = np.maximum(A[:, axis], B[:, axis])
    kmin = np.ceil(lo / h).astype(np.int64)
    kmax = np.floor(hi / h).astype(np.int64)
    span = B[:, axis] - A[:, axis]
    count = np.where(span != 0, np.maximum(kmax - kmin + 1, 0), 0)
    seg = np.repeat(np.arange(len(A)), count)
    offs = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
    k = kmin[seg] + offs
    line = k * h
    t = (line - A[seg, axis]) / span[seg]
    pts = A[seg] + t[:, None] * (B[seg] - A[seg])
    pts[:, axis] = line
    return pts, seg + t, np.full(len(seg), kind, dtype=np.int8)


_RANK = np.array([3, 0, 0, 2, 3])  # indexed by PointKind


def _dedup(points, kinds, pos):
    """Drop points closer than DEDUP_TOL to their predecessor, keeping the stronger tag."""
    gap = np.hypot(*np.diff(points, axis=0).T)
    keep = np.concatenate(([True], gap >= DEDUP_TOL))
    owner = np.cumsum(keep) - 1
    kinds = np.asarray(kinds, dtype=np.int8)
    points = np.array(points, float)
    out_k = kinds[keep].copy()
    out_p = points[keep].copy()
    for m in np.flatnonzero(~keep):
        o = owner[m]
        if _RANK[kinds[m]] > _RANK[out_k[o]]:
            out_k[o] = kinds[m]
            if kinds[m] in (PointKind.CUT_NODE, PointKind.TRACE_END):
                out_p[o] = points[m]
    return out_p, out_k, np.asarray(pos)[keep]


def edge_intersections(line, grid):
    """Ordered crossings of a closed polyline with the grid lines.

    Returns ``(points, kinds, positions)`` where ``positions`` are fractional
    segment indices along the polyline.  Point 0 is the cut node; the last
    point is the cut node again (method two) or the unmatched trace end.
    """
    P = np.asarray(line.points, float)
    A, B = P[:-1], P[1:]
    px, sx, kx = _grid_crossings(A, B, grid.hx, 0, PointKind.EDGE_X)
    py, sy, ky = _grid_crossings(A, B, grid.hy, 1, PointKind.EDGE_Y)
    pts = np.vstack((px, py))
    pos = np.concatenate((sx, sy))
    kinds = np.concatenate((kx, ky))
    order = np.argsort(pos, kind="stable")
    start, end = P[0], P[-1]
    end_kind = PointKind.CUT_NODE if np.array_equal(start, end) else PointKind.TRACE_END
    pts = np.vstack((start[None], pts[order], end[None]))
    kinds = np.concatenate(([PointKind.CUT_NODE], kinds[order], [end_kind])).astype(np.int8)
    pos = np.concatenate(([0.0], pos[order], [float(len(A))]))
    return _dedup(pts, kinds, pos)


def _ray_crossings(A, B, ray):
    o = np.asarray(ray.origin, float)
    r = np.asarray(ray.direction, float)
    d = B - A
    den = d[:, 0] * r[1] - d[:, 1] * r[0]
    oa = o - A
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (oa[:, 0] * r[1] - oa[:, 1] * r[0]) / den
        s = (oa[:, 0] * d[:, 1] - oa[:, 1] * d[:, 0]) / den
    hit = (den != 0) & (t >= 0) & (t < 1) & (s > 0)
    seg = np.flatnonzero(hit)
    pts = A[seg] + t[seg, None] * d[seg]
    return pts, seg + t[seg]


def insert_discontinuities(points, kinds, pos, line, rays):
    """Merge crossings of the div(b) discontinuity rays into an ordered point list."""
    if not rays:
        return points, kinds, pos
    P = np.asarray(line.points, float)
    A, B = P[:-1], P[1:]
    new_p, new_s = [], []
    for ray in rays:
        p, s = _ray_crossings(A, B, ray)
        new_p.append(p)
        new_s.append(s)
    new_p = np.vstack(new_p)
    new_s = np.concatenate(new_s)
    if len(new_s) == 0:
        return points, kinds, pos
    # keep the end markers at the extremes
    inner = slice(1, len(points) - 1)
    all_p = np.vstack((points[inner], new_p))
    all_k = np.concatenate((kinds[inner], np.full(len(new_s), PointKind.DISCONTINUITY, dtype=np.int8)))
    all_s = np.concatenate((pos[inner], new_s))
    order = np.argsort(all_s, kind="stable")
    pts = np.vstack((points[:1], all_p[order], points[-1:]))
    kk = np.concatenate((kinds[:1], all_k[order], kinds[-1:])).astype(np.int8)
    ss = np.concatenate((pos[:1], all_s[order], pos[-1:]))
    return _dedup(pts, kk, ss)


def compute_E(weights, div_left, div_right, two_sided=True):
    """Discrete integrating factor at every quadrature point.

    Two-sided form: exp(sum of panels before k) + exp(-sum of panels from k on).
    The single-exponential form keeps only the first term.
    """
    panels = 0.5 * np.asarray(weights) * (np.asarray(div_right)[:-1] + np.asarray(div_left)[1:])
    S = np.concatenate(([0.0], np.cumsum(panels)))
    if not two_sided:
        return np.exp(S)
    return np.exp(S) + np.exp(-(S[-1] - S))


def build_quadrature(line, grid, fld: FieldSpec, two_sided_E: bool = True) -> QuadratureSet:
    pts, kinds, pos = edge_intersections(line, grid)
    pts, kinds, pos = insert_discontinuities(pts, kinds, pos, line, fld.discontinuity_rays)
    weights = np.hypot(*np.diff(pts, axis=0).T)
    d = np.asarray(fld.div_b(pts[:, 0], pts[:, 1]), float)
    d_left = d.copy()
    d_right = d.copy()
    jumps = np.flatnonzero(kinds == PointKind.DISCONTINUITY)
    if jumps.size:
        P = np.asarray(line.points, float)
        seg = np.clip(np.floor(pos[jumps]).astype(np.int64), 0, len(P) - 2)
        tan = P[seg + 1] - P[seg]
        tan /= np.hypot(tan[:, 0], tan[:, 1])[:, None]
        before = pts[jumps] - ONE_SIDED_OFFSET * tan
        after = pts[jumps] + ONE_SIDED_OFFSET * tan
        d_left[jumps] = fld.div_b(before[:, 0], before[:, 1])
        d_right[jumps] = fld.div_b(after[:, 0], after[:, 1])
    E = compute_E(weights, d_left, d_right, two_sided_E)
    return QuadratureSet(pts, kinds, weights, d_left, d_right, E)


def _cell_index(v, h, n):
    k = np.floor(v / h).astype(np.int64)
    return np.clip(k, -n, n - 1)


def host_weights(q: QuadratureSet, grid) -> sp.csr_matrix:
    """Interpolation matrix from grid-node values to the quadrature points.

    Edge points use the two nodes of their edge, cut nodes their own node,
    all other points the four bilinear weights of their cell.
    """
    pts = np.asarray(q.points, float)
    x, y = pts[:, 0], pts[:, 1]
    tol = 1e-12
    if np.any(np.abs(x) > grid.a + tol) or np.any(np.abs(y) > grid.b + tol):
        raise DomainError("quadrature point outside the domain")
    hx, hy = grid.hx, grid.hy
    kinds = np.asarray(q.kinds)
    i0 = _cell_index(x, hx, grid.I)
    j0 = _cell_index(y, hy, grid.J)
    tx = (x - i0 * hx) / hx
    ty = (y - j0 * hy) / hy
    on_x = kinds == PointKind.EDGE_X
    on_y = kinds == PointKind.EDGE_Y
    node = kinds == PointKind.CUT_NODE
    # edge points sit exactly on their grid line; snap the other direction
    i0 = np.where(on_x | node, np.rint(x / hx).astype(np.int64), i0)
    j0 = np.where(on_y | node, np.rint(y / hy).astype(np.int64), j0)
    tx = np.where(on_x | node, 0.0, tx)
    ty = np.where(on_y | node, 0.0, ty)
    # bilinear weights reduce to the edge / node weights when tx or ty is 0
    w = np.stack(((1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty), axis=1)
    ci = np.stack((i0, i0 + 1, i0, i0 + 1), axis=1)
    cj = np.stack((j0, j0, j0 + 1, j0 + 1), axis=1)
    rows = np.repeat(np.arange(len(pts)), 4).reshape(-1, 4)
    keep = w != 0.0
    cols = grid.index(ci[keep], cj[keep])
    return sp.csr_matrix((w[keep], (rows[keep], cols)), shape=(len(pts), grid.n_nodes))
