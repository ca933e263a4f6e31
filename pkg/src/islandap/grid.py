"""Uniform Cartesian grid on (-a, a) x (-b, b) and node classification."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .field import ConfigError, ProblemCase
from .tracer import (
    CLOSED,
    FAILED,
    FieldLine,
    TraceMethod,
    closure_status,
    default_step,
    trace_closed_batch,
)


@dataclass(frozen=True)
class Grid:
    """Nodes (i*hx, j*hy) for i in [-I, I], j in [-J, J].

    Flat node index is ``(j + J) * (2I + 1) + (i + I)`` (x runs fastest).
    """

    a: float
    b: float
    I: int
    J: int

    @property
    def hx(self) -> float:
        return self.a / self.I

    @property
    def hy(self) -> float:
        return self.b / self.J

    @property
    def nx(self) -> int:
        return 2 * self.I + 1

    @property
    def ny(self) -> int:
        return 2 * self.J + 1

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def bounds(self) -> tuple[float, float]:
        return (self.a, self.b)

    @property
    def x(self) -> np.ndarray:
        return np.arange(-self.I, self.I + 1) * self.hx

    @property
    def y(self) -> np.ndarray:
        return np.arange(-self.J, self.J + 1) * self.hy

    def index(self, i, j):
        return (np.asarray(j) + self.J) * self.nx + (np.asarray(i) + self.I)

    def ij(self, k):
        k = np.asarray(k)
        return k % self.nx - self.I, k // self.nx - self.J

    def coords(self, i, j):
        return np.asarray(i) * self.hx, np.asarray(j) * self.hy

    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened x and y coordinates of every node."""
        X, Y = np.meshgrid(self.x, self.y)
        return X.ravel(), Y.ravel()

    def is_boundary(self, i, j):
        return (np.abs(i) == self.I) | (np.abs(j) == self.J)

    def boundary_mask(self) -> np.ndarray:
        i, j = self.ij(np.arange(self.n_nodes))
        return self.is_boundary(i, j)


def build_grid(a: float, b: float, I: int, J: int) -> Grid:
    if not (a > 0 and b > 0):
        raise ConfigError(f"domain half-extents must be positive, got a={a}, b={b}")
    if int(I) != I or int(J) != J or I < 2 or J < 2:
        raise ConfigError(f"cell half-counts must be integers >= 2, got I={I}, J={J}")
    return Grid(float(a), float(b), int(I), int(J))


class NodeKind(IntEnum):
    BOUNDARY = 0
    OPEN_INTERIOR = 1
    CLOSED_INTERIOR = 2
    CUT = 3


class ClassificationError(RuntimeError):
    def __init__(self, node, point):
        super().__init__(f"field line through node {node} at ({point[0]:.6g}, {point[1]:.6g}) could not be traced")
        self.node = node


@dataclass(frozen=True)
class NodeClass:
    """Per-node tags plus the traced closed line of every cut node."""

    grid: Grid
    tags: np.ndarray
    lines: dict[int, FieldLine] = field(default_factory=dict)
    method: TraceMethod = TraceMethod.TWO
    step: float = 0.0

    @property
    def cut_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.tags == NodeKind.CUT)

    def count(self, kind: NodeKind) -> int:
        return int(np.count_nonzero(self.tags == kind))


def _singular_nodes(grid: Grid, points) -> dict[int, tuple[float, float]]:
    out = {}
    for px, py in points:
        i = round(px / grid.hx)
        j = round(py / grid.hy)
        if abs(i) <= grid.I and abs(j) <= grid.J and abs(i * grid.hx - px) < 1e-12 and abs(j * grid.hy - py) < 1e-12:
            out[int(grid.index(i, j))] = (px, py)
    return out


def classify_nodes(
    grid: Grid,
    case: ProblemCase,
    method: TraceMethod | str = TraceMethod.TWO,
    step_factor: float = 0.25,
    trace_all: bool = True,
) -> NodeClass:
    """Tag every node Boundary / OpenInterior / ClosedInterior / Cut.

    Open/closed status always comes from lock-step (method two) tracing.
    Nodes on the problem's cut rays whose line closes become Cut nodes and
    keep a polyline traced with ``method``.  With ``trace_all=False`` only the
    cut-ray nodes are traced and all other interior nodes are reported as
    OpenInterior.
    """
    method = TraceMethod(method)
    fld = case.field
    step = default_step(grid.hx, grid.hy, step_factor)
    delta = min(grid.hx, grid.hy)
    X, Y = grid.node_coords()
    n = grid.n_nodes
    tags = np.full(n, NodeKind.OPEN_INTERIOR, dtype=np.int8)
    boundary = grid.boundary_mask()
    tags[boundary] = NodeKind.BOUNDARY

    singular = _singular_nodes(grid, fld.singular_points)
    centers = {tuple(c) for c in case.island_centers}
    skip = np.zeros(n, dtype=bool)
    for k, pt in singular.items():
        if boundary[k]:
            continue
        skip[k] = True
        tags[k] = NodeKind.CLOSED_INTERIOR if pt in centers else NodeKind.OPEN_INTERIOR

    on_ray = np.zeros(n, dtype=bool)
    for ray in case.cut_rays:
        for k in np.flatnonzero(~boundary & ~skip):
            if ray.contains(X[k], Y[k]):
                on_ray[k] = True

    ray_nodes = np.flatnonzero(on_ray)
    lines: dict[int, FieldLine] = {}
    if ray_nodes.size:
        starts = np.column_stack((X[ray_nodes], Y[ray_nodes]))
        two, failed = trace_closed_batch(starts, fld, step, delta, grid.bounds, TraceMethod.TWO)
        if failed:
            k = ray_nodes[failed[0]]
            raise ClassificationError(tuple(int(v) for v in grid.ij(k)), (X[k], Y[k]))
        if method is TraceMethod.ONE:
            one, failed = trace_closed_batch(starts, fld, step, delta, grid.bounds, TraceMethod.ONE)
            if failed:
                k = ray_nodes[failed[0]]
                raise ClassificationError(tuple(int(v) for v in grid.ij(k)), (X[k], Y[k]))
        for m, k in enumerate(ray_nodes):
            if two[m].closed:
                tags[k] = NodeKind.CUT
                line = two[m] if method is TraceMethod.TWO else one[m]
                if not line.closed:
                    raise ClassificationError(tuple(int(v) for v in grid.ij(k)), (X[k], Y[k]))
                lines[int(k)] = line
            else:
                tags[k] = NodeKind.OPEN_INTERIOR

    if trace_all:
        rest = np.flatnonzero(~boundary & ~skip & ~on_ray)
        if rest.size:
            starts = np.column_stack((X[rest], Y[rest]))
            status, _ = closure_status(starts, fld, step, delta, grid.bounds)
            if np.any(status == FAILED):
                k = rest[np.flatnonzero(status == FAILED)[0]]
                raise ClassificationError(tuple(int(v) for v in grid.ij(k)), (X[k], Y[k]))
            tags[rest] = np.where(status == CLOSED, NodeKind.CLOSED_INTERIOR, NodeKind.OPEN_INTERIOR)

    tags.setflags(write=False)
    return NodeClass(grid, tags, lines, method, step)
