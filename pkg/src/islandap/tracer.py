"""
Field-line tracing with fixed-step classical RK4.

Three tracing modes are provided:

* open tracing in both directions until each end leaves the domain;
* "method one": a single forward loop, stopped when it returns into the
  closure ball of the start point (endpoints are *not* identified);
* "method two": forward and backward traces advanced in lock-step, stopped
  when the two fronts meet; the polyline p0..pk, p~k..p~0 starts and ends at
  the very same point.

All modes trace a whole batch of start points at once; the scalar entry
points are thin wrappers around the batch routines.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .field import FieldSpec

try:
    from . import _core
except ImportError:  # pure-Python fallback
    _core = None


class LineKind(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


class TraceMethod(str, Enum):
    ONE = "one"
    TWO = "two"
    OPEN = "open"


class TraceError(RuntimeError):
    """A trace exceeded its step budget without closing or leaving the domain."""

    def __init__(self, start, steps):
        super().__init__(f"field line from ({start[0]:.6g}, {start[1]:.6g}) not resolved after {steps} steps")
        self.start = tuple(start)
        self.steps = steps


@dataclass(frozen=True)
class FieldLine:
    points: np.ndarray
    kind: LineKind
    method: TraceMethod
    cut_point: tuple[float, float] | None
    step: float

    @property
    def closed(self) -> bool:
        return self.kind is LineKind.CLOSED

    def __len__(self):
        return len(self.points)


def default_step(hx: float, hy: float, factor: float = 0.25) -> float:
    return factor * min(hx, hy)


def default_max_steps(bounds: tuple[float, float], step: float) -> int:
    a, b = bounds
    return int(math.ceil(100.0 * 4.0 * (a + b) / step))


def line_length(line: FieldLine | np.ndarray) -> float:
    pts = line.points if isinstance(line, FieldLine) else np.asarray(line, float)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def _rk4(fld: FieldSpec, P: np.ndarray, h: float) -> np.ndarray:
    x, y = P[:, 0], P[:, 1]
    k1x, k1y = fld.b(x, y)
    k2x, k2y = fld.b(x + 0.5 * h * k1x, y + 0.5 * h * k1y)
    k3x, k3y = fld.b(x + 0.5 * h * k2x, y + 0.5 * h * k2y)
    k4x, k4y = fld.b(x + h * k3x, y + h * k3y)
    out = np.empty_like(P)
    out[:, 0] = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    out[:, 1] = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    return out


def _outside(P: np.ndarray, bounds) -> np.ndarray:
    a, b = bounds
    return (np.abs(P[:, 0]) >= a) | (np.abs(P[:, 1]) >= b)


def _clip_to_boundary(inside, outside, bounds):
    """Linear interpolation of the segment inside->outside onto the box boundary."""
    a, b = bounds
    d = outside - inside
    t = 1.0
    for k, lim in ((0, a), (1, b)):
        if d[k] != 0:
            for wall in (lim, -lim):
                tk = (wall - inside[k]) / d[k]
                if 0.0 <= tk < t:
                    t = tk
    return inside + t * d


# status codes of the batch tracers
RUNNING, CLOSED, OPEN, FAILED = 0, 1, 2, 3


def trace_lockstep(starts, fld: FieldSpec, step: float, delta: float, bounds, max_steps=None, record=False):
    """Method-two tracing of many start points.

    Returns ``(status, stop_index, history)``; ``history`` is ``None`` unless
    ``record`` is set, in which case it holds ``(forward, backward)`` arrays of
    shape ``(steps + 1, n, 2)``.
    """
    starts = np.atleast_2d(np.asarray(starts, float))
    n = len(starts)
    if max_steps is None:
        max_steps = default_max_steps(bounds, step)
    fwd = starts.copy()
    bwd = starts.copy()
    status = np.where(_outside(starts, bounds), OPEN, RUNNING)
    stop = np.zeros(n, dtype=np.int64)
    armed = np.zeros(n, dtype=bool)
    d_prev = np.zeros(n)
    d_prev2 = np.zeros(n)
    hist_f = [starts.copy()] if record else None
    hist_b = [starts.copy()] if record else None
    k = 0
    active = np.flatnonzero(status == RUNNING)
    while active.size:
        if k >= max_steps:
            status[active] = FAILED
            stop[active] = k
            break
        k += 1
        pf = _rk4(fld, fwd[active], step)
        pb = _rk4(fld, bwd[active], -step)
        fwd[active] = pf
        bwd[active] = pb
        if record:
            hist_f.append(fwd.copy())
            hist_b.append(bwd.copy())
        d = np.hypot(pf[:, 0] - pb[:, 0], pf[:, 1] - pb[:, 1])
        dp = d_prev[active]
        dpp = d_prev2[active]
        arm = armed[active]
        # strict local minimum of the gap at k-1, detected one step late
        local_min = arm & (k >= 2) & (dp < dpp) & (d > dp)
        ball = arm & (d <= delta) & ~local_min
        arm = arm | (d > 2.0 * delta) | ((k >= 2) & (d < dp))
        exited = (_outside(pf, bounds) | _outside(pb, bounds)) & ~local_min & ~ball
        idx_lm = active[local_min]
        status[idx_lm] = CLOSED
        stop[idx_lm] = k - 1
        idx_ball = active[ball]
        status[idx_ball] = CLOSED
        stop[idx_ball] = k
        idx_out = active[exited]
        status[idx_out] = OPEN
        stop[idx_out] = k
        armed[active] = arm
        d_prev2[active] = dp
        d_prev[active] = d
        active = np.flatnonzero(status == RUNNING)
    history = (np.array(hist_f), np.array(hist_b)) if record else None
    return status, stop, history


def compiled_available() -> bool:
    return _core is not None and not os.environ.get("ISLANDAP_PURE")


def closure_status(starts, fld: FieldSpec, step: float, delta: float, bounds, max_steps=None, backend: str = "auto"):
    """Method-two ``(status, stop_index)`` of many start points, without the polylines.

    ``backend`` is ``"auto"`` (compiled kernel when the extension is built and
    the field has a kernel tag), ``"compiled"`` or ``"python"``.
    """
    starts = np.ascontiguousarray(np.atleast_2d(np.asarray(starts, float)))
    if max_steps is None:
        max_steps = default_max_steps(bounds, step)
    if backend == "auto":
        backend = "compiled" if compiled_available() and fld.kernel is not None else "python"
    if backend == "python":
        status, stop, _ = trace_lockstep(starts, fld, step, delta, bounds, max_steps)
        return status, stop
    if backend != "compiled":
        raise ValueError(f"unknown backend {backend!r}")
    if _core is None:
        raise RuntimeError("compiled tracer extension is not built")
    if fld.kernel is None:
        raise ValueError("field has no compiled kernel")
    family, params = fld.kernel
    a, b = bounds
    return _core.lockstep_status(
        starts,
        int(family),
        np.ascontiguousarray(params, dtype=float),
        float(fld.delta_reg),
        float(step),
        float(delta),
        float(a),
        float(b),
        int(max_steps),
    )


def trace_forward_loop(starts, fld: FieldSpec, step: float, delta: float, bounds, max_steps=None, record=False):
    """Method-one tracing of many start points (forward only, closure-ball stop)."""
    starts = np.atleast_2d(np.asarray(starts, float))
    n = len(starts)
    if max_steps is None:
        max_steps = default_max_steps(bounds, step)
    pos = starts.copy()
    status = np.where(_outside(starts, bounds), OPEN, RUNNING)
    stop = np.zeros(n, dtype=np.int64)
    armed = np.zeros(n, dtype=bool)
    d_prev = np.zeros(n)
    hist = [starts.copy()] if record else None
    k = 0
    active = np.flatnonzero(status == RUNNING)
    while active.size:
        if k >= max_steps:
            status[active] = FAILED
            stop[active] = k
            break
        k += 1
        p = _rk4(fld, pos[active], step)
        pos[active] = p
        if record:
            hist.append(pos.copy())
        d = np.hypot(p[:, 0] - starts[active, 0], p[:, 1] - starts[active, 1])
        arm = armed[active]
        back = arm & (d <= delta)
        exited = _outside(p, bounds) & ~back
        status[active[back]] = CLOSED
        stop[active[back]] = k
        status[active[exited]] = OPEN
        stop[active[exited]] = k
        armed[active] = arm | (d > 2.0 * delta) | ((k >= 2) & (d < d_prev[active]))
        d_prev[active] = d
        active = np.flatnonzero(status == RUNNING)
    return status, stop, (np.array(hist) if record else None)


def trace_open_batch(starts, fld: FieldSpec, step: float, bounds, max_steps=None, record=False):
    """Trace both directions of many lines until each end leaves the domain."""
    starts = np.atleast_2d(np.asarray(starts, float))
    n = len(starts)
    if max_steps is None:
        max_steps = default_max_steps(bounds, step)
    out = []
    stops = []
    for sign in (1.0, -1.0):
        pos = starts.copy()
        done = _outside(starts, bounds)
        stop = np.zeros(n, dtype=np.int64)
        hist = [starts.copy()] if record else None
        k = 0
        active = np.flatnonzero(~done)
        while active.size:
            if k >= max_steps:
                raise TraceError(starts[active[0]], k)
            k += 1
            p = _rk4(fld, pos[active], sign * step)
            pos[active] = p
            if record:
                hist.append(pos.copy())
            ex = _outside(p, bounds)
            done[active[ex]] = True
            stop[active[ex]] = k
            active = np.flatnonzero(~done)
        out.append(np.array(hist) if record else None)
        stops.append(stop)
    return stops, out


def _bounds_of(grid_or_bounds):
    if hasattr(grid_or_bounds, "a"):
        return (grid_or_bounds.a, grid_or_bounds.b)
    return tuple(grid_or_bounds)


def trace_open(start, fld: FieldSpec, step: float, grid, max_steps=None) -> FieldLine:
    """Open field line through ``start``, both ends clipped to the boundary."""
    bounds = _bounds_of(grid)
    start = np.asarray(start, float)
    if _outside(start[None, :], bounds)[0]:
        return FieldLine(start[None, :].copy(), LineKind.OPEN, TraceMethod.OPEN, None, step)
    (sf, sb), (hf, hb) = trace_open_batch(start, fld, step, bounds, max_steps, record=True)
    branches = []
    for stop, hist in ((sf[0], hf), (sb[0], hb)):
        pts = hist[: stop + 1, 0, :].copy()
        pts[-1] = _clip_to_boundary(pts[-2], pts[-1], bounds)
        branches.append(pts)
    pts = np.vstack((branches[1][::-1], branches[0][1:]))
    return FieldLine(pts, LineKind.OPEN, TraceMethod.OPEN, None, step)


def assemble_method_two(start, fwd, bwd, k) -> np.ndarray:
    """Polyline p0..pk, p~k..p~0 from lock-step histories of one line."""
    pts = np.vstack((fwd[: k + 1], bwd[: k + 1][::-1]))
    pts[0] = start
    pts[-1] = start
    return pts


def trace_method_two(start, fld: FieldSpec, step: float, delta: float, bounds, max_steps=None) -> FieldLine:
    bounds = _bounds_of(bounds)
    start = np.asarray(start, float)
    status, stop, (hf, hb) = trace_lockstep(start, fld, step, delta, bounds, max_steps, record=True)
    if status[0] == FAILED:
        raise TraceError(start, int(stop[0]))
    k = int(stop[0])
    if status[0] == OPEN:
        pts = np.vstack((hb[: k + 1, 0][::-1], hf[1 : k + 1, 0]))
        return FieldLine(pts, LineKind.OPEN, TraceMethod.TWO, None, step)
    pts = assemble_method_two(start, hf[:, 0], hb[:, 0], k)
    return FieldLine(pts, LineKind.CLOSED, TraceMethod.TWO, (float(start[0]), float(start[1])), step)


def trace_method_one(start, fld: FieldSpec, step: float, delta: float, bounds, max_steps=None) -> FieldLine:
    bounds = _bounds_of(bounds)
    start = np.asarray(start, float)
    status, stop, hist = trace_forward_loop(start, fld, step, delta, bounds, max_steps, record=True)
    if status[0] == FAILED:
        raise TraceError(start, int(stop[0]))
    pts = hist[: int(stop[0]) + 1, 0].copy()
    if status[0] == OPEN:
        return FieldLine(pts, LineKind.OPEN, TraceMethod.ONE, None, step)
    return FieldLine(pts, LineKind.CLOSED, TraceMethod.ONE, (float(start[0]), float(start[1])), step)


def trace_closed_batch(starts, fld: FieldSpec, step: float, delta: float, bounds, method=TraceMethod.TWO, max_steps=None):
    """Trace many candidate closed lines, returning one :class:`FieldLine` each.

    A line that fails to resolve comes back as ``None`` in the failure list
    (second return value) so callers can name the offending start.
    """
    starts = np.atleast_2d(np.asarray(starts, float))
    method = TraceMethod(method)
    lines = []
    failed = []
    if len(starts) == 0:
        return lines, failed
    if method is TraceMethod.TWO:
        status, stop, (hf, hb) = trace_lockstep(starts, fld, step, delta, bounds, max_steps, record=True)
    else:
        status, stop, hist = trace_forward_loop(starts, fld, step, delta, bounds, max_steps, record=True)
    for m, s0 in enumerate(starts):
        k = int(stop[m])
        cut = (float(s0[0]), float(s0[1]))
        if status[m] == FAILED:
            failed.append(m)
            lines.append(None)
        elif status[m] == OPEN:
            lines.append(FieldLine(s0[None, :].copy(), LineKind.OPEN, method, None, step))
        elif method is TraceMethod.TWO:
            pts = assemble_method_two(s0, hf[:, m], hb[:, m], k)
            lines.append(FieldLine(pts, LineKind.CLOSED, method, cut, step))
        else:
            lines.append(FieldLine(hist[: k + 1, m].copy(), LineKind.CLOSED, method, cut, step))
    return lines, failed
