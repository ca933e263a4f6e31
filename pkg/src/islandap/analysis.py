"""
Error norms, observed orders of convergence and convergence studies.

A study runs the full cross product of anisotropy strengths and grids for one
problem, scheme and tracing method.  Traced lines, quadrature sets and the
epsilon-free operators are built once per grid and reused for every epsilon.
"""

from __future__ import annotations

import csv
import io
import math
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .discretization import AssemblyError, Discretization
from .field import ConfigError, ProblemCase
from .grid import ClassificationError, Grid, build_grid, classify_nodes
from .quadrature import DomainError
from .solver import SingularSystemError, condition_estimate, solve
from .tracer import TraceError, TraceMethod

CSV_COLUMNS = (
    "problem",
    "scheme",
    "method",
    "eps",
    "I",
    "J",
    "hx",
    "hy",
    "l2",
    "linf",
    "eoc_l2",
    "eoc_linf",
    "cond",
    "wall_ms",
)

# matrices up to this many unknowns get the exact dense condition number
DENSE_COND_LIMIT = 5000

NUMERICAL_ERRORS = (SingularSystemError, ClassificationError, TraceError, AssemblyError, DomainError)


def error_norms(u_h, exact, grid: Grid) -> tuple[float, float]:
    """Grid L2 norm (with the hx*hy cell measure) and max norm of ``u_h - exact``."""
    u_h = np.asarray(u_h, float).ravel()
    if callable(exact):
        X, Y = grid.node_coords()
        ref = np.asarray(exact(X, Y), float).ravel()
    else:
        ref = np.asarray(exact, float).ravel()
    if u_h.shape != ref.shape:
        raise ValueError(f"expected {ref.size} node values, got {u_h.size}")
    e = u_h - ref
    l2 = math.sqrt(grid.hx * grid.hy * float(np.dot(e, e)))
    return l2, float(np.max(np.abs(e))) if e.size else 0.0


def eoc(errors: Sequence[float], h_values: Sequence[float]) -> list[float]:
    """Observed orders between consecutive refinements; NaN where undefined."""
    if len(errors) != len(h_values):
        raise ValueError("errors and h_values differ in length")
    if len(errors) < 2:
        raise ValueError("need at least two refinement levels")
    out = []
    for e0, e1, h0, h1 in zip(errors[:-1], errors[1:], h_values[:-1], h_values[1:]):
        if not (e0 > 0 and e1 > 0 and h0 > 0 and h1 > 0) or h0 == h1:
            out.append(float("nan"))
        else:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out


@dataclass
class StudyRow:
    eps: float
    I: int
    J: int
    hx: float
    hy: float
    l2: float = float("nan")
    linf: float = float("nan")
    eoc_l2: float = float("nan")
    eoc_linf: float = float("nan")
    cond: float = float("nan")
    wall_ms: float = float("nan")
    error: str | None = None
    residual: float = float("nan")
    backward_error: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.error is None


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


@dataclass
class ConvergenceReport:
    problem: str
    scheme: str
    method: str
    rows: list[StudyRow] = field(default_factory=list)

    @property
    def failures(self) -> list[StudyRow]:
        return [r for r in self.rows if not r.ok]

    def select(self, eps: float) -> list[StudyRow]:
        return [r for r in self.rows if r.eps == eps]

    def finest_eoc(self, eps: float) -> tuple[float, float]:
        """``(eoc_l2, eoc_linf)`` of the finest grid pair at ``eps``."""
        rows = self.select(eps)
        if len(rows) < 2:
            raise ValueError(f"fewer than two grids at eps={eps}")
        return rows[-1].eoc_l2, rows[-1].eoc_linf

    def to_csv(self, target=None, timing: bool = True) -> str:
        """Write the report; returns the CSV text.  ``timing=False`` leaves wall_ms empty."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(
                [
                    self.problem,
                    self.scheme,
                    self.method,
                    _fmt(r.eps),
                    r.I,
                    r.J,
                    _fmt(r.hx),
                    _fmt(r.hy),
                    _fmt(r.l2),
                    _fmt(r.linf),
                    _fmt(r.eoc_l2),
                    _fmt(r.eoc_linf),
                    _fmt(r.cond),
                    _fmt(round(r.wall_ms, 3)) if timing else "",
                ]
            )
        text = buf.getvalue()
        if target is not None:
            if hasattr(target, "write"):
                target.write(text)
            else:
                with open(target, "w", newline="") as fh:
                    fh.write(text)
        return text


def normalize_grids(grids: Iterable, domain: tuple[float, float]) -> list[tuple[int, int]]:
    """Accept ``N`` (meaning I = N, J = N*b/a) or ``(I, J)`` entries; sort by refinement."""
    a, b = domain
    out = []
    for g in grids:
        if isinstance(g, (tuple, list)):
            I, J = g
        else:
            I = int(g)
            J = round(I * b / a)
        out.append((int(I), int(J)))
    if not out:
        raise ConfigError("grid list is empty")
    return sorted(set(out))


def run_study(
    problem: ProblemCase | Callable[[float], ProblemCase],
    eps_list: Sequence[float],
    grid_list: Sequence,
    scheme: str = "ap",
    method: TraceMethod | str = TraceMethod.TWO,
    *,
    step_factor: float = 0.25,
    cond: bool = False,
    classify_all: bool = False,
    log: Callable[[str], None] | None = None,
) -> ConvergenceReport:
    """Run every (eps, grid) combination and collect errors and orders.

    ``problem`` is a case (rebuilt at each eps) or a factory ``eps -> case``.
    Failures are recorded on their row and the study carries on.  ``wall_ms``
    covers assembly and solve, plus an equal share of the per-grid setup.
    """
    if not eps_list:
        raise ConfigError("eps list is empty")
    if scheme not in ("ap", "baseline"):
        raise ConfigError(f"scheme must be 'ap' or 'baseline', got {scheme!r}")
    method = TraceMethod(method)
    make = problem.with_epsilon if isinstance(problem, ProblemCase) else problem
    first = make(eps_list[0])
    grids = normalize_grids(grid_list, first.domain)
    rows: dict[tuple[float, tuple[int, int]], StudyRow] = {}

    for I, J in grids:
        grid = build_grid(first.domain[0], first.domain[1], I, J)
        t0 = time.perf_counter()
        disc = None
        setup_error = None
        try:
            nc = classify_nodes(grid, first, method, step_factor, trace_all=classify_all)
            disc = Discretization(grid, first, nc)
        except NUMERICAL_ERRORS as exc:
            setup_error = f"{type(exc).__name__}: {exc}"
        share = (time.perf_counter() - t0) * 1e3 / len(eps_list)
        for eps in eps_list:
            row = StudyRow(float(eps), I, J, grid.hx, grid.hy)
            rows[(eps, (I, J))] = row
            if setup_error is not None:
                row.error = setup_error
                continue
            t1 = time.perf_counter()
            try:
                case = make(eps)
                sys = disc.assemble(case, baseline=scheme == "baseline")
                rep = solve(sys)
                row.l2, row.linf = error_norms(rep.solution, case.exact, grid)
                row.residual = rep.residual_norm
                row.backward_error = rep.backward_error
                if cond:
                    mode = "dense" if sys.n_unknowns <= DENSE_COND_LIMIT else "iterative"
                    row.cond = condition_estimate(sys, mode, equilibrated=True)
            except NUMERICAL_ERRORS as exc:
                row.error = f"{type(exc).__name__}: {exc}"
            row.wall_ms = (time.perf_counter() - t1) * 1e3 + share
            if log is not None:
                status = row.error or f"l2={row.l2:.3e} linf={row.linf:.3e}"
                log(f"eps={eps:g} grid={I}x{J}: {status}")

    ordered = []
    for eps in eps_list:
        seq = [rows[(eps, g)] for g in grids]
        for prev, cur in zip(seq[:-1], seq[1:]):
            if prev.ok and cur.ok:
                cur.eoc_l2 = eoc([prev.l2, cur.l2], [prev.hx, cur.hx])[0]
                cur.eoc_linf = eoc([prev.linf, cur.linf], [prev.hx, cur.hx])[0]
        ordered.extend(seq)
    return ConvergenceReport(first.label, scheme, method.value, ordered)
