"""
Command-line front end.

Configuration is flat ``key=value`` text (whitespace or newline separated,
``#`` starts a comment).  Every key has a matching flag (``step_factor`` is
``--step-factor``); flags override file values.

    islandap convergence --problem example1 --gamma1 0.5 --gamma2 0.85 \\
        --phi 0.7853981633974483 --eps 1e-3,1e-6,1e-9 --grids 16,32,64,128

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import shlex
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .analysis import DENSE_COND_LIMIT, NUMERICAL_ERRORS, error_norms, normalize_grids, run_study
from .discretization import Discretization
from .field import ConfigError, ProblemCase, example1_case, example2_case
from .grid import build_grid, classify_nodes
from .quadrature import PointKind, build_quadrature
from .solver import condition_estimate, solve
from .tracer import default_step, line_length, trace_method_one, trace_method_two, trace_open

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


@dataclass
class RunConfig:
    problem: str = "example1"
    gamma1: float = 0.5
    gamma2: float = 0.5
    phi: float = 0.0
    lam: float = 0.1
    alpha: float = 1.0
    eps: list[float] = field(default_factory=lambda: [1e-6])
    grids: list = field(default_factory=lambda: [32])
    scheme: str = "ap"
    method: str = "two"
    step_factor: float = 0.25
    output: str = "-"
    matrix: str | None = None
    rhs: str | None = None
    solution: str | None = None
    quadrature: str | None = None
    start: tuple[float, float] | None = None
    cond: bool = False
    cond_mode: str = "auto"
    timing: bool = True

    def make_case(self, eps: float) -> ProblemCase:
        if self.problem == "example1":
            return example1_case(self.gamma1, self.gamma2, self.phi, eps, self.alpha)
        return example2_case(self.lam, eps, self.alpha)

    def grid_pairs(self) -> list[tuple[int, int]]:
        domain = (0.5, 0.5) if self.problem == "example1" else (1.0, 0.5)
        return normalize_grids(self.grids, domain)


KEYS = {f.name for f in fields(RunConfig)}


def _float(key, text, lo=-math.inf, hi=math.inf, lo_open=False, hi_open=False, rng=None):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    bad = (
        not math.isfinite(v)
        or v < lo
        or v > hi
        or (lo_open and v == lo)
        or (hi_open and v == hi)
    )
    if bad:
        raise ConfigError(f"{key}={text} out of range {rng}")
    return v


def _bool(key, text):
    t = str(text).lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}")


def _grid(text):
    t = text.strip().lower()
    try:
        if "x" in t:
            I, J = (int(p) for p in t.split("x"))
            pair = (I, J)
            ok = I >= 2 and J >= 2
        else:
            pair = int(t)
            ok = pair >= 2
    except ValueError:
        raise ConfigError(f"grids: cannot parse {text!r} (use N or IxJ)") from None
    if not ok:
        raise ConfigError(f"grids: {text!r} out of range (half-counts >= 2)")
    return pair


def _set(cfg: RunConfig, key: str, text: str) -> None:
    key = key.replace("-", "_")
    if key not in KEYS:
        raise ConfigError(f"unknown key {key!r}; accepted: {', '.join(sorted(KEYS))}")
    if key == "problem":
        if text not in ("example1", "example2"):
            raise ConfigError(f"problem={text} not in {{example1, example2}}")
        cfg.problem = text
    elif key in ("gamma1", "gamma2"):
        setattr(cfg, key, _float(key, text, 0.0, lo_open=True, rng="(0, inf)"))
    elif key == "phi":
        cfg.phi = _float(key, text, 0.0, math.pi, hi_open=True, rng="[0, pi)")
    elif key == "lam":
        cfg.lam = _float(key, text, 0.0, 1.0, lo_open=True, hi_open=True, rng="(0, 1)")
    elif key == "alpha":
        cfg.alpha = _float(key, text, 0.0, lo_open=True, rng="(0, inf)")
    elif key == "eps":
        vals = [_float(key, p, 0.0, 1.0, lo_open=True, rng="(0, 1]") for p in text.split(",") if p.strip()]
        if not vals:
            raise ConfigError("eps: empty list")
        cfg.eps = vals
    elif key == "grids":
        vals = [_grid(p) for p in text.split(",") if p.strip()]
        if not vals:
            raise ConfigError("grids: empty list")
        cfg.grids = vals
    elif key == "scheme":
        if text not in ("ap", "baseline"):
            raise ConfigError(f"scheme={text} not in {{ap, baseline}}")
        cfg.scheme = text
    elif key == "method":
        if text not in ("one", "two"):
            raise ConfigError(f"method={text} not in {{one, two}}")
        cfg.method = text
    elif key == "step_factor":
        cfg.step_factor = _float(key, text, 0.0, 1.0, lo_open=True, rng="(0, 1]")
    elif key == "start":
        parts = text.split(",")
        if len(parts) != 2:
            raise ConfigError(f"start: expected 'x,y', got {text!r}")
        cfg.start = (_float(key, parts[0]), _float(key, parts[1]))
    elif key == "cond":
        cfg.cond = _bool(key, text)
    elif key == "cond_mode":
        if text not in ("auto", "dense", "iterative"):
            raise ConfigError(f"cond_mode={text} not in {{auto, dense, iterative}}")
        cfg.cond_mode = text
    elif key == "timing":
        cfg.timing = _bool(key, text)
    else:  # output paths
        setattr(cfg, key, text)


def parse_config(text: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a validated :class:`RunConfig` from config text plus flag overrides."""
    cfg = RunConfig()
    if text:
        for token in shlex.split(text, comments=True):
            if "=" not in token:
                raise ConfigError(f"expected key=value, got {token!r}")
            key, _, value = token.partition("=")
            _set(cfg, key.strip(), value.strip())
    for key, value in (overrides or {}).items():
        if value is not None:
            _set(cfg, key, str(value))
    return cfg


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _write_rows(path, header, rows):
    fh, close = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if close:
            fh.close()


def _r(v) -> str:
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def _only(values, what):
    if len(values) != 1:
        raise ConfigError(f"{what}: this command takes exactly one value, got {len(values)}")
    return values[0]


def cmd_solve(cfg: RunConfig) -> int:
    eps = _only(cfg.eps, "eps")
    I, J = _only(cfg.grid_pairs(), "grids")
    case = cfg.make_case(eps)
    grid = build_grid(*case.domain, I, J)
    t0 = time.perf_counter()
    nc = classify_nodes(grid, case, cfg.method, cfg.step_factor, trace_all=False)
    sys_ = Discretization(grid, case, nc).assemble(case, baseline=cfg.scheme == "baseline")
    rep = solve(sys_)
    wall = (time.perf_counter() - t0) * 1e3
    l2, linf = error_norms(rep.solution, case.exact, grid)
    if cfg.matrix:
        sys_.dump(cfg.matrix, cfg.rhs)
    elif cfg.rhs:
        raise ConfigError("rhs dump requires matrix=PATH as well")
    if cfg.solution:
        X, Y = grid.node_coords()
        ii, jj = grid.ij(np.arange(grid.n_nodes))
        ex = case.exact(X, Y)
        _write_rows(
            cfg.solution,
            ("i", "j", "x", "y", "u", "exact"),
            [(int(a), int(b), _r(x), _r(y), _r(u), _r(e)) for a, b, x, y, u, e in zip(ii, jj, X, Y, rep.solution, ex)],
        )
    summary = dict(
        problem=case.label,
        scheme=cfg.scheme,
        method=cfg.method,
        eps=eps,
        I=I,
        J=J,
        hx=grid.hx,
        hy=grid.hy,
        l2=l2,
        linf=linf,
        n_constraints=sys_.meta["n_constraints"],
        **rep.as_dict(),
        wall_ms=round(wall, 3) if cfg.timing else None,
    )
    summary.pop("cond_estimate")
    if cfg.output.endswith(".json"):
        with open(cfg.output, "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    else:
        row = ["" if v is None else (repr(v) if isinstance(v, float) else str(v)) for v in summary.values()]
        _write_rows(cfg.output, tuple(summary), [row])
    return EXIT_OK


def cmd_convergence(cfg: RunConfig) -> int:
    report = run_study(
        cfg.make_case,
        cfg.eps,
        cfg.grid_pairs(),
        cfg.scheme,
        cfg.method,
        step_factor=cfg.step_factor,
        cond=cfg.cond,
        log=lambda msg: print(msg, file=sys.stderr),
    )
    fh, close = _open_out(cfg.output)
    try:
        report.to_csv(fh, timing=cfg.timing)
    finally:
        if close:
            fh.close()
    for r in report.failures:
        print(f"row eps={r.eps!r} grid={r.I}x{r.J} failed: {r.error}", file=sys.stderr)
    return EXIT_NUMERICAL if report.failures else EXIT_OK


def cmd_condition(cfg: RunConfig) -> int:
    rows = []
    failed = False
    for eps in cfg.eps:
        case = cfg.make_case(eps)
        for I, J in cfg.grid_pairs():
            grid = build_grid(*case.domain, I, J)
            try:
                nc = classify_nodes(grid, case, cfg.method, cfg.step_factor, trace_all=False)
                sys_ = Discretization(grid, case, nc).assemble(case, baseline=cfg.scheme == "baseline")
                mode = cfg.cond_mode
                if mode == "auto":
                    mode = "dense" if sys_.n_unknowns <= DENSE_COND_LIMIT else "iterative"
                raw = condition_estimate(sys_, mode)
                equil = condition_estimate(sys_, mode, equilibrated=True)
            except NUMERICAL_ERRORS as exc:
                print(f"eps={eps!r} grid={I}x{J} failed: {exc}", file=sys.stderr)
                failed = True
                raw = equil = float("nan")
                mode = cfg.cond_mode
            rows.append((case.label, cfg.scheme, cfg.method, _r(eps), I, J, _r(raw), _r(equil), mode))
    _write_rows(cfg.output, ("problem", "scheme", "method", "eps", "I", "J", "cond_raw", "cond_equil", "mode"), rows)
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_trace(cfg: RunConfig) -> int:
    if cfg.start is None:
        raise ConfigError("trace needs start=x,y")
    eps = cfg.eps[0]
    I, J = cfg.grid_pairs()[0]
    case = cfg.make_case(eps)
    grid = build_grid(*case.domain, I, J)
    a, b = case.domain
    if not (abs(cfg.start[0]) <= a and abs(cfg.start[1]) <= b):
        raise ConfigError(f"start={cfg.start} lies outside the domain")
    step = default_step(grid.hx, grid.hy, cfg.step_factor)
    delta = min(grid.hx, grid.hy)
    tracer = trace_method_two if cfg.method == "two" else trace_method_one
    line = tracer(cfg.start, case.field, step, delta, grid.bounds)
    if not line.closed:
        line = trace_open(cfg.start, case.field, step, grid)
    pts = line.points
    s = np.concatenate(([0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T)))) if len(pts) > 1 else np.zeros(1)
    _write_rows(cfg.output, ("x", "y", "s"), [(_r(x), _r(y), _r(v)) for (x, y), v in zip(pts, s)])
    print(f"{line.kind.value} line, {len(pts)} points, length {line_length(line)!r}", file=sys.stderr)
    if cfg.quadrature:
        if not line.closed:
            raise ConfigError("quadrature dump requires a closed field line")
        q = build_quadrature(line, grid, case.field)
        rows = []
        for k in range(len(q)):
            omega = _r(q.weights[k]) if k < len(q.weights) else ""
            rows.append((_r(q.points[k, 0]), _r(q.points[k, 1]), PointKind(q.kinds[k]).name.lower(), omega, _r(q.E[k])))
        _write_rows(cfg.quadrature, ("x", "y", "kind", "omega", "E"), rows)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "condition": cmd_condition, "trace": cmd_trace}

HELP = {
    "problem": "example1 | example2",
    "gamma1": "example 1 ellipse parameter (> 0)",
    "gamma2": "example 1 ellipse parameter (> 0)",
    "phi": "example 1 tilt angle in [0, pi)",
    "lam": "example 2 island parameter in (0, 1)",
    "alpha": "perpendicular diffusivity (> 0)",
    "eps": "comma-separated anisotropy strengths in (0, 1]",
    "grids": "comma-separated grids: N (I = N, J = N*b/a) or IxJ half-counts",
    "scheme": "ap | baseline",
    "method": "closed-line tracing: one | two",
    "step_factor": "tracer step as a fraction of min(hx, hy)",
    "output": "output path ('-' for stdout; .json for solve gives JSON)",
    "matrix": "solve: write the matrix as (row, col, value) triplets",
    "rhs": "solve: write the right-hand side as (row, value) pairs",
    "solution": "solve: write node values (i, j, x, y, u, exact)",
    "quadrature": "trace: write the quadrature set (x, y, kind, omega, E)",
    "start": "trace: start point 'x,y'",
    "cond": "convergence: also estimate the condition number (true/false)",
    "cond_mode": "auto | dense | iterative",
    "timing": "write wall times (false gives byte-identical output)",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="islandap", description="Asymptotic-preserving anisotropic diffusion solver.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value config file")
        for key in RunConfig.__dataclass_fields__:
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=HELP.get(key))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        text = None
        if args.config:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        cfg = parse_config(text, overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
