"""Asymptotic-preserving solver for anisotropic diffusion with closed field lines.

Typical use::

    from islandap import example1_case, run_study
    report = run_study(example1_case(0.5, 0.85, 0.7853981633974483, 1e-9), [1e-9], [16, 32, 64])
    print(report.to_csv())

The lock-step field-line tracer used for node classification has a compiled
kernel (``islandap._core``).  When the extension is not built, or the
environment variable ``ISLANDAP_PURE`` is set, the NumPy implementation is
used instead; :func:`compiled_available` tells which one is active.
"""

from .analysis import ConvergenceReport, eoc, error_norms, run_study
from .discretization import AssemblyError, Discretization, LinearSystem, RowKind, assemble_system
from .field import ConfigError, FieldSpec, ProblemCase, SingularPointError, diffusion_tensor, example1_case, example2_case
from .grid import ClassificationError, Grid, NodeClass, NodeKind, build_grid, classify_nodes
from .quadrature import DomainError, QuadratureSet, build_quadrature, host_weights
from .solver import SingularSystemError, SolveReport, condition_estimate, solve
from .tracer import FieldLine, LineKind, TraceError, TraceMethod, compiled_available, trace_method_one, trace_method_two, trace_open

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "ClassificationError",
    "ConfigError",
    "ConvergenceReport",
    "Discretization",
    "DomainError",
    "FieldLine",
    "FieldSpec",
    "Grid",
    "LineKind",
    "LinearSystem",
    "NodeClass",
    "NodeKind",
    "ProblemCase",
    "QuadratureSet",
    "RowKind",
    "SingularPointError",
    "SingularSystemError",
    "SolveReport",
    "TraceError",
    "TraceMethod",
    "assemble_system",
    "build_grid",
    "build_quadrature",
    "classify_nodes",
    "compiled_available",
    "condition_estimate",
    "diffusion_tensor",
    "eoc",
    "error_norms",
    "example1_case",
    "example2_case",
    "host_weights",
    "run_study",
    "solve",
    "trace_method_one",
    "trace_method_two",
    "trace_open",
]
