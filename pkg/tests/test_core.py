import subprocess
import sys

import numpy as np
import pytest

from islandap import tracer
from islandap.field import example1_case, example2_case, rotating_field, uniform_field
from islandap.grid import build_grid, classify_nodes

needs_core = pytest.mark.skipif(tracer._core is None, reason="compiled extension not built")


def _starts(a, b, n, seed):
    rng = np.random.default_rng(seed)
    return np.column_stack((rng.uniform(-a, a, n), rng.uniform(-b, b, n)))


FIELDS = [
    ("uniform", lambda: uniform_field(0.3), (0.5, 0.5)),
    ("rotating", lambda: rotating_field(), (0.5, 0.5)),
    ("ex1c", lambda: example1_case(0.5, 0.85, np.pi / 4, 1e-6).field, (0.5, 0.5)),
    ("ex1d", lambda: example1_case(0.25, 0.85, np.pi / 3, 1e-6).field, (0.5, 0.5)),
    ("ex2", lambda: example2_case(0.1, 1e-6).field, (1.0, 0.5)),
]


@needs_core
@pytest.mark.parametrize("name, make, bounds", FIELDS, ids=[f[0] for f in FIELDS])
def test_compiled_matches_python(name, make, bounds):
    fld = make()
    starts = _starts(*bounds, 60, 5)
    h = 1 / 32
    s1, k1 = tracer.closure_status(starts, fld, h / 4, h, bounds, backend="python")
    s2, k2 = tracer.closure_status(starts, fld, h / 4, h, bounds, backend="compiled")
    assert np.array_equal(s1, s2)
    assert np.array_equal(k1, k2)


@needs_core
def test_compiled_budget_overflow():
    fld = rotating_field()
    s, k = tracer.closure_status(np.array([[0.0, 0.0]]), fld, 0.01, 0.04, (0.5, 0.5), max_steps=50, backend="compiled")
    assert s[0] == tracer.FAILED and k[0] == 50


def test_backend_errors():
    fld = uniform_field(0.0)
    plain = type(fld)(fld.vector, fld.jacobian)
    with pytest.raises(ValueError):
        tracer.closure_status(np.zeros((1, 2)), fld, 0.1, 0.1, (0.5, 0.5), backend="gpu")
    if tracer._core is not None:
        with pytest.raises(ValueError):
            tracer.closure_status(np.zeros((1, 2)), plain, 0.1, 0.1, (0.5, 0.5), backend="compiled")


def test_fallback_without_extension(monkeypatch):
    case = example1_case(0.5, 0.85, np.pi / 4, 1e-6)
    grid = build_grid(0.5, 0.5, 8, 8)
    ref = classify_nodes(grid, case).tags
    monkeypatch.setattr(tracer, "_core", None)
    assert not tracer.compiled_available()
    assert np.array_equal(classify_nodes(grid, case).tags, ref)


def test_pure_environment_switch():
    code = "import islandap.tracer as t; print(t.compiled_available())"
    r = subprocess.run([sys.executable, "-c", code], env={"ISLANDAP_PURE": "1", "PATH": ""}, capture_output=True, text=True)
    assert r.stdout.strip() == "False"
