import math
from types import SimpleNamespace

import numpy as np
import pytest

from islandap.analysis import CSV_COLUMNS, ConvergenceReport, StudyRow, eoc, error_norms, normalize_grids, run_study
from islandap.field import ConfigError, example1_case
from islandap.grid import build_grid


def test_error_norms_exact():
    grid = build_grid(0.5, 0.5, 4, 4)
    X, Y = grid.node_coords()
    f = lambda x, y: np.sin(x) * y  # noqa: E731
    assert error_norms(f(X, Y).ravel(), f, grid) == (0.0, 0.0)


def test_error_norms_single_node():
    grid = SimpleNamespace(hx=1.0, hy=1.0)  # 3x3 nodes, unit spacing
    u = np.zeros(9)
    u[4] = 1.0
    assert error_norms(u, np.zeros(9), grid) == (1.0, 1.0)


def test_error_norms_constant_offset():
    grid = build_grid(0.5, 0.25, 4, 2)
    c = -0.3
    l2, linf = error_norms(np.full(grid.n_nodes, c), np.zeros(grid.n_nodes), grid)
    assert linf == pytest.approx(abs(c))
    assert l2 == pytest.approx(abs(c) * math.sqrt(grid.hx * grid.hy * grid.n_nodes))


def test_error_norms_permutation_and_scaling():
    grid = build_grid(0.5, 0.5, 4, 4)
    rng = np.random.default_rng(0)
    e = rng.normal(size=grid.n_nodes)
    p = rng.permutation(grid.n_nodes)
    a = error_norms(e, np.zeros_like(e), grid)
    assert error_norms(e[p], np.zeros_like(e), grid) == pytest.approx(a, rel=1e-14)
    assert error_norms(-3 * e, np.zeros_like(e), grid) == pytest.approx((3 * a[0], 3 * a[1]), rel=1e-14)


def test_error_norms_shape_mismatch():
    with pytest.raises(ValueError):
        error_norms(np.zeros(3), np.zeros(4), build_grid(0.5, 0.5, 2, 2))


def test_eoc_examples():
    assert eoc([4e-2, 1e-2], [0.1, 0.05]) == [pytest.approx(2.0)]
    assert eoc([1e-2, 5e-3], [0.1, 0.05]) == [pytest.approx(1.0)]


def test_eoc_exact_quadratic():
    h = [2.0**-k for k in range(2, 8)]
    assert eoc([3 * v * v for v in h], h) == [2.0] * 5


def test_eoc_undefined():
    r = eoc([1e-3, 0.0, 1e-4], [0.1, 0.05, 0.025])
    assert all(math.isnan(v) for v in r)
    with pytest.raises(ValueError):
        eoc([1.0], [1.0])
    with pytest.raises(ValueError):
        eoc([1.0, 2.0], [1.0])


def test_normalize_grids():
    assert normalize_grids([64, 16, (32, 16), 16], (1.0, 0.5)) == [(16, 8), (32, 16), (64, 32)]
    with pytest.raises(ConfigError):
        normalize_grids([], (0.5, 0.5))


def test_report_csv_format():
    rows = [StudyRow(1e-6, 16, 16, 1 / 32, 1 / 32, 0.1, 0.2, wall_ms=1.23456), StudyRow(1e-6, 32, 32, 1 / 64, 1 / 64, 0.025, 0.05, 2.0, 2.0)]
    rep = ConvergenceReport("ex", "ap", "two", rows)
    text = rep.to_csv()
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == "ex,ap,two,1e-06,16,16,0.03125,0.03125,0.1,0.2,,,,1.235"
    assert lines[2].startswith("ex,ap,two,1e-06,32,32,0.015625,0.015625,0.025,0.05,2.0,2.0,,")
    assert rep.to_csv(timing=False).splitlines()[1].endswith(",")
    assert rep.finest_eoc(1e-6) == (2.0, 2.0)


@pytest.fixture(scope="module")
def small_study():
    case = example1_case(0.5, 0.85, math.pi / 4, 1e-3)
    return run_study(case, [1e-3, 1e-9], [16, 8, 32])


def test_run_study_rows(small_study):
    rep = small_study
    assert [(r.eps, r.I) for r in rep.rows] == [(1e-3, 8), (1e-3, 16), (1e-3, 32), (1e-9, 8), (1e-9, 16), (1e-9, 32)]
    assert not rep.failures
    for r in rep.rows:
        assert r.l2 >= 0 and r.linf >= 0 and r.backward_error < 1e-12 and math.isnan(r.cond)
    assert math.isnan(rep.rows[0].eoc_l2)
    for eps in (1e-3, 1e-9):
        e2, einf = rep.finest_eoc(eps)
        assert 1.5 < e2 < 2.5 and 1.5 < einf < 2.5


def test_run_study_deterministic(small_study):
    case = example1_case(0.5, 0.85, math.pi / 4, 1e-3)
    again = run_study(case, [1e-3, 1e-9], [8, 16, 32])
    assert again.to_csv(timing=False) == small_study.to_csv(timing=False)


def test_run_study_condition_column():
    case = example1_case(0.5, 0.85, math.pi / 4, 1e-3)
    rep = run_study(case, [1e-3, 1e-9], [8, 16], cond=True)
    conds = [r.cond for r in rep.rows]
    assert all(c >= 1 for c in conds)
    # equilibrated condition numbers do not grow with 1/eps
    assert max(conds[2:]) < 3 * max(conds[:2])


def test_run_study_records_failures():
    # a factory that breaks at one eps: the row fails, the study goes on
    def make(eps):
        case = example1_case(0.5, 0.5, 0.0, eps)
        if eps == 1e-6:
            from dataclasses import replace

            return replace(case, source=lambda x, y: np.full(np.shape(np.asarray(x) + y), np.nan))
        return case

    rep = run_study(make, [1e-3, 1e-6], [8, 16])
    assert len(rep.rows) == 4
    assert all(r.ok for r in rep.select(1e-3))
    assert all(not r.ok and "AssemblyError" in r.error for r in rep.select(1e-6))
    assert len(rep.failures) == 2


def test_run_study_validation():
    case = example1_case(0.5, 0.5, 0.0, 1e-3)
    with pytest.raises(ConfigError):
        run_study(case, [], [8])
    with pytest.raises(ConfigError):
        run_study(case, [1e-3], [8], scheme="fem")
