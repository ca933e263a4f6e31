import math

import numpy as np
import pytest
import scipy.sparse as sp

from islandap.analysis import error_norms
from islandap.discretization import Discretization, LinearSystem, RowKind, operator_matrix
from islandap.grid import build_grid, classify_nodes
from islandap.solver import Factorization, SingularSystemError, condition_estimate, equilibrate, solve


def _system(A, b, kinds=None):
    A = sp.csr_matrix(A)
    n = A.shape[0]
    kinds = np.zeros(n, np.int8) if kinds is None else kinds
    return LinearSystem(None, A, np.asarray(b, float), kinds)


def test_identity():
    g = np.arange(5.0) - 2
    rep = solve(_system(sp.eye(5), g))
    assert np.array_equal(rep.solution, g)
    assert rep.residual_norm == 0.0


def test_laplacian_exact_on_linears():
    grid = build_grid(0.5, 0.5, 8, 8)
    L = operator_matrix(grid, lambda x, y: (np.ones_like(x), np.zeros_like(x), np.ones_like(x)))
    bnd = grid.boundary_mask()
    A = L + sp.diags(bnd.astype(float))
    X, Y = grid.node_coords()
    u = (X + Y).ravel()
    b = np.where(bnd, u, 0.0)
    rep = solve(_system(A, b))
    assert np.max(np.abs(rep.solution - u)) < 1e-12
    assert rep.residual_norm < 1e-10


def test_singular_matrix():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularSystemError):
        solve(_system(A, [1.0, 2.0]))
    assert condition_estimate(A, "dense") == math.inf


def test_empty_row():
    A = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SingularSystemError):
        solve(_system(A, [1.0, 0.0]))


def test_condition_simple():
    assert condition_estimate(sp.eye(7), "dense") == 1.0
    D = sp.diags([1e6, 1.0])
    assert condition_estimate(D, "dense") == pytest.approx(1e6, rel=1e-12)
    assert condition_estimate(D, "iterative") == pytest.approx(1e6, rel=1e-12)
    assert condition_estimate(D, "dense", equilibrated=True) == 1.0


def test_condition_unknown_mode():
    with pytest.raises(ValueError):
        condition_estimate(sp.eye(2), "guess")


@pytest.mark.parametrize("seed", range(5))
def test_dense_condition_matches_svd(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(20, 20))
    A = M @ M.T + 0.5 * np.eye(20)
    # infinity-norm condition number with the inverse built from the SVD
    U, s, Vt = np.linalg.svd(A)
    inv = Vt.T @ np.diag(1 / s) @ U.T
    ref = np.abs(A).sum(axis=1).max() * np.abs(inv).sum(axis=1).max()
    k = condition_estimate(sp.csr_matrix(A), "dense")
    assert ref / 3 <= k <= 3 * ref
    assert k == pytest.approx(ref, rel=1e-8)
    assert condition_estimate(sp.csr_matrix(A), "iterative") == pytest.approx(k, rel=2.0)


@pytest.fixture(scope="module")
def disc_c():
    from islandap.field import example1_case

    case = example1_case(0.5, 0.85, math.pi / 4, 1e-3)
    grid = build_grid(0.5, 0.5, 16, 16)
    return case, Discretization(grid, case, classify_nodes(grid, case, trace_all=False))


def test_capacitance_matches_direct(disc_c):
    case, disc = disc_c
    for eps in (1e-3, 1e-9):
        sys = disc.assemble(case.with_epsilon(eps))
        assert np.any(sys.row_kind == RowKind.CONSTRAINT)
        u1 = solve(sys).solution
        u2 = solve(sys, strategy="direct").solution
        assert np.max(np.abs(u1 - u2)) < 1e-11


def test_transpose_solve(disc_c):
    case, disc = disc_c
    sys = disc.assemble(case)
    rows = np.flatnonzero(sys.row_kind == RowKind.CONSTRAINT)
    fac = Factorization(sys.matrix, rows)
    rng = np.random.default_rng(0)
    b = rng.normal(size=sys.n_unknowns)
    z = fac.solve_T(b)
    AT = sys.matrix.T.tocsr()
    res = np.max(np.abs(AT @ z - b))
    assert res <= 1e-12 * (abs(AT).sum(axis=1).max() * np.max(np.abs(z)) + np.max(np.abs(b)))


def test_condition_modes_agree(disc_c):
    case, disc = disc_c
    sys = disc.assemble(case)
    kd = condition_estimate(sys, "dense", equilibrated=True)
    ki = condition_estimate(sys, "iterative", equilibrated=True)
    assert kd / 3 <= ki <= 3 * kd


def test_equilibrate_unit_rows():
    A = sp.csr_matrix(np.array([[4.0, -2.0], [0.5, 0.25]]))
    E = equilibrate(A)
    assert np.allclose(abs(E).max(axis=1).toarray().ravel(), 1.0)


def test_backward_error_and_report(disc_c):
    case, disc = disc_c
    for eps in (1e-3, 1e-6, 1e-9):
        sys = disc.assemble(case.with_epsilon(eps))
        rep = solve(sys)
        A = sys.matrix
        res = np.max(np.abs(A @ rep.solution - sys.rhs))
        bound = 1e-9 * (abs(A).sum(axis=1).max() * np.max(np.abs(rep.solution)) + np.max(np.abs(sys.rhs)))
        assert res <= bound
        assert rep.backward_error <= 1e-9
        d = rep.as_dict()
        assert d["nnz"] == A.nnz and d["fill"] >= A.nnz - sys.n_unknowns
        assert len(rep.solution) == sys.n_unknowns


def test_example1a_error_consistent_with_order(ex1):
    case = ex1("a", 1e-6)
    errs = []
    for N in (16, 32, 64):
        grid = build_grid(0.5, 0.5, N, N)
        disc = Discretization(grid, case, classify_nodes(grid, case, trace_all=False))
        errs.append(error_norms(solve(disc.assemble(case)).solution, case.exact, grid)[1])
    assert errs[1] < 2e-5
    for e0, e1 in zip(errs, errs[1:]):
        assert 1.8 < math.log2(e0 / e1) < 2.2
