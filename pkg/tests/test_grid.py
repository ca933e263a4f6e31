import numpy as np
import pytest

from islandap.field import ConfigError
from islandap.grid import NodeKind, build_grid, classify_nodes
from islandap.tracer import trace_method_two, default_step


def test_spacing_example1_geometry():
    g = build_grid(0.5, 0.5, 32, 32)
    assert g.hx == g.hy == 0.015625


def test_spacing_example2_geometry():
    g = build_grid(1.0, 0.5, 64, 32)
    assert g.hx == g.hy == 0.015625
    assert (g.nx, g.ny) == (129, 65)
    assert g.n_nodes == 129 * 65


@pytest.mark.parametrize("args", [(0.5, 0.5, 0, 4), (0.5, 0.5, 4, 1), (-1.0, 0.5, 4, 4), (0.5, 0.0, 4, 4), (0.5, 0.5, 2.5, 4)])
def test_invalid_grid(args):
    with pytest.raises(ConfigError):
        build_grid(*args)


def test_node_coordinates_and_index_roundtrip():
    g = build_grid(1.0, 0.5, 8, 4)
    k = g.index(0, 0)
    assert g.coords(*g.ij(k)) == (0.0, 0.0)
    ks = np.arange(g.n_nodes)
    i, j = g.ij(ks)
    assert np.array_equal(g.index(i, j), ks)
    X, Y = g.node_coords()
    assert np.allclose(X, i * g.hx) and np.allclose(Y, j * g.hy)


def test_boundary_rule():
    g = build_grid(0.5, 0.5, 6, 6)
    i, j = g.ij(np.arange(g.n_nodes))
    expected = (np.abs(i) == 6) | (np.abs(j) == 6)
    assert np.array_equal(g.boundary_mask(), expected)
    assert g.boundary_mask().sum() == g.n_nodes - 11 * 11


def test_boundary_reflection_symmetry():
    g = build_grid(1.0, 0.5, 7, 5)
    mask = g.boundary_mask().reshape(g.ny, g.nx)
    assert np.array_equal(mask, mask[::-1, :])
    assert np.array_equal(mask, mask[:, ::-1])


def test_example1a_classification(ex1):
    """Circles of radius < 0.5 close; nodes whose circle leaves the box are open."""
    case = ex1("a")
    g = build_grid(0.5, 0.5, 32, 32)
    nc = classify_nodes(g, case)
    X, Y = g.node_coords()
    i, j = g.ij(np.arange(g.n_nodes))
    interior = ~g.boundary_mask()
    r = np.hypot(X, Y)
    cut = set(int(k) for k in nc.cut_nodes)
    assert cut == {int(g.index(ii, 0)) for ii in range(-31, 0)}
    tags = nc.tags
    inside = interior & (r < 0.5 - 1e-9)
    assert np.all(np.isin(tags[inside], (NodeKind.CLOSED_INTERIOR, NodeKind.CUT)))
    outside = interior & (r > 0.5 + g.hx)
    assert np.all(tags[outside] == NodeKind.OPEN_INTERIOR)
    assert tags[g.index(-32, 0)] == NodeKind.BOUNDARY
    assert tags[g.index(0, 0)] == NodeKind.CLOSED_INTERIOR


def test_classification_matches_single_line_oracle(ex1):
    """Batch tags agree with tracing each node on its own."""
    case = ex1("c")
    g = build_grid(0.5, 0.5, 8, 8)
    nc = classify_nodes(g, case)
    step = default_step(g.hx, g.hy)
    X, Y = g.node_coords()
    for k in np.flatnonzero(~g.boundary_mask()):
        if X[k] == 0 and Y[k] == 0:
            continue
        line = trace_method_two((X[k], Y[k]), case.field, step, g.hx, g.bounds)
        closed = nc.tags[k] in (NodeKind.CLOSED_INTERIOR, NodeKind.CUT)
        assert line.closed == closed, (g.ij(k), line.kind)


def test_cut_lines_start_and_end_at_node(ex1):
    case = ex1("b")
    g = build_grid(0.5, 0.5, 16, 16)
    nc = classify_nodes(g, case, trace_all=False)
    X, Y = g.node_coords()
    assert len(nc.lines) == len(nc.cut_nodes) > 0
    for k, line in nc.lines.items():
        assert tuple(line.points[0]) == (X[k], Y[k])
        assert tuple(line.points[-1]) == (X[k], Y[k])


def test_example2_classification(ex2):
    case = ex2()
    g = build_grid(1.0, 0.5, 32, 16)
    nc = classify_nodes(g, case)
    i, j = g.ij(nc.cut_nodes)
    assert np.all(j == 0)
    X, _ = g.node_coords()
    xs = X[nc.cut_nodes]
    assert np.all(((xs > -1.0) & (xs < -0.5)) | ((xs > 0.0) & (xs < 0.5)))
    # both islands are populated with cut nodes
    assert np.any(xs < -0.5) and np.any(xs > 0.0)
    # corners and the band near y = +-0.5 lie outside both separatrices
    for node in [(-31, 15), (31, -15), (0, 14), (16, 15)]:
        assert nc.tags[g.index(*node)] == NodeKind.OPEN_INTERIOR
    for center in [(-16, 0), (16, 0)]:
        assert nc.tags[g.index(*center)] == NodeKind.CLOSED_INTERIOR


def test_classification_deterministic(ex2):
    g = build_grid(1.0, 0.5, 16, 8)
    a = classify_nodes(g, ex2()).tags
    b = classify_nodes(g, ex2()).tags
    assert np.array_equal(a, b)


def test_method_one_lines_are_not_identified(ex1):
    g = build_grid(0.5, 0.5, 16, 16)
    nc = classify_nodes(g, ex1("c"), method="one", trace_all=False)
    for line in nc.lines.values():
        gap = np.hypot(*(line.points[-1] - line.points[0]))
        assert 0 < gap <= g.hx
