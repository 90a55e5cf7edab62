import numpy as np
import pytest

from rwce.errors import GraphStructureError, ProbeRadiusError
from rwce.graphs import (ball, box_grid, collapse_boundary, explicit, geometric_weights, grid2d, line,
                         make_family, read_edge_list, split_at_origin, star_network, tree, triangle,
                         triangle_with_tail)


def test_line_ball_counts():
    b = ball(line(), 4)
    assert b.n_vertices == 9 and b.n_edges == 8
    assert set(b.boundary) == {-4, 4}
    assert b.labels[0] == 0


def test_grid_ball_is_l1_diamond():
    for n in range(1, 6):
        b = ball(grid2d(), n)
        assert b.n_vertices == 2 * n * n + 2 * n + 1
        assert all(abs(x) + abs(y) <= n for x, y in b.labels)
        assert len(b.boundary) == 4 * n


def test_tree_ball():
    b = ball(tree(2, root_degree=3), 3)
    assert b.n_vertices == 1 + 3 + 6 + 12
    assert b.degree[0] == 3 and np.all(b.degree[1:] == 3)


def test_restrict_matches_fresh_ball():
    big = ball(grid2d(), 6)
    for n in (1, 3, 5):
        small = big.restrict(n)
        ref = ball(grid2d(), n)
        assert small.labels == ref.labels
        assert np.array_equal(small.edges, ref.edges)


def test_collapse_merges_parallel_and_drops_loops():
    # on the 3x3 box every corner touches two boundary-to-boundary edges
    b = ball(box_grid(3), 1)
    net = collapse_boundary(b)
    assert net.n_vertices == 2
    assert len(net.edges) == 1 and net.conductance[0] == 4.0


def test_collapse_geometric_weights_sum():
    b = ball(line(), 3)
    net = collapse_boundary(b, geometric_weights(2.0))
    # the sink gets the edges (2,3) and (-3,-2)
    sink_c = net.conductance[(net.edges == net.sink).any(axis=1)]
    assert sorted(sink_c) == sorted([2.0 ** 2, 2.0 ** -3])


def test_explicit_rejects_bad_input(tmp_path):
    with pytest.raises(GraphStructureError):
        explicit([(0, 0)])
    with pytest.raises(GraphStructureError):
        explicit([(0, 1), (1, 0)])
    p = tmp_path / "g.txt"
    p.write_text("# comment\n0 1\n\n1 2  # trailing\n")
    assert read_edge_list(p) == [(0, 1), (1, 2)]
    p.write_text("0 1 2\n")
    with pytest.raises(GraphStructureError):
        read_edge_list(p)


def test_make_family_unknown():
    with pytest.raises(ValueError):
        make_family("hypercube")


def test_weights_negative_rejected():
    from rwce.errors import DomainError
    from rwce.graphs import as_weights
    with pytest.raises(DomainError):
        as_weights(ball(line(), 2), -1.0)


def test_split_line_two_rays():
    s = split_at_origin(line(), 3)
    assert len(s.components) == 2 and s.d_max == 1
    assert s.infinite_components == [0, 1]


def test_split_grid_single_component():
    s = split_at_origin(grid2d(), 4)
    assert len(s.components) == 1
    # neighbours of the origin meet around a unit square: V_(2) suffices
    assert s.d_max == 3


def test_split_triangle_with_tail():
    s = split_at_origin(triangle_with_tail(), 3)
    assert s.d_max == 2 and s.finite == (False,)


def test_split_finite_graph():
    s = split_at_origin(triangle(), 2)
    assert s.finite == (True,)


def test_split_probe_too_small():
    with pytest.raises(ValueError):
        split_at_origin(line(), 1)
    with pytest.raises(ProbeRadiusError):
        split_at_origin(grid2d(), 2)


def test_star_network_keeps_component():
    fam = line()
    b = ball(fam, 4)
    s = split_at_origin(fam, 3)
    net, keep = star_network(b, s, 0)
    labs = {b.labels[i] for i in keep}
    # origin plus one ray
    assert 0 in labs and (labs == {0, 1, 2, 3, 4} or labs == {0, -1, -2, -3, -4})
