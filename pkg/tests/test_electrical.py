import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwce.checks import random_network
from rwce.electrical import (absorbing_walks, effective_resistance, escape_potential, flow_energy,
                             kirchhoff_defect, net_crossings_estimate, ohm_defect, perturbation_bound,
                             random_unit_flow, resistance_profile, return_probability, separator_bound_check,
                             solve_voltage, unit_current, voltage_difference_identity)
from rwce.errors import AbsorptionError, ConnectivityError, PreconditionError
from rwce.graphs import (ball, collapse_boundary, geometric_weights, grid2d, line, network_from_edges, tree)


def pinv_resistance(n_vertices, edges, cond, s, t):
    """Oracle: R_eff from the Laplacian pseudo-inverse."""
    L = np.zeros((n_vertices, n_vertices))
    for (i, j), c in zip(edges, cond):
        L[i, i] += c
        L[j, j] += c
        L[i, j] -= c
        L[j, i] -= c
    e = np.zeros(n_vertices)
    e[s], e[t] = 1, -1
    return float(e @ np.linalg.pinv(L) @ e)


def l1_box_collapsed(n):
    """Z^2 ball of radius n with the boundary glued to one vertex, built by hand."""
    pts = [(x, y) for x in range(-n, n + 1) for y in range(-n, n + 1) if abs(x) + abs(y) <= n]
    inner = [p for p in pts if abs(p[0]) + abs(p[1]) < n]
    idx = {p: i for i, p in enumerate(inner)}
    sink = len(inner)
    edges, cond = [], []
    for p in inner:
        for q in ((p[0] + 1, p[1]), (p[0], p[1] + 1), (p[0] - 1, p[1]), (p[0], p[1] - 1)):
            if q in idx:
                if idx[p] < idx[q]:
                    edges.append((idx[p], idx[q]))
                    cond.append(1.0)
            else:
                edges.append((idx[p], sink))
                cond.append(1.0)
    return sink + 1, edges, cond, idx[(0, 0)], sink


def test_series_and_parallel():
    path = network_from_edges([(0, 1), (1, 2)], [1.0, 0.5])
    assert effective_resistance(path, None, 0, 2) == pytest.approx(3.0, abs=1e-12)
    par = network_from_edges([(0, 1), (1, 3), (0, 2), (2, 3)])
    assert effective_resistance(par, None, 0, 3) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [2, 5, 10, 40])
def test_line_resistance_half_n(n):
    net = collapse_boundary(ball(line(), n))
    assert effective_resistance(net, None, 0, net.sink) == pytest.approx(n / 2, abs=1e-12)
    assert return_probability(net) == pytest.approx(1 - 1 / n, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 4, 7])
def test_grid_against_pinv(n):
    nv, edges, cond, o, s = l1_box_collapsed(n)
    ref = pinv_resistance(nv, edges, cond, o, s)
    net = collapse_boundary(ball(grid2d(), n))
    assert effective_resistance(net, None, 0, net.sink) == pytest.approx(ref, rel=1e-10)


def test_grid_radius_two_value():
    # by symmetry the four neighbours share one voltage: 4 unit edges in
    # parallel, then 12 unit edges into the sink, so R = 1/4 + 1/12
    net = collapse_boundary(ball(grid2d(), 2))
    assert effective_resistance(net, None, 0, net.sink) == pytest.approx(1 / 3, abs=1e-12)


def test_tree_levels_in_parallel():
    # binary tree with root degree 2: level k holds 2^k unit edges in parallel
    for n in range(1, 8):
        net = collapse_boundary(ball(tree(2), n))
        ref = sum(2.0 ** -k for k in range(1, n + 1))
        assert effective_resistance(net, None, 0, net.sink) == pytest.approx(ref, abs=1e-12)


def test_geometric_closed_form():
    lam = 2.0
    prof = resistance_profile(line(), geometric_weights(lam), list(range(1, 31)))
    for n, r in zip(prof.radii, prof.values):
        right = sum(lam ** -k for k in range(n))          # edges (k, k+1), k >= 0
        left = sum(lam ** k for k in range(1, n + 1))     # edges (-k, -k+1) carry lam^(-k)
        assert r == pytest.approx(right * left / (right + left), rel=1e-12)
    assert prof.origin_conductance == pytest.approx(1.5)
    assert prof.return_probabilities[-1] == pytest.approx(2 / 3, abs=1e-8)
    assert prof.verdict == "convergent"
    assert prof.limiting_return_probability == pytest.approx(2 / 3, abs=1e-8)


def test_profile_divergent_on_line():
    prof = resistance_profile(line(), None, list(range(1, 21)))
    assert prof.monotone and prof.verdict == "divergent"
    assert prof.limiting_return_probability == 1.0


def test_voltage_linear_and_harmonic():
    net = collapse_boundary(ball(line(), 6))
    v = solve_voltage(net, None, 0, net.sink)
    assert v.residual < 1e-12
    assert v.values[0] == 1.0 and v.values[net.sink] == 0.0
    labels = net.labels[:-1]
    for i, x in enumerate(labels):
        assert v.values[i] == pytest.approx(1 - abs(x) / 6, abs=1e-12)


def test_escape_potential_complements_voltage():
    net = collapse_boundary(ball(grid2d(), 3))
    v = solve_voltage(net, None, 0, net.sink).values
    assert np.allclose(escape_potential(net, None, 0, net.sink), 1 - v, atol=1e-14)


def test_disconnected_raises():
    net = network_from_edges([(0, 1), (2, 3)])
    with pytest.raises(ConnectivityError):
        solve_voltage(net, None, 0, 1)


def test_unit_current_properties():
    rng = np.random.default_rng(0)
    for _ in range(20):
        net = random_network(rng)
        s = net.n_vertices - 1
        i = unit_current(net, None, 0, s)
        assert i.strength == pytest.approx(1.0, abs=1e-12)
        assert i.node_balance_defect() < 1e-12
        r = effective_resistance(net, None, 0, s)
        assert flow_energy(i, net.resistance) == pytest.approx(r, rel=1e-12)
        assert kirchhoff_defect(i, net.resistance) < 1e-10
        assert ohm_defect(net, None, 0, s) < 1e-10


def test_crossings_match_unit_current():
    net = collapse_boundary(ball(grid2d(), 2))
    i = unit_current(net, None, 0, net.sink)
    est = net_crossings_estimate(net, None, 0, net.sink, 20_000, seed=7)
    assert est.agrees_with(i, 4.0).all()


def test_absorbing_walk_cap():
    net = collapse_boundary(ball(line(), 50))
    with pytest.raises(AbsorptionError):
        absorbing_walks(net, None, 0, net.sink, 10, seed=0, max_steps=5)


def test_voltage_difference_identity_random():
    rng = np.random.default_rng(3)
    for _ in range(30):
        net = random_network(rng)
        c0 = rng.uniform(0.2, 5, len(net.edges))
        c1 = rng.uniform(0.2, 5, len(net.edges))
        x = int(rng.integers(1, net.n_vertices - 1))
        chk = voltage_difference_identity(net, c0, c1, x, 0, net.n_vertices - 1)
        assert chk.discrepancy < 1e-10


def test_voltage_difference_identity_rejects_fixed_vertex():
    net = collapse_boundary(ball(line(), 3))
    with pytest.raises(PreconditionError):
        voltage_difference_identity(net, None, None, 0)


def test_perturbation_bound_on_grid():
    b = ball(grid2d(), 3)
    rng = np.random.default_rng(1)
    c1 = rng.uniform(0.5, 2, b.n_edges)
    c2 = rng.uniform(0.5, 2, b.n_edges)
    chk = perturbation_bound(c1, c2, b)
    assert chk.holds and len(chk.differences) == 3


def test_separator_bound():
    # path 0-1-2-3 with S = {1}: vertex 1 separates 3 from 0
    net = network_from_edges([(0, 1), (1, 2), (2, 3)], [1.0, 2.0, 3.0])
    chk = separator_bound_check(net, None, 0, [1], [3], 3)
    assert chk.holds
    with pytest.raises(PreconditionError):
        separator_bound_check(net, None, 0, [2], [3], 1)


# --- properties ---------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(1.01, 10.0))
def test_rayleigh_monotone(seed, factor):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    s = net.n_vertices - 1
    c = net.conductance.copy()
    r0 = effective_resistance(net, c, 0, s)
    c[int(rng.integers(len(c)))] /= factor
    assert effective_resistance(net, c, 0, s) >= r0 * (1 - 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.01, 2.0))
def test_thomson(seed, scale):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    s = net.n_vertices - 1
    i = unit_current(net, None, 0, s)
    f = random_unit_flow(net, i, rng, scale)
    assert f.strength == pytest.approx(1.0, abs=1e-10)
    assert flow_energy(f, net.resistance) >= flow_energy(i, net.resistance) - 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_return_probability_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    p = return_probability(net, None, 0, net.n_vertices - 1)
    assert 0.0 <= p <= 1.0
