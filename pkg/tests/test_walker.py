import numpy as np
import pytest

from rwce.environment import (FreezeRule, LinearlyReinforced, OnceReinforced, RandomSchedule,
                              ScheduledEnvironment, StaticEnvironment)
from rwce.errors import CapExceededError, ImproperConfigError, PreconditionError, TruncationExceededError
from rwce.graphs import ball, geometric_weights, grid2d, line, split_at_origin, tree, triangle
from rwce.walker import (NOT_HIT, classify, exact_law, frozen_law, frozen_process_check, hitting_time,
                         martingale_trace, nonadaptive_equivalence, one_step_martingale_check, simulate,
                         total_variation, transition_distribution, transition_probabilities)


def test_transition_probabilities():
    assert np.allclose(transition_probabilities([1, 3]), [0.25, 0.75])
    for bad in ([1, 0], [1, -1], [np.inf, 1], []):
        with pytest.raises(ImproperConfigError):
            transition_probabilities(bad)


def test_transition_distribution_geometric():
    b = ball(line(), 3)
    nb, p = transition_distribution(b, 0, b.weights(geometric_weights(2.0)))
    d = dict(zip(nb, p))
    assert d[1] == pytest.approx(1 / 1.5) and d[-1] == pytest.approx(0.5 / 1.5)
    with pytest.raises(PreconditionError):
        transition_distribution(b, 3, b.weights(None))


def test_simulate_is_deterministic():
    env = OnceReinforced(2.0)
    a = simulate(line(), env, 300, 50, seed=123)
    b = simulate(line(), env, 300, 50, seed=123)
    assert all(np.array_equal(x.positions, y.positions) for x, y in zip(a.trajectories, b.trajectories))
    c = simulate(line(), env, 300, 50, seed=124)
    assert not all(np.array_equal(x.positions, y.positions) for x, y in zip(a.trajectories, c.trajectories))


def test_trial_reproducible_in_isolation():
    env = LinearlyReinforced(1.0)
    few = simulate(grid2d(), env, 200, 3, seed=9)
    many = simulate(grid2d(), env, 200, 3000, seed=9)
    for k in range(3):
        assert few.trajectories[k].labels == many.trajectories[k].labels


def test_thread_count_does_not_change_results():
    env = ScheduledEnvironment(None, 1.0, 0.5, 2.0)
    a = simulate(line(), env, 100, 5000, seed=4, record_paths=False, threads=1)
    b = simulate(line(), env, 100, 5000, seed=4, record_paths=False, threads=3)
    assert np.array_equal(a.first_return, b.first_return)
    assert np.array_equal(a.visits, b.visits)


def test_paths_are_nearest_neighbour_and_ball_grows():
    res = simulate(line(), StaticEnvironment(), 2000, 20, seed=1)
    for tr in res.trajectories:
        lab = np.array(tr.labels)
        assert np.all(np.abs(np.diff(lab)) == 1)
        assert tr.ball.radius > np.abs(lab).max()


def test_first_return_matches_hitting_time():
    res = simulate(line(), StaticEnvironment(), 500, 30, seed=2)
    for tr in res.trajectories:
        t = hitting_time(tr.labels[1:], [0])
        assert tr.first_return == (NOT_HIT if t == NOT_HIT else t + 1)


def test_truncation_modes():
    with pytest.raises(TruncationExceededError) as err:
        simulate(tree(3), StaticEnvironment(), 500, 10, seed=0, max_radius=4)
    assert err.value.partial is not None
    res = simulate(tree(3), StaticEnvironment(), 500, 10, seed=0, max_radius=4, on_truncation="stop")
    assert res.truncated.all() and res.final_radius <= 4


def test_step_frequencies_match_kernel():
    b = ball(line(), 2)
    w = geometric_weights(3.0)
    res = simulate(line(), StaticEnvironment(w), 1, 10_000, seed=5)
    up = np.mean([t.labels[1] == 1 for t in res.trajectories])
    _, p = transition_distribution(b, 0, b.weights(w))
    p_up = p[list(transition_distribution(b, 0, b.weights(w))[0]).index(1)]
    assert abs(up - p_up) <= 4 * np.sqrt(p_up * (1 - p_up) / 10_000)


def test_env_recording_matches_rule():
    res = simulate(line(), OnceReinforced(5.0), 50, 3, seed=3, record_env=True)
    for tr in res.trajectories:
        trace = tr.env_trace()
        b = tr.ball
        seen = set()
        for t, (u, v) in enumerate(zip(tr.labels, tr.labels[1:])):
            seen.add(b.edge_index(u, v))
            c = trace.configs[t + 1]
            assert all(c[e] == 5.0 for e in seen)
            assert np.sum(c == 5.0) == len(seen)


def test_exact_law_srw():
    law = exact_law(line(), StaticEnvironment(), 4)
    assert law.total == pytest.approx(1.0)
    m2 = law.marginal(2)
    assert m2[0] == pytest.approx(0.5) and m2[2] == pytest.approx(0.25)
    assert law.marginal(4)[0] == pytest.approx(6 / 16)


def test_exact_law_orrw_triangle():
    # after 0 -> 1 the reinforced edge carries weight 2 against 1
    law = exact_law(triangle(), OnceReinforced(2.0), 2)
    assert law.marginal(2)[0] == pytest.approx(2 / 3)


def test_exact_law_vs_simulation():
    env = OnceReinforced(3.0)
    law = exact_law(line(), env, 4)
    res = simulate(line(), env, 4, 20_000, seed=8)
    x4 = np.array([t.labels[4] for t in res.trajectories])
    for x, p in law.marginal(4).items():
        f = np.mean(x4 == x)
        assert abs(f - p) <= 4 * np.sqrt(p * (1 - p) / 20_000) + 1e-12


def test_exact_law_cap():
    with pytest.raises(CapExceededError):
        exact_law(grid2d(), StaticEnvironment(), 6, atom_cap=100)


def test_nonadaptive_equivalence():
    assert nonadaptive_equivalence(line(), ScheduledEnvironment(None, 1.0, 0.5, 1.0), 4) < 1e-12
    env = RandomSchedule([(0.5, StaticEnvironment()), (0.5, ScheduledEnvironment(None, 2.0, 0.3, 0.0))])
    assert nonadaptive_equivalence(line(), env, 4) < 1e-12
    with pytest.raises(PreconditionError):
        nonadaptive_equivalence(line(), OnceReinforced(), 3)


def test_total_variation():
    assert total_variation({1: 0.5, 2: 0.5}, {1: 1.0}) == pytest.approx(0.5)


def test_frozen_gamma_law_by_hand():
    # each new edge moves R by 50, so gamma is the time of the second new edge;
    # at every step the walk takes a fresh edge with probability 1/3
    env = OnceReinforced(delta=0.02, initial=0.01)
    rule = FreezeRule(ball(triangle(), 2), None, 0, (), 2, 100.0)
    _, gamma_law, _ = frozen_law(triangle(), env, rule, 4)
    expect = {2: 1 / 3, 3: 2 / 9, 4: 4 / 27, None: 8 / 27}
    assert set(gamma_law) == set(expect)
    for k, v in expect.items():
        assert gamma_law[k] == pytest.approx(v, abs=1e-14)
    chk = frozen_process_check(triangle(), env, rule, 4)
    assert chk.passed


def test_martingale_trace_stops():
    fam = line()
    split = split_at_origin(fam, 3)
    env = ScheduledEnvironment(None, 1.0, 0.5, 1.0)
    res = simulate(fam, env, 200, 20, seed=6, start=2, record_env=True)
    k = split.component_of(2)
    for tr in res.trajectories:
        if tr.ball.radius < 6:
            continue
        mt = martingale_trace(tr, split, k, 6)
        assert np.all(mt.a[mt.tau:] == mt.a[min(mt.tau, len(mt.a) - 1)])
        assert np.all(mt.b[mt.tau:] == mt.b[min(mt.tau, len(mt.b) - 1)])
        assert np.all(mt.a <= mt.b + 1e-15)


@pytest.mark.parametrize("env", [StaticEnvironment(), ScheduledEnvironment(None, 1.0, 0.5, 1.0),
                                 OnceReinforced(2.0), LinearlyReinforced(1.0)], ids=lambda e: e.kind)
def test_one_step_martingale(env):
    fam = line()
    split = split_at_origin(fam, 3)
    for k in (0, 1):
        chk = one_step_martingale_check(fam, env, split, k, 4, depth=2)
        assert chk.states > 0 and chk.passes(1e-10)


def test_one_step_martingale_grid_static_equality():
    fam = grid2d()
    split = split_at_origin(fam, 4)
    chk = one_step_martingale_check(fam, StaticEnvironment(), split, 0, 3, depth=1)
    assert chk.passes() and chk.max_equality_gap < 1e-12


def test_classify_static_line_recurrent():
    rep = classify(line(), StaticEnvironment(), 2000, 200, list(range(5, 31, 5)), seed=0)
    assert rep.verdict == "recurrent-by-theorem"
    assert rep.slowness_verdict == "hypothesis-plausible"


def test_classify_lrrw_fails_hypothesis():
    rep = classify(line(), LinearlyReinforced(1.0), 2000, 50, [5, 10], seed=0)
    assert rep.verdict == "hypothesis-fails"
