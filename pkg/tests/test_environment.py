import numpy as np
import pytest

from rwce.environment import (BumpEnvironment, EnvTrace, Geometry, LinearlyReinforced, ListSchedule,
                              OnceReinforced, RandomSchedule, RuleEnvironment, ScheduledEnvironment,
                              StaticEnvironment, evolve, freeze_at, frozen_trace, gamma_star, lower_bound_check,
                              monotone_identity, pi_factor, plateau, ratio_bound_check, ratio_certificate,
                              run_environment, slowness_report, summable_weights)
from rwce.errors import DomainError, PreconditionError, ScheduleExhaustedError
from rwce.graphs import ball, box_grid, grid2d, line, split_at_origin


def walk_edges(b, labels):
    return [b.edge_index(u, v) for u, v in zip(labels, labels[1:])]


def test_static_never_changes():
    b = ball(line(), 3)
    tr = run_environment(StaticEnvironment(2.0), b, [0, 1, 2, 1])
    assert np.all(tr.configs == 2.0) and tr.dgamma.sum() == 0


def test_orrw_sets_delta_once():
    b = ball(line(), 4)
    env = OnceReinforced(3.0)
    path = [0, 1, 2, 1, 0, -1, 0]
    tr = run_environment(env, b, walk_edges(b, path))
    last = tr.configs[-1]
    for u, v in [(0, 1), (1, 2), (-1, 0)]:
        assert last[b.edge_index(u, v)] == 3.0
    assert last[b.edge_index(2, 3)] == 1.0
    # three distinct edges, each moved by |1 - 1/3| once
    assert tr.dgamma.sum() == pytest.approx(3 * (1 - 1 / 3))


def test_lrrw_counts_traversals():
    b = ball(line(), 3)
    path = [0, 1, 0, 1, 2]
    tr = run_environment(LinearlyReinforced(1.0), b, walk_edges(b, path))
    assert tr.configs[-1][b.edge_index(0, 1)] == 4.0
    assert tr.configs[-1][b.edge_index(1, 2)] == 2.0


def test_rule_environment():
    env = RuleEnvironment(lambda t, c, e: c * 1.5)
    b = ball(line(), 2)
    c, _ = evolve(env, b, env.initial(b), 0)
    assert np.allclose(c, 1.5)


def test_scheduled_gamma_closed_form():
    b = ball(line(), 6)
    env = ScheduledEnvironment(None, amplitude=0.7, rate=0.6, p=2.0)
    T = 30
    tr = run_environment(env, b, [0] * T)
    w = summable_weights(b, 2.0)
    assert tr.dgamma.sum() == pytest.approx(0.7 * w.sum() * (1 - 0.6 ** T), rel=1e-12)
    series = env.gamma_series(b, np.arange(T + 1))
    assert np.allclose(series, np.r_[0.0, np.cumsum(tr.dgamma)], rtol=1e-12, atol=1e-15)
    # resistances only decrease, so Gamma equals the net change
    total, net = monotone_identity(tr)
    assert total == pytest.approx(net, rel=1e-12)


def test_scheduled_rejects_bad_rate():
    with pytest.raises(DomainError):
        ScheduledEnvironment(None, 1.0, 1.0)


def test_bump_goes_up_and_down():
    b = ball(line(), 2)
    env = BumpEnvironment(None, (0, 1), 0.5, t0=2, duration=2)
    tr = run_environment(env, b, [0] * 5)
    e = b.edge_index(0, 1)
    assert list(1 / tr.configs[:, e]) == [1, 1, 1.5, 1.5, 1, 1]
    assert tr.dgamma.sum() == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        monotone_identity(tr)


def test_list_schedule_exhausts():
    b = ball(line(), 2)
    env = ListSchedule([1.0, 2.0])
    run_environment(env, b, [0])
    with pytest.raises(ScheduleExhaustedError):
        run_environment(env, b, [0, 0])


def test_random_schedule_validation():
    with pytest.raises(DomainError):
        RandomSchedule([(0.5, StaticEnvironment()), (0.4, StaticEnvironment())])
    with pytest.raises(DomainError):
        RandomSchedule([(1.0, OnceReinforced())])


def test_lower_bound_holds_for_reinforcement():
    b = ball(line(), 5)
    rng = np.random.default_rng(0)
    path = [0]
    for _ in range(60):
        nxt = path[-1] + int(rng.choice([-1, 1]))
        path.append(max(-4, min(4, nxt)))
        if path[-1] == path[-2]:
            path.pop()
    for env in (OnceReinforced(0.3), LinearlyReinforced(2.0), OnceReinforced(5.0)):
        tr = run_environment(env, b, walk_edges(b, path))
        assert lower_bound_check(tr).holds


def test_pi_factor_and_gamma_star_by_hand():
    b = ball(line(), 3)
    c = np.arange(1.0, b.n_edges + 1)
    # E_(1) = the two edges at the origin, degree 2 everywhere
    m1 = b.edges_within(1)
    assert pi_factor(b, c, 1) == pytest.approx(c[:m1].min() / (2 * c[:m1].max()))
    geo = Geometry.of(b, 2)
    m2 = b.edges_within(2)
    expect = 2 * 2 * c[:m1].max() * c[:m2].max() / c[:m2].min()
    assert gamma_star(geo, c) == pytest.approx(expect)


def test_plateau():
    assert plateau(np.r_[np.arange(5.0), np.full(12, 4.0)])
    assert not plateau(np.arange(20.0))


def test_slowness_report_static_plausible():
    b = ball(grid2d(), 4)
    tr = run_environment(StaticEnvironment(), b, [0] * 20)
    rep = slowness_report(tr, 3)
    assert rep.verdict == "hypothesis-plausible" and rep.gamma_total == 0


def test_slowness_report_lrrw_not_plausible():
    b = ball(line(), 3)
    path = [0, 1] * 15
    tr = run_environment(LinearlyReinforced(1.0), b, walk_edges(b, path))
    assert slowness_report(tr, 1).verdict == "not-plausible"


def test_ratio_certificate_static_is_trivial():
    fam = line()
    b = ball(fam, 6)
    split = split_at_origin(fam, 3)
    tr = run_environment(StaticEnvironment(), b, [0] * 5)
    cert = ratio_certificate(tr, split, 0, [1, 3, 6])
    assert np.all(cert.alpha == 1) and np.all(cert.beta == 1)
    assert np.all(cert.lam() == 1)


def test_ratio_certificate_orientation():
    # resistances fall over time: escape potential rises, so alpha > 1 = beta
    fam = line()
    b = ball(fam, 5)
    split = split_at_origin(fam, 3)
    env = ScheduledEnvironment(None, 1.0, 0.5, 1.0)
    tr = run_environment(env, b, [0] * 6)
    cert = ratio_certificate(tr, split, 0, [2, 5])
    assert np.all(cert.alpha >= 1) and np.all(cert.beta <= 1)
    assert ratio_bound_check(cert, tr, split).holds


def test_ratio_bound_on_5x5_grid():
    fam = box_grid(5)
    b = ball(fam, 4)
    split = split_at_origin(fam, 4)
    rng = np.random.default_rng(2)
    configs = np.exp(np.cumsum(rng.normal(0, 0.05, (15, b.n_edges)), axis=0))
    tr = EnvTrace.from_configs(b, configs)
    cert = ratio_certificate(tr, split, 0, [3, 4])
    assert ratio_bound_check(cert, tr, split).holds


def test_ratio_certificate_radius_below_dmax():
    fam = grid2d()
    b = ball(fam, 4)
    split = split_at_origin(fam, 4)
    tr = run_environment(StaticEnvironment(), b, [0] * 2)
    with pytest.raises(PreconditionError):
        ratio_certificate(tr, split, 0, [2])


def test_freeze_fires_and_holds_config():
    b = ball(line(), 4)
    env = LinearlyReinforced(1.0)
    path = [0, 1, 0, 1, 0, 1, 0, 1]
    tr = run_environment(env, b, walk_edges(b, path))
    res = freeze_at(env, tr, m=30.0)
    assert res.triggered
    g = res.gamma
    assert max(res.gamma_t[-1], res.gamma_star_t[-1]) >= 30.0
    ft = frozen_trace(tr, g)
    assert np.array_equal(ft.configs[:g], tr.configs[:g])
    assert np.all(ft.configs[g:] == tr.configs[g - 1])


def test_freeze_not_triggered_for_static():
    b = ball(line(), 4)
    tr = run_environment(StaticEnvironment(), b, [0] * 5)
    res = freeze_at(StaticEnvironment(), tr, m=100.0)
    assert not res.triggered and frozen_trace(tr, None) is tr
