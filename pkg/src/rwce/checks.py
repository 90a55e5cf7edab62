"""The verification suite shared by ``rwce verify`` and the test-suite.

Each ``criterion_*`` function returns a list of :class:`~rwce.report.CheckRow`
with the worst measured value against its tolerance.  ``scale="quick"``
shrinks Monte Carlo sample sizes and random-instance counts; thresholds are
unchanged.
"""

from __future__ import annotations

import numpy as np

from .electrical import (effective_resistance, estimate_return_probability, flow_energy, kirchhoff_defect,
                         ohm_defect, perturbation_bound, random_unit_flow, resistance_profile, return_probability,
                         solve_voltage, unit_current, voltage_difference_identity)
from .environment import (BumpEnvironment, FreezeRule, ListSchedule, OnceReinforced, RandomSchedule,
                          ScheduledEnvironment, StaticEnvironment, lower_bound_check, ratio_bound_check,
                          ratio_certificate, run_environment)
from .graphs import (ball, box_grid, collapse_boundary, geometric_weights, grid2d, line, network_from_edges,
                     split_at_origin, tree, triangle, triangle_with_tail)
from .report import CheckRow
from .walker import (classify, exact_law, frozen_process_check, nonadaptive_equivalence, one_step_martingale_check,
                     reach_bound_check, simulate, transition_distribution)

ANCHORS = {
    1: "series/parallel laws and harmonic voltage",
    2: "return probability via effective resistance",
    3: "transience of the geometric network",
    4: "voltage difference identity",
    5: "Thomson principle, Rayleigh monotonicity, Ohm law",
    6: "resistance perturbation lemma",
    7: "voltage ratio bound for slowly changing resistances",
    8: "stopped super/sub-martingale lemma",
    9: "non-adaptive construction and environment freezing",
    10: "recurrence/transience criterion under finite total change",
    11: "determinism contract",
}


def _row(crit, check, measured, threshold, relation="<="):
    return CheckRow(crit, check, ANCHORS[crit], float(measured), float(threshold), relation)


def random_network(rng: np.random.Generator, n_max: int = 12, n_min: int = 4):
    """Connected network on at most ``n_max`` vertices with log-uniform conductances."""
    n = int(rng.integers(n_min, n_max + 1))
    edges = {(int(rng.integers(0, i)), i) for i in range(1, n)}
    for _ in range(int(rng.integers(0, n + 1))):
        a, b = sorted(int(v) for v in rng.choice(n, 2, replace=False))
        edges.add((a, b))
    edges = sorted(edges)
    c = np.exp(rng.uniform(np.log(0.1), np.log(10.0), len(edges)))
    return network_from_edges(edges, c)


def fixture_networks():
    """Named (network, sink) pairs used by the electrical checks."""
    out = []
    for name, fam, n, w in [("line_10", line(), 10, None), ("grid_6", grid2d(), 6, None),
                            ("tree_5", tree(2), 5, None), ("geometric_30", line(), 30, geometric_weights(2.0)),
                            ("box3", box_grid(3), 2, None), ("triangle_tail_3", triangle_with_tail(), 3, None)]:
        net = collapse_boundary(ball(fam, n), w)
        out.append((name, net, net.sink))
    return out


# ---------------------------------------------------------------------------

def criterion_1(scale="full"):
    rows = []
    path = network_from_edges([(0, 1), (1, 2)], [1.0, 0.5])
    rows.append(_row(1, "series R=(1,2) gives 3", abs(effective_resistance(path, None, 0, 2) - 3.0), 1e-12))
    par = network_from_edges([(0, 1), (1, 3), (0, 2), (2, 3)])
    rows.append(_row(1, "two parallel unit 2-paths give 1", abs(effective_resistance(par, None, 0, 3) - 1.0), 1e-12))
    worst = 0.0
    for _, net, sink in fixture_networks():
        worst = max(worst, solve_voltage(net, None, 0, sink).residual)
    rng = np.random.default_rng(101)
    for _ in range(20 if scale == "full" else 5):
        net = random_network(rng)
        worst = max(worst, solve_voltage(net, None, 0, net.n_vertices - 1).residual)
    rows.append(_row(1, "harmonicity residual on fixtures", worst, 1e-10))
    # the linear voltage on a unit path
    net = collapse_boundary(ball(line(), 10))
    v = solve_voltage(net, None, 0, net.sink).values
    b = ball(line(), 10)
    interior = [i for i in range(b.n_vertices) if b.dist[i] < 10]
    expect = np.array([1 - abs(b.labels[i]) / 10 for i in interior])
    rows.append(_row(1, "unit path voltage is linear", np.abs(v[: len(interior)] - expect).max(), 1e-10))
    return rows


def criterion_2(scale="full"):
    worst = 0.0
    for n in range(2, 21):
        net = collapse_boundary(ball(line(), n))
        worst = max(worst, abs(return_probability(net) - (1 - 1 / n)))
    rows = [_row(2, "Z return probability 1 - 1/n, n=2..20", worst, 1e-10)]
    trials = 10_000 if scale == "full" else 2_000
    net = collapse_boundary(ball(line(), 10))
    p, _ = estimate_return_probability(net, None, 0, net.sink, trials, seed=2)
    sigma = np.sqrt(0.9 * 0.1 / trials)
    rows.append(_row(2, f"MC return frequency at n=10 ({trials} trials), sigmas from 0.9", abs(p - 0.9) / sigma, 4.0))
    return rows


def criterion_3(scale="full"):
    prof = resistance_profile(line(), geometric_weights(2.0), list(range(1, 31)))
    p30 = prof.return_probabilities[-1]
    rows = [_row(3, "lambda=2 return probability at radius 30 vs 2/3", abs(p30 - 2 / 3), 0.01)]
    trials, horizon = (10_000, 10_000) if scale == "full" else (2_000, 2_000)
    res = simulate(line(), StaticEnvironment(geometric_weights(2.0)), horizon, trials, seed=3,
                   record_paths=False, max_radius=500, on_truncation="stop")
    no_return = 1.0 - res.return_frequency
    rows.append(_row(3, f"MC no-return frequency vs 1/3 ({trials} trials, horizon {horizon})",
                     abs(no_return - 1 / 3), 0.05))
    return rows


def criterion_4(scale="full"):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100 if scale == "full" else 20):
        net = random_network(rng)
        n = net.n_vertices
        others = rng.permutation(np.arange(1, n))
        k = int(rng.integers(1, min(3, n - 2) + 1))
        sink, x = tuple(int(s) for s in others[:k]), int(others[k])
        c0 = np.exp(rng.uniform(np.log(0.1), np.log(10.0), len(net.edges)))
        c1 = np.exp(rng.uniform(np.log(0.1), np.log(10.0), len(net.edges)))
        worst = max(worst, voltage_difference_identity(net, c0, c1, x, 0, sink).discrepancy)
    return [_row(4, "voltage difference identity on random networks", worst, 1e-8)]


def criterion_5(scale="full"):
    rng = np.random.default_rng(5)
    nets = [random_network(rng) for _ in range(8)] + [net for _, net, _ in fixture_networks()[:2]]
    sinks = [net.n_vertices - 1 for net in nets]
    per = 100 if scale == "full" else 20
    thomson = -np.inf
    ohm = 0.0
    kirch = 0.0
    for net, s in zip(nets, sinks):
        i = unit_current(net, None, 0, s)
        r = effective_resistance(net, None, 0, s)
        res = net.resistance
        for _ in range(per):
            f = random_unit_flow(net, i, rng, scale=float(rng.uniform(0.01, 1.0)))
            thomson = max(thomson, r - flow_energy(f, res))
        ohm = max(ohm, ohm_defect(net, None, 0, s))
        kirch = max(kirch, kirchhoff_defect(i, res))
    rows = [_row(5, f"perturbed flows beating the unit current ({per * len(nets)} flows)", thomson, 1e-12)]
    worst = -np.inf
    for j in range(200 if scale == "full" else 50):
        net, s = nets[j % len(nets)], sinks[j % len(nets)]
        c = net.conductance.copy()
        r0 = effective_resistance(net, c, 0, s)
        e = int(rng.integers(len(net.edges)))
        c[e] = 1.0 / (1.0 / c[e] + float(rng.uniform(0.01, 5.0)))
        r1 = effective_resistance(net, c, 0, s)
        worst = max(worst, (r0 - r1) / r0)
    rows.append(_row(5, "relative decrease of R_eff after a resistance increase", worst, 1e-12))
    rows.append(_row(5, "Ohm law defect per edge", ohm, 1e-10))
    rows.append(_row(5, "Kirchhoff cycle law defect", kirch, 1e-10))
    return rows


def criterion_6(scale="full"):
    rng = np.random.default_rng(6)
    worst = -np.inf
    balls = [ball(box_grid(3), 2), ball(grid2d(), 3), ball(line(), 8)]
    for j in range(100 if scale == "full" else 20):
        b = balls[j % len(balls)]
        c1 = np.exp(rng.uniform(np.log(0.1), np.log(10.0), b.n_edges))
        c2 = np.exp(rng.uniform(np.log(0.1), np.log(10.0), b.n_edges))
        if j % 2:  # small perturbations too
            c2 = c1 * np.exp(rng.normal(0, 0.05, b.n_edges))
        chk = perturbation_bound(c1, c2, b)
        worst = max(worst, max(d - chk.bound for d in chk.differences) / max(1.0, chk.bound))
    return [_row(6, "max |R_1,n - R_2,n| - sum |R_1 - R_2| (relative)", worst, 1e-12)]


def _ratio_fixtures(T):
    fl = line()
    bl = ball(fl, 8)
    sl = split_at_origin(fl, 3)
    envs = [ScheduledEnvironment(None, 1.0, 0.5, 1.0), ScheduledEnvironment(None, 0.5, 0.8, 2.0),
            ScheduledEnvironment(geometric_weights(1.5), 2.0, 0.7, 0.5), BumpEnvironment(None, (0, 1), 0.5, 2, 3)]
    out = [(f"Z {env.kind} #{i}", run_environment(env, bl, [0] * T), sl, range(sl.d_max, 9))
           for i, env in enumerate(envs)]
    fg = box_grid(5)
    bg = ball(fg, 4)
    sg = split_at_origin(fg, 4)
    for i, env in enumerate([ScheduledEnvironment(None, 1.0, 0.5, 1.0), ScheduledEnvironment(None, 0.3, 0.9, 0.0)]):
        out.append((f"5x5 grid scheduled #{i}", run_environment(env, bg, [0] * T), sg, range(sg.d_max, 5)))
    return out


def criterion_7(scale="full"):
    T = 25 if scale == "full" else 10
    worst = -np.inf
    cells = 0
    for _, trace, split, radii in _ratio_fixtures(T):
        for k in split.infinite_components:
            cert = ratio_certificate(trace, split, k, list(radii))
            chk = ratio_bound_check(cert, trace, split)
            worst = max(worst, float((chk.lhs - chk.rhs * (1 + 1e-9)).max()))
            cells += chk.lhs.size
    return [_row(7, f"ratio deviation minus bound over {cells} (n, t) cells", worst, 1e-13)]


def criterion_8(scale="full"):
    depth = 3 if scale == "full" else 2
    fl = line()
    sl = split_at_origin(fl, 3)
    cases = [("static", StaticEnvironment(), fl, sl, 5),
             ("scheduled", ScheduledEnvironment(None, 1.0, 0.5, 1.0), fl, sl, 5),
             ("ORRW", OnceReinforced(2.0), fl, sl, 5)]
    ft = triangle_with_tail()
    cases.append(("ORRW triangle-with-tail", OnceReinforced(2.0), ft, split_at_origin(ft, 3), 3))
    rows = []
    for name, env, fam, split, n in cases:
        worst, states, gap = 0.0, 0, 0.0
        for k in range(len(split.components)):
            chk = one_step_martingale_check(fam, env, split, k, n, depth=depth)
            worst = max(worst, chk.super_excess, chk.sub_deficit)
            states += chk.states
            gap = max(gap, chk.max_equality_gap)
        rows.append(_row(8, f"{name}: martingale slack over {states} states", worst, 1e-10))
        if name == "static":
            rows.append(_row(8, "static: A and B are martingales", gap, 1e-12))
    return rows


def frozen_fixture():
    env = OnceReinforced(delta=0.02, initial=0.01)
    rule = FreezeRule(ball(triangle(), 2), None, 0, (), 2, 100.0)
    return triangle(), env, rule


def criterion_9(scale="full"):
    rows = []
    fixtures = [("static Z, T=4", line(), StaticEnvironment(), 4),
                ("list schedule on triangle, T=4", triangle(), ListSchedule([1.0, 2.0, 0.5, 3.0, 1.5]), 4),
                ("two-branch random schedule on Z^2, T=3", grid2d(),
                 RandomSchedule([(0.3, StaticEnvironment()), (0.7, ScheduledEnvironment(None, 1.0, 0.5, 1.0))]), 3)]
    for name, fam, env, T in fixtures:
        rows.append(_row(9, f"TV interleaved vs hierarchical: {name}", nonadaptive_equivalence(fam, env, T), 1e-10))
    fam, env, rule = frozen_fixture()
    chk = frozen_process_check(fam, env, rule, 4)
    rows.append(_row(9, "frozen ORRW triangle: one-step law defect", chk.max_defect, 1e-12))
    rows.append(_row(9, "frozen ORRW triangle: TV against the frozen environment", chk.tv_frozen_env, 1e-10))
    return rows


CLASSIFICATION_CASES = {
    "Z scheduled": dict(family=line, env=lambda: ScheduledEnvironment(None, 0.5, 0.5, 4.0),
                        radii=list(range(10, 61, 5)), max_radius=None, expect="recurrent-by-theorem"),
    "geometric lambda=2 scheduled": dict(family=line,
                                         env=lambda: ScheduledEnvironment(geometric_weights(2.0), 0.5, 0.5, 4.0),
                                         radii=list(range(10, 61, 5)), max_radius=500,
                                         expect="transient-by-theorem"),
    "ORRW on Z": dict(family=line, env=lambda: OnceReinforced(2.0), radii=list(range(10, 61, 5)),
                      max_radius=None, expect="hypothesis-fails"),
}


def criterion_10(scale="full"):
    rows = []
    sizes = {"full": [(100_000, 1000), (10_000, 1000), (10_000, 200)],
             "quick": [(100_000, 100), (2_000, 200), (2_000, 50)]}[scale]
    for (name, case), (horizon, trials) in zip(CLASSIFICATION_CASES.items(), sizes):
        rep = classify(case["family"](), case["env"](), horizon, trials, case["radii"], seed=10,
                       max_radius=case["max_radius"])
        rows.append(_row(10, f"{name}: verdict {rep.verdict} (expected {case['expect']})",
                         float(rep.verdict == case["expect"]), 1.0, "=="))
        if case["expect"] == "recurrent-by-theorem":
            rows.append(_row(10, f"{name}: return frequency at horizon {horizon}, {trials} trials",
                             rep.return_frequency, 0.99, ">="))
    return rows


def criterion_11(scale="full"):
    # byte-level comparison of two independent runs of the same seeded pipelines
    from .cli import run_pipeline
    from .config import ExperimentConfig
    from .report import to_json
    cfg = ExperimentConfig(graph={"family": "line", "params": {}},
                           environment={"kind": "once_reinforced", "delta": 2.0},
                           radii=[2, 3, 4], horizon=500, trials=200, seed=11)
    sim = [to_json(run_pipeline(cfg, "simulate")[0]) for _ in range(2)]
    ver = [to_json(run_pipeline(cfg, "verify", include_suite=False)[0]) for _ in range(2)]
    return [_row(11, "simulate twice: reports differ", float(sim[0] != sim[1]), 0.0, "=="),
            _row(11, "verify twice: reports differ", float(ver[0] != ver[1]), 0.0, "==")]


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 12)}


def invariant_rows(scale="full"):
    """Walker-level properties not tied to a numbered criterion."""
    rows = []
    # per-step frequencies from the simulator against the kernel
    fam = grid2d()
    env = StaticEnvironment(lambda u, v: 1.0 + (abs(u[0]) + abs(v[1])) % 3)
    n = 10_000 if scale == "full" else 2_000
    res = simulate(fam, env, 1, n, seed=12)
    first = np.array([t.positions[1] for t in res.trajectories])
    b = res.ball
    labels, probs = transition_distribution(b, fam.origin, env.initial(b))
    z = 0.0
    for y, p in zip(labels, probs):
        f = np.mean(first == b.index[y])
        z = max(z, abs(f - p) / np.sqrt(p * (1 - p) / n))
    rows.append(CheckRow(None, "one-step frequencies vs kernel (sigmas)", "transition kernel P(x,y;C)", z, 4.0))
    # reaching a neighbour: P(y by T+1) >= P_xy P(X_T = x)
    worst = -np.inf
    for fam, delta in [(line(), 3.0), (triangle(), 1.5)]:
        env = OnceReinforced(delta)
        lo, hi = min(1.0, delta), max(1.0, delta)
        for T in range(1, 5):
            law = exact_law(fam, env, T + 1)
            b = law.ball
            for x in b.labels[: b.count_within(1)]:
                ys, _ = transition_distribution(b, x, env.initial(b))
                # ORRW weights stay in {1, delta}: worst case for one edge
                pmin = lo / (lo + (len(ys) - 1) * hi)
                for y in ys:
                    lhs, rhs = reach_bound_check(law, (x, y, pmin), T)
                    worst = max(worst, rhs - lhs)
    rows.append(CheckRow(None, "reach bound P(y by T+1) >= P_xy P(X_T=x)", "ellipticity", worst, 1e-12))
    return rows


def acceptance_rows(scale="full", criteria=None):
    rows = []
    for i in criteria or range(1, 12):
        rows.extend(CRITERIA[i](scale))
    return rows


def config_rows(cfg, trace=None, split=None):
    """Invariant checks instantiated on one experiment config."""
    from .errors import RWCEError
    rows = []
    fam, env = cfg.family(), cfg.env()
    R = max(cfg.radii)
    b = ball(fam, R)
    c0 = env.initial(b)
    worst = 0.0
    for n in cfg.radii:
        net = collapse_boundary(b.restrict(n), c0)
        worst = max(worst, solve_voltage(net, None, 0, net.sink).residual)
    tol = cfg.tolerances.get("solver", 1e-10)
    rows.append(CheckRow(None, "harmonicity residual at config radii", ANCHORS[1], worst, tol))
    net = collapse_boundary(b, c0)
    if net.n_vertices <= 5000:
        rows.append(CheckRow(None, "Ohm law defect at largest radius", ANCHORS[5], ohm_defect(net, None, 0, net.sink), tol))
    prof = resistance_profile(fam, c0, cfg.radii)
    dec = max([0.0] + [a - b_ for a, b_ in zip(prof.values, prof.values[1:])])
    rows.append(CheckRow(None, "R_n non-decreasing in n", "Rayleigh monotonicity", dec, 1e-12))
    if trace is not None:
        chk = perturbation_bound(trace.configs[0], trace.configs[-1], trace.ball)
        rows.append(CheckRow(None, "perturbation bound C_0 vs C_T", ANCHORS[6],
                             max(d - chk.bound for d in chk.differences), 1e-12 * max(1.0, chk.bound)))
        lb = lower_bound_check(trace)
        rows.append(CheckRow(None, "C_t >= 1/(Gamma + 1/C_0)", "conductance lower bound", -lb.worst_slack,
                             1e-12 * float(trace.configs.max())))
        if split is not None:
            radii = [n for n in cfg.radii if split.d_max <= n <= trace.ball.radius]
            for k in split.infinite_components:
                if not radii:
                    break
                try:
                    cert = ratio_certificate(trace, split, k, radii)
                except RWCEError:
                    continue
                chk = ratio_bound_check(cert, trace, split)
                rows.append(CheckRow(None, f"ratio bound, component {k}", ANCHORS[7],
                                     float((chk.lhs - chk.rhs * (1 + 1e-9)).max(initial=-np.inf)), 1e-13))
    if split is not None:
        n = max(split.d_max, 2)
        for k in range(len(split.components)):
            try:
                chk = one_step_martingale_check(fam, env, split, k, n, depth=2, atom_cap=50_000)
            except RWCEError:
                continue
            if chk.states:
                rows.append(CheckRow(None, f"martingale slack, component {k}, n={n}", ANCHORS[8],
                                     max(chk.super_excess, chk.sub_deficit), 1e-10))
    if not env.adaptive:
        try:
            tv = nonadaptive_equivalence(fam, env, 3)
            rows.append(CheckRow(None, "TV interleaved vs hierarchical, T=3", ANCHORS[9], tv, 1e-10))
        except RWCEError:
            pass
    return rows
