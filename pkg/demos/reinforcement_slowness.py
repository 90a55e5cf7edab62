"""Reinforced walks break the finite-change hypothesis in different ways.
Once-reinforcement moves each resistance once, so Gamma grows with the
range of the walk; linear reinforcement keeps moving the same edges."""
import numpy as np

from rwce import LinearlyReinforced, OnceReinforced, ScheduledEnvironment, ball, line, run_environment, slowness_report

rng = np.random.default_rng(0)
steps = rng.choice([-1, 1], size=400)
path = np.r_[0, np.cumsum(steps)]
b = ball(line(), int(np.abs(path).max()) + 1)
edges = [b.edge_index(int(u), int(v)) for u, v in zip(path, path[1:])]

for env in (ScheduledEnvironment(None, 1.0, 0.5, 2.0), OnceReinforced(2.0), LinearlyReinforced(1.0)):
    tr = run_environment(env, b, edges)
    rep = slowness_report(tr, 3)
    g = np.cumsum(tr.dgamma)
    print(f"{env.kind:>18s}: Gamma(100)={g[99]:8.3f}  Gamma(400)={g[-1]:8.3f}  verdict={rep.verdict}")
