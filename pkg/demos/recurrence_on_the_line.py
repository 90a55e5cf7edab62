"""Simple random walk on Z: the resistance to the boundary grows like n/2,
so the walk returns with probability one.  A scheduled environment whose
resistances change by a finite total amount inherits the same verdict."""
import numpy as np

from rwce import ScheduledEnvironment, StaticEnvironment, classify, line, resistance_profile

radii = list(range(5, 61, 5))
prof = resistance_profile(line(), None, radii)
for n, r, p in zip(prof.radii, prof.values, prof.return_probabilities):
    print(f"n={n:3d}  R={r:7.3f}  P(return before exit)={p:.4f}")
print("profile verdict:", prof.verdict)

for env in (StaticEnvironment(), ScheduledEnvironment(None, 0.5, 0.5, 4.0)):
    rep = classify(line(), env, 10_000, 1000, radii, seed=1)
    print(f"{env.kind:>10s}: verdict={rep.verdict}  slowness={rep.slowness_verdict}  "
          f"returned={rep.return_frequency:.3f}  Gamma={rep.gamma_total:.3g}")
