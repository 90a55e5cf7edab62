"""Geometric conductances lambda^k on Z with lambda = 2.  The resistance
profile converges, and the return probability 1 - 1/(C(0) R) tends to 2/3.
Monte Carlo return frequencies sit just below that limit at finite horizon."""
import numpy as np

from rwce import StaticEnvironment, classify, geometric_weights, line, resistance_profile

w = geometric_weights(2.0)
prof = resistance_profile(line(), w, list(range(1, 41)))
print("R_eff tail:", np.round(prof.values[-5:], 12))
print("limit return probability:", prof.limiting_return_probability, "(exact 2/3)")

rep = classify(line(), StaticEnvironment(w), 10_000, 2000, list(range(10, 61, 10)), seed=3, max_radius=500)
half = 4 * np.sqrt(2 / 9 / rep.trials)
print(f"simulated return frequency {rep.return_frequency:.4f} +/- {half:.4f}; verdict {rep.verdict}")
