"""
Monte Carlo data sets
=====================

The Monte Carlo engine samples pulse classes by importance and produces
integer count data sets, so the fits can be exercised on realistic noise.
The same seed always gives the same output.
"""

import numpy as np

from bellsim.analysis import fit_points
from bellsim.experiments import monte_carlo_run, reference_config, run_fringe

cfg = reference_config("fringe", trials=200_000, seed=7)
mc = monte_carlo_run(cfg)
exact = run_fringe(cfg)

z = np.array([(m.probability - e.probability) / m.probability_sigma
              for m, e in zip(mc, exact) if m.probability_sigma > 0])
print(f"chi2 of Monte Carlo against the exact sum: {np.sum(z ** 2):.1f} for {len(z)} points")

fit = fit_points(mc, "sine_squared")
print(f"fringe fitted to one simulated data set: V = {fit.visibility:.3f} +/- {fit.visibility_error:.3f}")

vs = [fit_points(monte_carlo_run(cfg.with_(seed=s, trials=1000)), "sine_squared").visibility
      for s in range(20)]
print(f"spread over 20 data sets: mean {np.mean(vs):.3f}, std {np.std(vs):.3f}")
print("same seed twice identical:", monte_carlo_run(cfg) == mc)
