"""
Two-photon dip from a single down-conversion source
===================================================

Both photons of a pair meet at the coupler with a variable delay. Their
overlap falls off as a Gaussian in the delay, and the coincidence rate dips
to (1 - mu_max^2) of the shoulder at zero delay.
"""

import numpy as np

from bellsim.analysis import fit_points
from bellsim.experiments import calibrate_mu_max, reference_config, run_hom_two_photon

# Find the zero-delay overlap that gives a 99.4% dip, then run the scan
mu = calibrate_mu_max(reference_config("hom2"), 0.994)
cfg = reference_config("hom2", mu_max=mu)
points = run_hom_two_photon(cfg)
fit = fit_points(points, "gaussian_dip")

print(f"mu_max = {mu:.6f} (sqrt 0.994 = {np.sqrt(0.994):.6f})")
print(f"fitted visibility {fit.visibility:.4f} +/- {fit.visibility_error:.4f}")
print(f"fitted width {fit.params['width'] * 1e12:.3f} ps\n")

print(" delay/ps    counts")
for p in points[::4]:
    bar = "#" * int(40 * p.counts / points[0].counts)
    print(f"{p.setting * 1e12:8.3f} {p.counts:9.0f}  {bar}")
