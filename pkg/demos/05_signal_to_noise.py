"""
Signal-to-noise budget
======================

The signal (twin detected, one coherent photon) scales as Gamma alpha. The
main background (twin lost, two coherent photons) scales as H Gamma alpha^2,
so clean interference needs alpha well below 1/H.
"""

import warnings

import numpy as np

from bellsim.analysis import snr_model
from bellsim.experiments import reference_spdc
from bellsim.sources import CoherentParams, derived_rates

rates = derived_rates(reference_spdc(), CoherentParams(4e-3), 76e6)
print(f"Gamma = {rates['Gamma']:.3e} per pulse, H = {rates['H']:.2f}")
print(f"per-detector singles ceiling rep/(2H) = {rates['singles_ceiling_per_detector']:.3e} /s")
print(f"coherent singles per detector at alpha = 4e-3: {rates['coherent_singles_per_detector']:.3e} /s\n")

print("   alpha     alpha*H   v_max")
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    for alpha in np.geomspace(1e-4, 3e-2, 8):
        b = snr_model(rates["Gamma"], alpha, rates["H"])
        print(f"{alpha:9.2e} {b.alpha_H:9.4f} {b.v_max_predicted:7.4f}")
    b = snr_model(rates["Gamma"], 4e-3, rates["H"])
print(f"\noperating point: v_max = {b.v_max_predicted:.4f}\n{b.formula}")
