"""
Photons in a handful of modes
=============================

A state is a sparse map from occupation tuples to amplitudes over labelled
modes (port, polarization, time bin). Optical elements act through two-mode
unitaries on creation operators.
"""

import math

from bellsim.fock import ModeLabel, ModeRegistry, StateVector, project_pattern
from bellsim.optics import beamsplitter_50_50

reg = ModeRegistry.from_ports(["inB", "inC", "out1", "out2"])

# One horizontally polarized photon in each input of the coupler
hv = StateVector.basis(reg, {ModeLabel("inB", "H"): 1, ModeLabel("inC", "V"): 1})
out = beamsplitter_50_50(hv, "inB", "inC", "out1", "out2")

print("output amplitudes for H in inB, V in inC:")
for occ, amp in sorted(out.amplitudes.items()):
    modes = [f"{m.pol}{m.port[-1]}" for m, n in zip(reg.modes, occ) for _ in range(n)]
    print(f"  |{' '.join(modes)}>  {amp:.4f}")

# Post-selecting one photon per output leaves the polarization singlet
outputs = [m for m in reg.modes if m.port in ("out1", "out2")]
k = len(reg.indices_of_port("out1"))
p, post = project_pattern(out, outputs, lambda occ: sum(occ[:k]) == 1 and sum(occ[k:]) == 1)
print(f"\nprobability of one photon per output: {p:.3f}")
print(f"norm of the collapsed state: {post.norm():.3f}")

# Identical photons bunch
hh = StateVector.basis(reg, {ModeLabel("inB", "H"): 1, ModeLabel("inC", "H"): 1})
p, _ = project_pattern(beamsplitter_50_50(hh, "inB", "inC", "out1", "out2"), outputs,
                       lambda occ: sum(occ[:k]) == 1 and sum(occ[k:]) == 1)
print(f"identical photons leaving separately: {p:.2e}")
print(f"amplitude for both in out1: {abs(beamsplitter_50_50(hh, 'inB', 'inC', 'out1', 'out2').amplitude({ModeLabel('out1', 'H'): 2})):.4f}"
      f" (1/sqrt2 = {1 / math.sqrt(2):.4f})")
