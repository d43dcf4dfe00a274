"""Threshold detectors, click patterns, gated coincidences and count tallies.

A detector clicks when at least one photon survives its efficiency loss. For a
Fock component with ``n`` photons at the detector port the no-click
probability is ``(1 - eta)**n``, which is exactly what an explicit loss channel
followed by an ideal detector would give. Dark counts and dead time are not
modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping

import numpy as np

from .fock import StateVector
from .sources import PulseClass

DETECTOR_IDS = ("D1", "D2", "Dt")

ClickPattern = frozenset


@dataclass(frozen=True)
class DetectorSpec:
    id: str
    efficiency: float = 1.0

    def __post_init__(self):
        if self.id not in DETECTOR_IDS:
            raise ValueError(f"unknown detector id {self.id!r}")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")


def _port_totals(state: StateVector, ports: Iterable[str]) -> list[tuple[tuple[int, ...], float]]:
    reg = state.registry
    groups = [reg.indices_of_port(p) for p in ports]
    out = []
    for occ, amp in state.amplitudes.items():
        p = abs(amp) ** 2
        if p:
            out.append((tuple(sum(occ[i] for i in g) for g in groups), p))
    return out


def number_distribution(state: StateVector, ports: Iterable[str]) -> dict[tuple[int, ...], float]:
    """Joint photon-number distribution over ``ports`` (number-resolving detection)."""
    dist: dict[tuple[int, ...], float] = {}
    for counts, p in _port_totals(state, tuple(ports)):
        dist[counts] = dist.get(counts, 0.0) + p
    return dist


def click_distribution(state: StateVector,
                       mapping: Mapping[str, DetectorSpec]) -> dict[frozenset, float]:
    """Probability of every click pattern for threshold detectors behind ``mapping``'s ports.

    Photons in unmapped ports (loss modes, blocked analyzer outputs) are
    traced out.
    """
    ports = tuple(mapping)
    specs = [mapping[p] for p in ports]
    dist: dict[frozenset, float] = {}
    for counts, weight in number_distribution(state, ports).items():
        p_click = [1.0 - (1.0 - s.efficiency) ** n for s, n in zip(specs, counts)]
        for clicks in product((False, True), repeat=len(ports)):
            p = weight
            for c, pc in zip(clicks, p_click):
                p *= pc if c else 1.0 - pc
            if p:
                key = frozenset(s.id for s, c in zip(specs, clicks) if c)
                dist[key] = dist.get(key, 0.0) + p
    return dist


def coincidence_probability(pattern_probs: Mapping[frozenset, float],
                            required: Iterable[str] = ("D1", "D2")) -> float:
    need = frozenset(required)
    return math.fsum(p for pattern, p in pattern_probs.items() if need <= pattern)


def gated_coincidence_probability(cls: PulseClass, pattern_probs: Mapping[frozenset, float],
                                  required: Iterable[str] = ("D1", "D2")) -> float:
    """Per-pulse probability that this class yields a trigger-gated D1-D2 coincidence."""
    if not cls.trigger_fires:
        return 0.0
    return cls.weight * coincidence_probability(pattern_probs, required)


@dataclass
class CountTally:
    setting: float | tuple
    counts: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.counts < 0:
            raise ValueError("counts must be non-negative")
        if not self.sigma:
            self.sigma = math.sqrt(self.counts)

    def __add__(self, other: CountTally) -> CountTally:
        if other.setting != self.setting:
            raise ValueError("cannot merge tallies for different settings")
        return CountTally(self.setting, self.counts + other.counts)


def tally_accumulate(tallies: dict, setting, expected_probability: float, pulses: int,
                     rng: np.random.Generator | None = None) -> CountTally:
    """Add ``pulses`` worth of counts at ``setting``.

    Without ``rng`` the expected count ``p * pulses`` is stored; with one, an
    integer Poisson draw is stored. Repeated calls on the same setting merge
    by addition.
    """
    if pulses <= 0:
        raise ValueError("pulses must be positive")
    mean = expected_probability * pulses
    counts = float(rng.poisson(mean)) if rng is not None else mean
    new = CountTally(setting, counts)
    if setting in tallies:
        new = tallies[setting] + new
    tallies[setting] = new
    return new
