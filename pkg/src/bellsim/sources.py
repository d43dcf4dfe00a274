"""Per-pulse photon sources: a heralded down-conversion pair and a weak coherent state.

Each pump pulse falls into one :class:`PulseClass`. The classes are exhaustive
and mutually exclusive, so the exact per-pulse probability of any detection
event is a weighted sum over them.

Double-pair emission is left out. Its probability is ``O(p_pair**2)``, which
is about 1e-8 at the default operating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .fock import ModeLabel, ModeRegistry, StateVector, create_photon, create_superposed_photon
from .optics import OverlapModel, temporal_decomposition

MAX_COHERENT_PHOTONS = 2

INPUT_PORTS = ("inB", "inC", "out1", "out2")


@dataclass(frozen=True)
class SpdcParams:
    p_pair: float
    eta_trigger: float
    eta_signal: float

    def __post_init__(self):
        for name in ("p_pair", "eta_trigger", "eta_signal"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def gamma(self) -> float:
        """Probability per pulse of a detectable pair (trigger fires and twin kept)."""
        return self.p_pair * self.eta_trigger * self.eta_signal

    @property
    def heralding_loss_ratio(self) -> float:
        """H: P(trigger fires and twin lost) / Gamma."""
        if self.gamma == 0.0:
            raise ZeroDivisionError("heralding ratio undefined when Gamma = 0")
        return (1.0 - self.eta_signal) / self.eta_signal


@dataclass(frozen=True)
class CoherentParams:
    mean_photons: float
    polarization_angle: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.mean_photons < 0:
            raise ValueError("mean_photons must be non-negative")

    @property
    def truncation_bound(self) -> float:
        """e^-a a^3 / 6, the leading term of the discarded Poisson mass."""
        a = self.mean_photons
        return math.exp(-a) * a ** 3 / 6.0


@dataclass(frozen=True)
class PulseClass:
    pair_emitted: bool
    twin_detectable: bool
    trigger_fires: bool
    n_coherent: int
    weight: float
    remainder: bool = False

    @property
    def label(self) -> str:
        if self.remainder:
            return "remainder(n>2)"
        pair = "no-pair"
        if self.pair_emitted:
            pair = ("twin" if self.twin_detectable else "lost") + ("+trig" if self.trigger_fires else "")
        return f"{pair}|n={self.n_coherent}"


def poisson_pmf(n: int, mean: float) -> float:
    return math.exp(-mean) * mean ** n / math.factorial(n)


def enumerate_pulse_classes(spdc: SpdcParams, coh: CoherentParams) -> list[PulseClass]:
    """All pulse classes with exact weights.

    Coherent photon numbers above two go into a single remainder class that
    carries the leftover Poisson mass and is never evaluated.
    """
    pn = [poisson_pmf(n, coh.mean_photons) for n in range(MAX_COHERENT_PHOTONS + 1)]
    residual = max(0.0, 1.0 - math.fsum(pn))

    classes = []
    for n, w_n in enumerate(pn):
        classes.append(PulseClass(False, False, False, n, (1.0 - spdc.p_pair) * w_n))
        for kept, fired in product((True, False), repeat=2):
            w = spdc.p_pair * w_n
            w *= spdc.eta_signal if kept else 1.0 - spdc.eta_signal
            w *= spdc.eta_trigger if fired else 1.0 - spdc.eta_trigger
            classes.append(PulseClass(True, kept, fired, n, w))
    classes.append(PulseClass(False, False, False, MAX_COHERENT_PHOTONS + 1, residual, remainder=True))
    return classes


def input_registry() -> ModeRegistry:
    return ModeRegistry.from_ports(INPUT_PORTS)


def coherent_photon_modes(overlap: OverlapModel, coh: CoherentParams,
                          port: str = "inC") -> dict[ModeLabel, complex]:
    """Single-photon mode of a coherent-state photon: polarization x wavepacket."""
    c0, c1 = temporal_decomposition(overlap)
    cp, sp = math.cos(coh.polarization_angle), math.sin(coh.polarization_angle)
    weights = {}
    for pol, pw in (("H", cp), ("V", sp)):
        for t, tw in ((0, c0), (1, c1)):
            if pw * tw != 0.0:
                weights[ModeLabel(port, pol, t)] = pw * tw
    return weights


def build_input_state(cls: PulseClass, overlap: OverlapModel, coh: CoherentParams,
                      registry: ModeRegistry | None = None) -> StateVector:
    """Coupler input state for one pulse class.

    The heralded twin (if it survives) is one H photon in ``inB``, temporal
    mode e0. The ``n_coherent`` photons share one mode in ``inC`` and pick up
    the overall phase ``exp(i n phi)``.
    """
    if cls.weight <= 0:
        raise ValueError("pulse class has zero weight")
    if cls.remainder:
        raise ValueError("the remainder class has no state representation")
    registry = registry or input_registry()
    state = StateVector.vacuum(registry)
    if cls.pair_emitted and cls.twin_detectable:
        state = create_photon(state, ModeLabel("inB", "H", 0))
    modes = coherent_photon_modes(overlap, coh)
    for _ in range(cls.n_coherent):
        state = create_superposed_photon(state, modes)
    state = state.normalize()
    if cls.n_coherent:
        state = state.scaled(complex(math.cos(cls.n_coherent * coh.phase),
                                     math.sin(cls.n_coherent * coh.phase)))
    return state


def derived_rates(spdc: SpdcParams, coh: CoherentParams, rep_rate: float) -> dict[str, float]:
    """Per-pulse quantities and count rates implied by the source parameters.

    Coincidence and singles rates refer to the whole detection stage unless
    the key says ``per_detector``.
    """
    if rep_rate <= 0:
        raise ValueError("rep_rate must be positive")
    gamma = spdc.gamma
    trig = spdc.p_pair * spdc.eta_trigger
    h = spdc.heralding_loss_ratio if gamma > 0 else math.nan
    return {
        "Gamma": gamma,
        "alpha": coh.mean_photons,
        "H": h,
        "trigger_singles_rate": trig * rep_rate,
        "pair_coincidence_rate": gamma * rep_rate,
        "pair_coincidence_rate_per_detector": 0.5 * gamma * rep_rate,
        "coherent_singles_per_detector": (1.0 - math.exp(-coh.mean_photons / 2.0)) * rep_rate,
        "singles_ceiling_per_detector": rep_rate / (2.0 * h) if gamma > 0 and h > 0 else math.inf,
    }


def heralding_ratio_from_rates(trigger_rate: float, pair_rate: float) -> float:
    """H = (trigger singles - heralded pairs) / heralded pairs."""
    if pair_rate <= 0:
        raise ZeroDivisionError("pair rate must be positive")
    return (trigger_rate - pair_rate) / pair_rate


def spdc_from_rates(trigger_rate: float, pair_rate: float, rep_rate: float,
                    eta_trigger: float = 0.2) -> SpdcParams:
    """Source parameters reproducing measured trigger singles and heralded-pair rates.

    ``pair_rate`` is the total over both output detectors. Only the product
    ``p_pair * eta_trigger`` is fixed by the rates, so ``eta_trigger`` is a free
    choice that does not change any gated probability.
    """
    if not 0 < pair_rate <= trigger_rate:
        raise ValueError("need 0 < pair_rate <= trigger_rate")
    eta_signal = pair_rate / trigger_rate
    p_pair = trigger_rate / (rep_rate * eta_trigger)
    return SpdcParams(p_pair=p_pair, eta_trigger=eta_trigger, eta_signal=eta_signal)


def alpha_from_singles(singles_per_detector: float, rep_rate: float) -> float:
    """Mean coherent photon number at the coupler input; each output sees half of it."""
    return 2.0 * singles_per_detector / rep_rate


def sample_pulses(spdc: SpdcParams, coh: CoherentParams, size: int,
                  rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Draw raw per-pulse source outcomes. The two sources are sampled independently."""
    pair = rng.random(size) < spdc.p_pair
    kept = pair & (rng.random(size) < spdc.eta_signal)
    fired = pair & (rng.random(size) < spdc.eta_trigger)
    n_coh = rng.poisson(coh.mean_photons, size)
    return {"pair_emitted": pair, "twin_detectable": kept, "trigger_fires": fired,
            "n_coherent": n_coh}
