"""Optical elements acting on :class:`~bellsim.fock.StateVector`.

Conventions:

* 50/50 coupler: transmit ``1/sqrt2``, reflect ``i/sqrt2``. Input ``inB``
  transmits to ``out1`` and input ``inC`` transmits to ``out2``.
* ``rotate_polarization`` takes the rotation angle of the linear polarization
  itself, not the angle of a half-wave plate (which would be half of it).
  Positive angles take H towards V.
* Analyzers pass ``cos(theta) H + sin(theta) V``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import cos, exp, isfinite, sin, sqrt

import numpy as np

from .fock import (
    POLARIZATIONS,
    TEMPORAL_MODES,
    ModeLabel,
    StateVector,
    apply_two_mode_unitary,
    port_modes,
    swap_modes,
)

SPEED_OF_LIGHT = 299_792_458.0

BS_50_50 = np.array([[1.0, 1j], [1j, 1.0]]) / sqrt(2.0)


def coherence_time_from_filter(wavelength: float, fwhm: float) -> float:
    """Coherence time lambda^2 / (c * dlambda) of a filtered photon, in seconds."""
    if wavelength <= 0 or fwhm <= 0:
        raise ValueError("wavelength and bandwidth must be positive")
    return wavelength ** 2 / (SPEED_OF_LIGHT * fwhm)


@dataclass(frozen=True)
class OverlapModel:
    """Delay-dependent temporal overlap between the two input photons.

    ``mu(delay) = mu_max * exp(-delay**2 / (4 * coherence_time**2))`` so that the
    two-photon coincidence dip, which goes as ``mu**2``, is a Gaussian of
    1/e half-width ``sqrt(2) * coherence_time``.
    """

    mu_max: float = 1.0
    coherence_time: float = 1e-12
    delay: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.mu_max <= 1.0:
            raise ValueError(f"mu_max must lie in [0, 1], got {self.mu_max}")
        if not self.coherence_time > 0:
            raise ValueError("coherence_time must be positive")

    def at(self, delay: float) -> OverlapModel:
        return OverlapModel(self.mu_max, self.coherence_time, delay)

    @property
    def mu(self) -> float:
        if not isfinite(self.delay):
            return 0.0
        return self.mu_max * exp(-self.delay ** 2 / (4.0 * self.coherence_time ** 2))


def temporal_decomposition(model: OverlapModel) -> tuple[float, float]:
    """Coefficients of the second photon's wavepacket on ``(e0, e1)``.

    The reference photon sits in ``e0``; the other one is ``c0 e0 + c1 e1``.
    """
    c0 = model.mu
    return c0, sqrt(max(0.0, 1.0 - c0 * c0))


def beamsplitter_50_50(state: StateVector, port_a: str, port_b: str,
                       out_a: str | None = None, out_b: str | None = None) -> StateVector:
    """Mix two ports on a lossless 50/50 coupler.

    With ``out_a``/``out_b`` given, the light transmitted from ``port_a`` ends up
    in ``out_a`` (and likewise for b); both output ports must be registered.
    """
    if port_a == port_b:
        raise ValueError("beamsplitter ports must differ")
    for pol in POLARIZATIONS:
        for t in TEMPORAL_MODES:
            state = apply_two_mode_unitary(state, ModeLabel(port_a, pol, t),
                                           ModeLabel(port_b, pol, t), BS_50_50)
    for src, dst in ((port_a, out_a), (port_b, out_b)):
        if dst is not None and dst != src:
            for ma, mb in zip(port_modes(src), port_modes(dst)):
                state = swap_modes(state, ma, mb)
    return state


def polarization_rotation_matrix(angle: float) -> np.ndarray:
    c, s = cos(angle), sin(angle)
    # columns are the images of H+ and V+
    return np.array([[c, -s], [s, c]])


def rotate_polarization(state: StateVector, port: str, angle: float) -> StateVector:
    if angle == 0.0:
        return state
    u = polarization_rotation_matrix(angle)
    for t in TEMPORAL_MODES:
        state = apply_two_mode_unitary(state, ModeLabel(port, "H", t), ModeLabel(port, "V", t), u)
    return state


def analyzer(state: StateVector, port: str, theta: float) -> StateVector:
    """Linear polarizer passing ``cos(theta) H + sin(theta) V``.

    The blocked component is routed into a fresh loss port; the passed light
    stays in ``port`` with the analyzer's polarization.
    """
    state = rotate_polarization(state, port, -theta)
    loss = state.registry.fresh_loss_port()
    state = state.with_modes(port_modes(loss))
    for t in TEMPORAL_MODES:
        state = swap_modes(state, ModeLabel(port, "V", t), ModeLabel(loss, "V", t))
    return rotate_polarization(state, port, theta)


def loss_channel(state: StateVector, port: str, transmittance: float) -> StateVector:
    """Couple every mode of ``port`` to a fresh loss port with the given transmittance."""
    if not 0.0 <= transmittance <= 1.0:
        raise ValueError(f"transmittance must lie in [0, 1], got {transmittance}")
    if transmittance == 1.0:
        return state
    t, r = sqrt(transmittance), sqrt(1.0 - transmittance)
    u = np.array([[t, -r], [r, t]])
    loss = state.registry.fresh_loss_port()
    state = state.with_modes(port_modes(loss))
    for m, l in zip(port_modes(port), port_modes(loss)):
        state = apply_two_mode_unitary(state, m, l, u)
    return state


@dataclass(frozen=True)
class ElementSpec:
    """Declarative description of one element, applied with :func:`apply_element`."""

    kind: str
    ports: tuple[str, ...]
    angle: float = 0.0
    transmittance: float = 1.0
    outputs: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("beamsplitter", "rotator", "analyzer", "loss", "delay"):
            raise ValueError(f"unknown element kind {self.kind!r}")
        if not 0.0 <= self.transmittance <= 1.0:
            raise ValueError("transmittance must lie in [0, 1]")
        if self.kind == "beamsplitter" and len(self.ports) != 2:
            raise ValueError("a beamsplitter takes exactly two ports")


def apply_element(state: StateVector, element: ElementSpec) -> StateVector:
    kind = element.kind
    if kind == "beamsplitter":
        outs = element.outputs or (None, None)
        return beamsplitter_50_50(state, *element.ports, *outs)
    if kind == "rotator":
        return rotate_polarization(state, element.ports[0], element.angle)
    if kind == "analyzer":
        return analyzer(state, element.ports[0], element.angle)
    if kind == "loss":
        return loss_channel(state, element.ports[0], element.transmittance)
    # delays are absorbed into the OverlapModel at state preparation
    return state

