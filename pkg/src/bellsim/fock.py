"""Truncated Fock space over labelled optical modes.

A mode is a (port, polarization, temporal) triple. Temporal modes live in a
two-dimensional space spanned by ``e0`` and ``e1``, which is enough to hold any
pair of single-photon wavepackets. States are sparse maps from occupation
tuples to complex amplitudes; every operation returns a new state.

Linear-optical elements act on creation operators. For a 2x2 unitary ``u``
acting on modes ``a`` and ``b``::

    a+ -> u[0,0] a+ + u[1,0] b+
    b+ -> u[0,1] a+ + u[1,1] b+
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial, sqrt
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

N_MAX = 4
PRUNE_THRESHOLD = 1e-15
UNITARY_TOL = 1e-12

POLARIZATIONS = ("H", "V")
TEMPORAL_MODES = (0, 1)
FIXED_PORTS = ("inB", "inC", "out1", "out2", "trigger")
_LOSS_PORT = re.compile(r"^loss(\d+)$")

Occupation = tuple[int, ...]


class TruncationError(ValueError):
    """Raised when an operation would exceed the photon-number cutoff."""


class NonUnitaryError(ValueError):
    pass


class RegistryMismatchError(ValueError):
    pass


def is_loss_port(port: str) -> bool:
    return _LOSS_PORT.match(port) is not None


@dataclass(frozen=True, order=True)
class ModeLabel:
    port: str
    pol: str = "H"
    temporal: int = 0

    def __post_init__(self):
        if self.port not in FIXED_PORTS and not is_loss_port(self.port):
            raise ValueError(f"unknown port {self.port!r}")
        if self.pol not in POLARIZATIONS:
            raise ValueError(f"polarization must be H or V, got {self.pol!r}")
        if self.temporal not in TEMPORAL_MODES:
            raise ValueError(f"temporal index must be 0 or 1, got {self.temporal!r}")

    def __str__(self):
        return f"{self.pol}{self.temporal}@{self.port}"


def port_modes(port: str) -> tuple[ModeLabel, ...]:
    """All polarization x temporal modes of one spatial port, in canonical order."""
    return tuple(ModeLabel(port, p, t) for p in POLARIZATIONS for t in TEMPORAL_MODES)


@dataclass(frozen=True)
class ModeRegistry:
    """Ordered, duplicate-free list of modes fixing the occupation-tuple layout."""

    modes: tuple[ModeLabel, ...]
    _index: Mapping[ModeLabel, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {m: i for i, m in enumerate(self.modes)}
        if len(index) != len(self.modes):
            raise ValueError("duplicate mode labels in registry")
        object.__setattr__(self, "_index", MappingProxyType(index))

    @classmethod
    def from_ports(cls, ports: Iterable[str]) -> ModeRegistry:
        return _registry_from_ports(tuple(ports))

    def __len__(self):
        return len(self.modes)

    def __contains__(self, mode):
        return mode in self._index

    def index(self, mode: ModeLabel) -> int:
        try:
            return self._index[mode]
        except KeyError:
            raise KeyError(f"mode {mode} not in registry") from None

    @property
    def ports(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(m.port for m in self.modes))

    def indices_of_port(self, port: str) -> tuple[int, ...]:
        return tuple(i for i, m in enumerate(self.modes) if m.port == port)

    def extended(self, modes: Iterable[ModeLabel]) -> ModeRegistry:
        new = tuple(m for m in modes if m not in self._index)
        return _registry_from_modes(self.modes + new)

    def fresh_loss_port(self) -> str:
        used = [int(_LOSS_PORT.match(p).group(1)) for p in self.ports if is_loss_port(p)]
        return f"loss{max(used) + 1 if used else 0}"


@lru_cache(maxsize=256)
def _registry_from_modes(modes: tuple[ModeLabel, ...]) -> ModeRegistry:
    return ModeRegistry(modes)


@lru_cache(maxsize=64)
def _registry_from_ports(ports: tuple[str, ...]) -> ModeRegistry:
    return _registry_from_modes(tuple(m for p in ports for m in port_modes(p)))


@dataclass(frozen=True)
class StateVector:
    """Immutable sparse superposition of Fock basis states.

    ``amplitudes`` maps occupation tuples (ordered as ``registry.modes``) to
    complex amplitudes. An empty map is the "no state" marker returned by a
    zero-probability projection.
    """

    registry: ModeRegistry
    amplitudes: Mapping[Occupation, complex]
    n_max: int = N_MAX

    def __post_init__(self):
        amps = dict(self.amplitudes)
        width = len(self.registry)
        for occ in amps:
            if len(occ) != width:
                raise ValueError("occupation tuple does not match registry size")
            if sum(occ) > self.n_max:
                raise TruncationError(f"basis state {occ} exceeds n_max={self.n_max}")
        object.__setattr__(self, "amplitudes", MappingProxyType(amps))

    @classmethod
    def vacuum(cls, registry: ModeRegistry, n_max: int = N_MAX) -> StateVector:
        return cls(registry, {(0,) * len(registry): 1.0 + 0j}, n_max)

    @classmethod
    def empty(cls, registry: ModeRegistry, n_max: int = N_MAX) -> StateVector:
        return cls(registry, {}, n_max)

    @classmethod
    def basis(cls, registry: ModeRegistry, photons: Mapping[ModeLabel, int],
              n_max: int = N_MAX) -> StateVector:
        occ = [0] * len(registry)
        for mode, n in photons.items():
            occ[registry.index(mode)] += n
        return cls(registry, {tuple(occ): 1.0 + 0j}, n_max)

    @property
    def is_empty(self) -> bool:
        return not self.amplitudes

    def norm(self) -> float:
        return sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def normalize(self) -> StateVector:
        nrm = self.norm()
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return self.scaled(1.0 / nrm)

    def scaled(self, factor: complex) -> StateVector:
        return StateVector(self.registry,
                           {k: v * factor for k, v in self.amplitudes.items()},
                           self.n_max)

    def pruned(self, threshold: float = PRUNE_THRESHOLD) -> StateVector:
        return StateVector(self.registry,
                           {k: v for k, v in self.amplitudes.items() if abs(v) >= threshold},
                           self.n_max)

    def amplitude(self, photons: Mapping[ModeLabel, int]) -> complex:
        occ = [0] * len(self.registry)
        for mode, n in photons.items():
            occ[self.registry.index(mode)] += n
        return self.amplitudes.get(tuple(occ), 0j)

    def with_registry(self, registry: ModeRegistry) -> StateVector:
        """Embed into a registry whose mode list starts with this one's."""
        width = len(self.registry)
        if registry.modes[:width] != self.registry.modes:
            raise RegistryMismatchError("target registry does not extend the current one")
        pad = (0,) * (len(registry) - width)
        return StateVector(registry, {k + pad: v for k, v in self.amplitudes.items()},
                           self.n_max)

    def with_modes(self, modes: Iterable[ModeLabel]) -> StateVector:
        return self.with_registry(self.registry.extended(modes))

    def photon_numbers(self) -> set[int]:
        return {sum(k) for k in self.amplitudes}

    def __add__(self, other: StateVector) -> StateVector:
        _check_same_registry(self, other)
        out = dict(self.amplitudes)
        for k, v in other.amplitudes.items():
            out[k] = out.get(k, 0j) + v
        return StateVector(self.registry, out, self.n_max)

    def __repr__(self):
        terms = ", ".join(
            f"{v:.4g}|" + ",".join(f"{n}{self.registry.modes[i]}" for i, n in enumerate(k) if n)
            + ">"
            for k, v in sorted(self.amplitudes.items())
        )
        return f"StateVector({terms or 'empty'})"


def _check_same_registry(x: StateVector, y: StateVector):
    if x.registry.modes != y.registry.modes:
        raise RegistryMismatchError("states live on different mode registries")


def create_photon(state: StateVector, mode: ModeLabel) -> StateVector:
    """Apply the creation operator of ``mode``; the result is not renormalized."""
    i = state.registry.index(mode)
    out: dict[Occupation, complex] = {}
    for occ, amp in state.amplitudes.items():
        if sum(occ) + 1 > state.n_max:
            raise TruncationError(f"creating a photon in {mode} exceeds n_max={state.n_max}")
        n = occ[i]
        new = occ[:i] + (n + 1,) + occ[i + 1:]
        out[new] = out.get(new, 0j) + amp * sqrt(n + 1)
    return StateVector(state.registry, out, state.n_max)


def create_superposed_photon(state: StateVector, weights: Mapping[ModeLabel, complex]) -> StateVector:
    """Apply a linear combination of creation operators, sum_m w_m a_m+."""
    result = None
    for mode, w in weights.items():
        if w == 0:
            continue
        term = create_photon(state, mode).scaled(w)
        result = term if result is None else result + term
    if result is None:
        return StateVector.empty(state.registry, state.n_max)
    return result.pruned()


def check_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise NonUnitaryError(f"expected a 2x2 matrix, got shape {u.shape}")
    if not np.allclose(u.conj().T @ u, np.eye(2), rtol=0.0, atol=tol):
        raise NonUnitaryError("matrix is not unitary within tolerance")
    return u


@lru_cache(maxsize=4096)
def _mixing_table(na: int, nb: int, u_key: tuple[complex, ...]) -> tuple[tuple[int, complex], ...]:
    """Coefficients taking |na, nb> to sum_m c_m |m, na+nb-m>."""
    u00, u01, u10, u11 = u_key
    total = na + nb
    coeffs = [0j] * (total + 1)
    norm_in = sqrt(factorial(na) * factorial(nb))
    for k in range(na + 1):
        ck = comb(na, k) * u00 ** k * u10 ** (na - k)
        if ck == 0:
            continue
        for l in range(nb + 1):
            c = ck * comb(nb, l) * u01 ** l * u11 ** (nb - l)
            if c == 0:
                continue
            m = k + l
            coeffs[m] += c * sqrt(factorial(m) * factorial(total - m)) / norm_in
    return tuple((m, c) for m, c in enumerate(coeffs) if c != 0)


def apply_two_mode_unitary(state: StateVector, a: ModeLabel, b: ModeLabel,
                           u: np.ndarray) -> StateVector:
    u = check_unitary(u)
    ia, ib = state.registry.index(a), state.registry.index(b)
    if ia == ib:
        raise ValueError("two-mode unitary needs two distinct modes")
    key = (complex(u[0, 0]), complex(u[0, 1]), complex(u[1, 0]), complex(u[1, 1]))
    out: dict[Occupation, complex] = {}
    for occ, amp in state.amplitudes.items():
        na, nb = occ[ia], occ[ib]
        if na == 0 and nb == 0:
            out[occ] = out.get(occ, 0j) + amp
            continue
        base = list(occ)
        for m, c in _mixing_table(na, nb, key):
            base[ia], base[ib] = m, na + nb - m
            new = tuple(base)
            out[new] = out.get(new, 0j) + amp * c
    return StateVector(state.registry, out, state.n_max).pruned()


def swap_modes(state: StateVector, a: ModeLabel, b: ModeLabel) -> StateVector:
    """Exchange the contents of two modes (a permutation, hence unitary)."""
    ia, ib = state.registry.index(a), state.registry.index(b)
    out = {}
    for occ, amp in state.amplitudes.items():
        lst = list(occ)
        lst[ia], lst[ib] = lst[ib], lst[ia]
        out[tuple(lst)] = amp
    return StateVector(state.registry, out, state.n_max)


def inner_product(x: StateVector, y: StateVector) -> complex:
    """<x|y>, conjugate-linear in ``x``."""
    _check_same_registry(x, y)
    small, large = (x, y) if len(x.amplitudes) <= len(y.amplitudes) else (y, x)
    total = 0j
    for occ, amp in small.amplitudes.items():
        other = large.amplitudes.get(occ)
        if other is None:
            continue
        if small is x:
            total += amp.conjugate() * other
        else:
            total += other.conjugate() * amp
    return total


def project_pattern(state: StateVector, modes: Sequence[ModeLabel],
                    predicate: Callable[[tuple[int, ...]], bool]) -> tuple[float, StateVector]:
    """Project onto basis states whose occupations of ``modes`` satisfy ``predicate``.

    The predicate receives the occupations of ``modes`` in the given order.
    Returns the outcome probability and the renormalized post-measurement
    state; a zero-probability outcome gives ``(0.0, empty state)``.
    """
    idx = [state.registry.index(m) for m in modes]
    kept = {occ: amp for occ, amp in state.amplitudes.items()
            if predicate(tuple(occ[i] for i in idx))}
    prob = sum(abs(a) ** 2 for a in kept.values())
    if prob == 0.0:
        return 0.0, StateVector.empty(state.registry, state.n_max)
    collapsed = StateVector(state.registry, kept, state.n_max).scaled(1.0 / sqrt(prob))
    return min(prob, 1.0), collapsed


def port_photon_count(state: StateVector, occ: Occupation, port: str) -> int:
    return sum(occ[i] for i in state.registry.indices_of_port(port))
