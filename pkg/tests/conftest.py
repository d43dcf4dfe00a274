import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bellsim.fock import ModeLabel, ModeRegistry, StateVector  # noqa: E402


def random_unitary(rng, n=2):
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def reg4():
    """inB and inC: 8 modes."""
    return ModeRegistry.from_ports(["inB", "inC"])


@pytest.fixture
def io_registry():
    return ModeRegistry.from_ports(["inB", "inC", "out1", "out2"])


def single(registry, port, pol="H", t=0):
    return StateVector.basis(registry, {ModeLabel(port, pol, t): 1})
