import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bellsim.analysis import (
    BELL_VISIBILITY_THRESHOLD,
    DEFAULT_CHSH_SETTINGS,
    bell_violated,
    chsh_from_counts,
    compute_E,
    compute_S,
    fit_gaussian_dip,
    fit_sine_squared,
    gaussian_dip,
    sine_squared,
    singlet_counts,
    snr_model,
    visibility,
)

TAU = np.linspace(-4, 4, 33)
THETA = np.deg2rad(np.arange(-90, 91, 10.0))


def test_gaussian_fit_recovers_exact_model():
    y = gaussian_dip(TAU, 100.0, 0.994, 0.0, 1.0)
    fit = fit_gaussian_dip(TAU, y)
    assert fit.converged
    for key, val in (("baseline", 100.0), ("visibility", 0.994), ("center", 0.0), ("width", 1.0)):
        assert fit.params[key] == pytest.approx(val, abs=1e-8)


def test_gaussian_fit_in_seconds():
    tau = TAU * 0.68e-12
    y = gaussian_dip(tau, 3.2e4, 0.9, 0.1e-12, 0.96e-12)
    fit = fit_gaussian_dip(tau, y)
    assert fit.visibility == pytest.approx(0.9, abs=1e-10)
    assert fit.params["width"] == pytest.approx(0.96e-12, rel=1e-8)
    assert fit.params["center"] == pytest.approx(0.1e-12, abs=1e-20)


def test_sine_fit_recovers_exact_model():
    y = sine_squared(THETA, 50.0, 0.864, 0.1)
    fit = fit_sine_squared(THETA, y)
    assert fit.converged
    assert fit.visibility == pytest.approx(0.864, abs=1e-8)
    assert fit.params["phase"] == pytest.approx(0.1, abs=1e-8)
    assert fit.params["baseline"] == pytest.approx(50.0, abs=1e-8)


def test_sine_fit_matches_sin_squared_form():
    # sin^2(theta1 - theta2) with theta2 = -45 deg, visibility 1
    y = np.sin(THETA + math.pi / 4) ** 2
    fit = fit_sine_squared(THETA, y)
    assert fit.visibility == pytest.approx(1.0, abs=1e-9)
    assert fit.params["phase"] == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("v", [0.2, 0.7, 1.0])
def test_sine_fit_of_mixed_fringe(v):
    # signal-class closed form, (1 + V sin 2 theta1)/2 for theta2 = -45 deg
    y = np.sin(THETA + math.pi / 4) ** 2 - (1 - v) * np.sin(2 * THETA) / 2
    assert fit_sine_squared(THETA, y).visibility == pytest.approx(v, abs=1e-9)


def test_flat_fringe_has_no_visibility():
    rng = np.random.Generator(np.random.Philox(11))
    y = rng.poisson(400.0, size=len(THETA)).astype(float)
    fit = fit_sine_squared(THETA, y, np.sqrt(y))
    assert fit.converged
    assert fit.visibility <= 3 * fit.visibility_error


def test_fit_rejects_short_data():
    with pytest.raises(ValueError):
        fit_gaussian_dip(TAU[:4], TAU[:4])
    with pytest.raises(ValueError):
        fit_sine_squared(THETA[:6] * 0.1, THETA[:6])


def test_fit_is_deterministic():
    rng = np.random.Generator(np.random.Philox(3))
    y = rng.poisson(gaussian_dip(TAU, 800.0, 0.9, 0.2, 1.3)).astype(float)
    a = fit_gaussian_dip(TAU, y, np.sqrt(y))
    b = fit_gaussian_dip(TAU, y.copy(), np.sqrt(y))
    assert a == b


def test_gaussian_error_coverage():
    """1-sigma intervals from the curvature should cover the truth ~68% of the time."""
    true_v = 0.9
    mean = gaussian_dip(TAU, 1000.0, true_v, 0.0, 1.0)
    hits = 0
    for seed in range(200):
        rng = np.random.Generator(np.random.Philox(seed))
        y = rng.poisson(mean).astype(float)
        fit = fit_gaussian_dip(TAU, y, np.sqrt(np.maximum(y, 1.0)))
        assert fit.converged
        hits += abs(fit.visibility - true_v) <= fit.visibility_error
    assert 63 <= hits / 2 <= 73


def test_visibility_helper():
    assert visibility([1.0, 3.0, 2.0]) == pytest.approx(0.5)


# --- CHSH -------------------------------------------------------------------

def test_E_examples():
    assert compute_E(0, 50, 50, 0)[0] == -1.0
    assert compute_E(10, 10, 10, 10)[0] == 0.0
    e, s = compute_E(10, 10, 10, 10)
    assert s == pytest.approx(math.sqrt(1 / 40))


def test_E_of_ideal_singlet():
    a, b = 0.0, math.pi / 8
    c = lambda x, y: singlet_counts(x, y, 1.0, 1.0)
    e, _ = compute_E(c(a, b), c(a + math.pi / 2, b), c(a, b + math.pi / 2),
                     c(a + math.pi / 2, b + math.pi / 2))
    assert e == pytest.approx(-math.cos(math.pi / 4), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.1, 1e6), min_size=4, max_size=4), st.floats(1e-3, 1e3))
def test_E_scale_invariant(counts, k):
    e1, _ = compute_E(*counts)
    e2, _ = compute_E(*(c * k for c in counts))
    assert e1 == pytest.approx(e2, abs=1e-12)
    assert -1 <= e1 <= 1


def test_E_errors():
    with pytest.raises(ZeroDivisionError):
        compute_E(0, 0, 0, 0)
    with pytest.raises(ValueError):
        compute_E(-1, 2, 3, 4)


def test_E_sigma_matches_finite_difference_propagation():
    counts = np.array([120.0, 30.0, 45.0, 200.0])
    grad = []
    for i in range(4):
        h = np.zeros(4)
        h[i] = 1e-4
        grad.append((compute_E(*(counts + h))[0] - compute_E(*(counts - h))[0]) / 2e-4)
    ref = math.sqrt(sum(g * g * c for g, c in zip(grad, counts)))
    assert compute_E(*counts)[1] == pytest.approx(ref, rel=1e-6)


def test_S_examples():
    r = chsh_from_counts(lambda x, y: singlet_counts(x, y, 1.0, 1000.0))
    assert r.S == pytest.approx(-2 * math.sqrt(2), abs=1e-12)
    assert compute_S([(0.0, 0.1)] * 4).S == 0.0
    r = compute_S([(0.1, 0.01), (0.2, 0.02), (0.3, 0.02), (0.4, 0.04)])
    assert r.S == pytest.approx(0.1 - 0.2 + 0.3 + 0.4)
    assert r.sigma_S == pytest.approx(math.sqrt(1e-4 + 4e-4 + 4e-4 + 16e-4))


def test_S_at_visibility_0864():
    r = chsh_from_counts(lambda x, y: singlet_counts(x, y, 0.864, 1000.0))
    assert r.S == pytest.approx(-2.44, abs=0.005)


@pytest.mark.parametrize("v", [0.2, 0.5, 0.71, 0.9, 1.0])
def test_S_is_visibility_times_tsirelson(v):
    r = chsh_from_counts(lambda x, y: singlet_counts(x, y, v, 1.0))
    assert abs(r.S) / (2 * math.sqrt(2)) == pytest.approx(v, abs=1e-9)


def test_bell_threshold():
    assert bell_violated(0.864)
    assert not bell_violated(0.70)
    assert not bell_violated(1 / math.sqrt(2))
    assert bell_violated(math.nextafter(BELL_VISIBILITY_THRESHOLD, 1.0))
    with pytest.raises(ValueError):
        bell_violated(1.2)


@pytest.mark.parametrize("v", [0.70, 0.705, 0.7071, 0.7072, 0.71, 0.72])
def test_threshold_agrees_with_chsh(v):
    r = chsh_from_counts(lambda x, y: singlet_counts(x, y, v, 1.0))
    assert bell_violated(v) == r.violates_local_bound


# --- signal-to-noise ----------------------------------------------------------

def test_snr_budget_at_operating_point():
    gamma, h = 46 / 76e6, 1254 / 46
    with pytest.warns(RuntimeWarning):
        b = snr_model(gamma, 4e-3, h)
    assert 0.90 <= b.v_max_predicted <= 0.97
    # two-photon background over signal at the fringe peak is H alpha / 4
    assert b.P_background / b.P_signal == pytest.approx(h * 4e-3 / 4, rel=0.01)
    assert b.signal_constant == pytest.approx(0.25, rel=0.01)
    assert b.background_constant == pytest.approx(1 / 16, rel=0.01)


def test_snr_vanishing_alpha():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        b = snr_model(1e-6, 1e-9, 27.0)
    assert b.v_max_predicted == pytest.approx(1.0, abs=1e-6)


def test_snr_rejects_bad_inputs():
    with pytest.raises(ValueError):
        snr_model(0.0, 1e-3, 27.0)
