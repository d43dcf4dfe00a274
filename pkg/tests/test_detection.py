import math

import numpy as np
import pytest

import oracle
from conftest import single
from bellsim.detection import (
    CountTally,
    DetectorSpec,
    click_distribution,
    coincidence_probability,
    gated_coincidence_probability,
    number_distribution,
    tally_accumulate,
)
from bellsim.experiments import Setting, class_contributions, reference_config
from bellsim.fock import ModeLabel, ModeRegistry, StateVector
from bellsim.optics import BS_50_50, analyzer, beamsplitter_50_50, loss_channel
from bellsim.sources import CoherentParams, PulseClass, SpdcParams

D1, D2 = DetectorSpec("D1"), DetectorSpec("D2")
OUTS = {"out1": D1, "out2": D2}


def test_single_photon_clicks(io_registry):
    p = click_distribution(single(io_registry, "out1"), OUTS)
    assert p == {frozenset({"D1"}): 1.0}


def test_singlet_gives_double_click(io_registry):
    psi = (StateVector.basis(io_registry, {ModeLabel("out1", "H"): 1, ModeLabel("out2", "V"): 1})
           + StateVector.basis(io_registry, {ModeLabel("out1", "V"): 1, ModeLabel("out2", "H"): 1})
           .scaled(-1)).normalize()
    p = click_distribution(psi, OUTS)
    assert p[frozenset({"D1", "D2"})] == pytest.approx(1.0, abs=1e-15)


def test_two_photons_in_one_input(io_registry):
    s = StateVector.basis(io_registry, {ModeLabel("inC", "V"): 2})
    out = beamsplitter_50_50(s, "inB", "inC", "out1", "out2")
    ref = oracle.probability(oracle.run({(2, 0): 1.0}, 2, [(0, 1, BS_50_50)]),
                             lambda occ: occ == (1, 1))
    assert ref == pytest.approx(0.5, abs=1e-12)
    p = click_distribution(out, OUTS)
    assert p[frozenset({"D1", "D2"})] == pytest.approx(ref, abs=1e-12)
    assert sum(p.values()) == pytest.approx(1.0, abs=1e-12)


def test_click_probabilities_sum_to_one(io_registry):
    s = StateVector.basis(io_registry, {ModeLabel("inB"): 1, ModeLabel("inC", "V", 1): 2})
    out = analyzer(beamsplitter_50_50(s, "inB", "inC", "out1", "out2"), "out1", 0.4)
    p = click_distribution(out, {"out1": DetectorSpec("D1", 0.3), "out2": DetectorSpec("D2", 0.8)})
    assert sum(p.values()) == pytest.approx(1.0, abs=1e-12)
    assert min(p.values()) >= 0


def test_efficiency_composition(io_registry):
    s = StateVector.basis(io_registry, {ModeLabel("inB"): 1, ModeLabel("inC", "V"): 2})
    s = beamsplitter_50_50(s, "inB", "inC", "out1", "out2")
    eta, eta_path = 0.7, 0.4
    explicit = loss_channel(loss_channel(s, "out1", eta_path), "out2", eta_path)
    a = click_distribution(explicit, {"out1": DetectorSpec("D1", eta), "out2": DetectorSpec("D2", eta)})
    b = click_distribution(s, {"out1": DetectorSpec("D1", eta * eta_path),
                               "out2": DetectorSpec("D2", eta * eta_path)})
    assert a.keys() == b.keys()
    for k in a:
        assert a[k] == pytest.approx(b[k], abs=1e-12)


def test_threshold_equals_number_resolving_below_two_photons(io_registry):
    s = (single(io_registry, "out1") + single(io_registry, "out2", "V")
         + StateVector.vacuum(io_registry)).normalize()
    threshold = click_distribution(s, OUTS)
    pnr = number_distribution(s, ["out1", "out2"])
    assert max(sum(k) for k in pnr) <= 1
    converted = {frozenset(d for d, n in zip(("D1", "D2"), k) if n): p for k, p in pnr.items()}
    assert threshold.keys() == converted.keys()
    for k in threshold:
        assert threshold[k] == pytest.approx(converted[k], abs=1e-15)


def test_gate_closed_gives_zero():
    cls = PulseClass(True, True, False, 1, 0.3)
    assert gated_coincidence_probability(cls, {frozenset({"D1", "D2"}): 1.0}) == 0.0


def _class_term(spdc, alpha, kept, n):
    cfg = reference_config("fringe", mu_max=1.0, spdc=spdc,
                       coherent=CoherentParams(alpha, math.pi / 2))
    label = ("twin" if kept else "lost") + f"+trig|n={n}"
    return sum(w * q for lab, w, q in class_contributions(cfg, Setting(0.0, math.pi / 4, -math.pi / 4))
               if lab == label)


@pytest.mark.parametrize("p_pair, eta_t, eta_s, alpha", [
    (1e-4, 0.2, 0.04, 4e-3), (3e-4, 0.1, 0.08, 2e-3), (5e-5, 0.9, 0.3, 1e-2)])
def test_signal_scales_as_gamma_alpha(p_pair, eta_t, eta_s, alpha):
    spdc = SpdcParams(p_pair, eta_t, eta_s)
    term = _class_term(spdc, alpha, True, 1)
    ref = _class_term(SpdcParams(1e-4, 0.2, 0.04), 4e-3, True, 1) / (8e-7 * 4e-3 * math.exp(-4e-3))
    assert term / (spdc.gamma * alpha * math.exp(-alpha)) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("p_pair, eta_t, eta_s, alpha", [
    (1e-4, 0.2, 0.04, 4e-3), (3e-4, 0.1, 0.08, 2e-3), (5e-5, 0.9, 0.3, 1e-2)])
def test_background_scales_as_h_gamma_alpha_squared(p_pair, eta_t, eta_s, alpha):
    spdc = SpdcParams(p_pair, eta_t, eta_s)
    h = spdc.heralding_loss_ratio
    term = _class_term(spdc, alpha, False, 2)
    s0 = SpdcParams(1e-4, 0.2, 0.04)
    ref = _class_term(s0, 4e-3, False, 2) / (s0.heralding_loss_ratio * s0.gamma * 16e-6 * math.exp(-4e-3))
    assert term / (h * spdc.gamma * alpha ** 2 * math.exp(-alpha)) == pytest.approx(ref, rel=1e-12)


def test_gated_probability_matches_class_sum():
    cfg = reference_config("fringe")
    setting = Setting(0.0, 0.5, -math.pi / 4)
    from bellsim.experiments import propagate
    from bellsim.sources import build_input_state, enumerate_pulse_classes
    total = 0.0
    for cls in enumerate_pulse_classes(cfg.spdc, cfg.coherent):
        if cls.remainder or cls.weight == 0:
            continue
        state = build_input_state(cls, cfg.overlap, cfg.coherent)
        pats = click_distribution(propagate(state, setting.theta1, setting.theta2), OUTS)
        total += gated_coincidence_probability(cls, pats)
    ref = sum(w * q for _, w, q in class_contributions(cfg, setting))
    assert total == pytest.approx(ref, rel=1e-12)


def test_monotone_in_efficiency():
    setting = Setting(0.0, 0.9, -math.pi / 4)
    last = -1.0
    for eta in np.linspace(0.0, 1.0, 11):
        cfg = reference_config("fringe", detectors=(DetectorSpec("D1", eta), DetectorSpec("D2", 1.0)))
        p = sum(w * q for _, w, q in class_contributions(cfg, setting))
        assert p >= last - 1e-18
        last = p
    last = -1.0
    for eta_s in np.linspace(0.01, 1.0, 12):
        cfg = reference_config("fringe", spdc=SpdcParams(1e-4, 0.2, eta_s))
        p = sum(w * q for _, w, q in class_contributions(cfg, setting))
        assert p >= last - 1e-18
        last = p


def test_zero_efficiency_gives_nothing():
    cfg = reference_config("fringe", detectors=(DetectorSpec("D1", 0.0), DetectorSpec("D2", 0.0)))
    assert sum(w * q for _, w, q in class_contributions(cfg, Setting(0.0, 0.3, -0.7))) == 0.0


def test_tally_expected_and_sampled():
    tallies = {}
    assert tally_accumulate(tallies, 0.0, 0.0, 10).counts == 0
    t = tally_accumulate({}, 1.0, 1e-6, 10 ** 9)
    assert t.counts == pytest.approx(1000.0)
    assert t.sigma == pytest.approx(31.62, abs=0.01)
    rng = np.random.Generator(np.random.Philox(5))
    draws = [tally_accumulate({}, 1.0, 1e-6, 10 ** 9, rng).counts for _ in range(2000)]
    assert all(float(d).is_integer() for d in draws)
    assert np.mean(draws) == pytest.approx(1000, abs=3 * 31.62 / math.sqrt(2000))
    assert np.std(draws) == pytest.approx(31.62, rel=0.1)


def test_tally_merge_by_addition():
    tallies = {}
    tally_accumulate(tallies, 0.5, 1e-3, 1000)
    merged = tally_accumulate(tallies, 0.5, 1e-3, 3000)
    assert merged.counts == pytest.approx(4.0)
    assert merged.sigma == pytest.approx(2.0)
    with pytest.raises(ValueError):
        CountTally(0.5, 1.0) + CountTally(0.6, 1.0)
    with pytest.raises(ValueError):
        tally_accumulate({}, 0.0, 0.1, 0)


def test_detector_validation():
    with pytest.raises(ValueError):
        DetectorSpec("D9")
    with pytest.raises(ValueError):
        DetectorSpec("D1", 1.1)
