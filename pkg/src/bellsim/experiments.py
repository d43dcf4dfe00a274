"""The four measurements: same-source HOM dip, gated dip, polarization fringe, CHSH.

Every measured quantity is a per-pulse event probability
``sum_c weight_c * q_c(setting)``, where ``q_c`` is the conditional
coincidence probability of pulse class ``c`` computed with the Fock engine.
The analytic engine evaluates the sum exactly; the Monte Carlo engine
estimates it by importance sampling over the classes and also draws
Poisson-fluctuating count data sets.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import analysis
from .detection import DetectorSpec, click_distribution, coincidence_probability, tally_accumulate
from .fock import ModeLabel, StateVector, create_photon, create_superposed_photon
from .optics import OverlapModel, analyzer, beamsplitter_50_50, coherence_time_from_filter, loss_channel
from .sources import (
    CoherentParams,
    PulseClass,
    SpdcParams,
    build_input_state,
    coherent_photon_modes,
    enumerate_pulse_classes,
    input_registry,
    spdc_from_rates,
)

SCENARIOS = ("hom2", "gated_dip", "fringe", "chsh")
ENGINES = ("analytic", "montecarlo")

# operating point quoted for the independent-source runs
REP_RATE = 76e6
TRIGGER_RATE = 1300.0
PAIR_RATE_PER_DETECTOR = 23.0
ALPHA = 4e-3
WAVELENGTH = 780e-9
FILTER_FWHM = 3e-9
HOM_FILTER_FWHM = 10e-9
THETA2_FRINGE = -math.pi / 4

MU_MAX_SAME_SOURCE = math.sqrt(0.994)
# bisection result of calibrate_mu_max on the gated dip at the operating point, target 0.908
MU_MAX_INDEPENDENT = 0.9789346826551082

DEFAULT_DETECTORS = (DetectorSpec("D1"), DetectorSpec("D2"))


@dataclass(frozen=True)
class Setting:
    delay: float = 0.0
    theta1: float = 0.0
    theta2: float = 0.0


@dataclass
class CurvePoint:
    setting: float
    counts: float
    sigma: float
    probability: float
    probability_sigma: float = 0.0
    model_fit: float = math.nan


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    spdc: SpdcParams
    coherent: CoherentParams
    overlap: OverlapModel
    delays: tuple[float, ...] = (0.0,)
    theta1: tuple[float, ...] = (0.0,)
    theta2: float = 0.0
    detectors: tuple[DetectorSpec, ...] = DEFAULT_DETECTORS
    pulses: int = 10 ** 11
    engine: str = "analytic"
    seed: int = 0
    trials: int = 10 ** 6
    include_background: bool = True
    chsh_settings: tuple[float, float, float, float] = analysis.DEFAULT_CHSH_SETTINGS
    rep_rate: float = REP_RATE
    threads: int = 1
    target_rel_error: float | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if not self.delays or not self.theta1:
            raise ValueError("setting grids must be non-empty")
        if self.pulses <= 0 or self.trials <= 0:
            raise ValueError("pulses and trials must be positive")
        if len(self.chsh_settings) != 4:
            raise ValueError("CHSH needs exactly the settings (a, a', b, b')")
        ids = {d.id for d in self.detectors}
        if not {"D1", "D2"} <= ids:
            raise ValueError("detectors D1 and D2 are required")
        object.__setattr__(self, "delays", tuple(float(d) for d in self.delays))
        object.__setattr__(self, "theta1", tuple(float(t) for t in self.theta1))

    def detector(self, det_id: str) -> DetectorSpec:
        return next(d for d in self.detectors if d.id == det_id)

    def with_(self, **changes) -> ExperimentConfig:
        return replace(self, **changes)


# --- state evolution --------------------------------------------------------

def propagate(state: StateVector, theta1: float, theta2: float) -> StateVector:
    """Coupler followed by the two analyzers."""
    state = beamsplitter_50_50(state, "inB", "inC", "out1", "out2")
    state = analyzer(state, "out1", theta1)
    return analyzer(state, "out2", theta2)


def _detect(state: StateVector, d1: DetectorSpec, d2: DetectorSpec) -> float:
    probs = click_distribution(state, {"out1": d1, "out2": d2})
    return coincidence_probability(probs, ("D1", "D2"))


@lru_cache(maxsize=65536)
def _class_coincidence(twin: bool, n_coherent: int, overlap: OverlapModel, coh: CoherentParams,
                       theta1: float, theta2: float, d1: DetectorSpec, d2: DetectorSpec) -> float:
    if twin + n_coherent < 2:
        return 0.0
    cls = PulseClass(True, twin, True, n_coherent, 1.0)
    state = build_input_state(cls, overlap, coh)
    return _detect(propagate(state, theta1, theta2), d1, d2)


@lru_cache(maxsize=65536)
def _hom2_coincidence(overlap: OverlapModel, eta_a: float, eta_b: float, theta1: float,
                      theta2: float, d1: DetectorSpec, d2: DetectorSpec) -> float:
    # fiber B carries the reference photon, fiber A (patched into inC) the delayed one
    state = StateVector.vacuum(input_registry())
    state = create_photon(state, ModeLabel("inB", "H", 0))
    state = create_superposed_photon(state, coherent_photon_modes(overlap, CoherentParams(0.0)))
    state = loss_channel(state, "inB", eta_b)
    state = loss_channel(state, "inC", eta_a)
    return _detect(propagate(state, theta1, theta2), d1, d2)


def class_contributions(cfg: ExperimentConfig, setting: Setting) -> list[tuple[str, float, float]]:
    """``(label, weight, conditional coincidence probability)`` for every class that can
    produce a gated D1-D2 coincidence at ``setting``."""
    overlap = cfg.overlap.at(setting.delay)
    d1, d2 = cfg.detector("D1"), cfg.detector("D2")
    if cfg.scenario == "hom2":
        q = _hom2_coincidence(overlap, cfg.spdc.eta_trigger, cfg.spdc.eta_signal,
                              setting.theta1, setting.theta2, d1, d2)
        return [("pair", cfg.spdc.p_pair, q)]
    out = []
    for cls in enumerate_pulse_classes(cfg.spdc, cfg.coherent):
        if cls.remainder or not cls.trigger_fires or cls.weight == 0.0:
            continue
        if not cfg.include_background and not (cls.twin_detectable and cls.n_coherent == 1):
            continue
        q = _class_coincidence(cls.twin_detectable, cls.n_coherent, overlap, cfg.coherent,
                               setting.theta1, setting.theta2, d1, d2)
        if q > 0.0:
            out.append((cls.label, cls.weight, q))
    return out


def analytic_event_probability(cfg: ExperimentConfig, setting: Setting) -> float:
    """Exact per-pulse probability of a (gated) D1-D2 coincidence."""
    return math.fsum(w * q for _, w, q in class_contributions(cfg, setting))


# --- Monte Carlo ------------------------------------------------------------

def monte_carlo_estimate(contributions, trials: int,
                         rng: np.random.Generator) -> tuple[float, float]:
    """Importance-sampled estimate of ``sum_c w_c q_c`` and its standard error.

    Classes are proposed in proportion to their weight among the relevant
    ones, so each trial carries importance weight ``W = sum_c w_c`` and the
    estimator is ``W`` times the hit fraction.
    """
    if not contributions:
        return 0.0, 0.0
    w = np.array([c[1] for c in contributions])
    q = np.array([c[2] for c in contributions])
    total = w.sum()
    idx = rng.choice(len(w), size=trials, p=w / total)
    hits = rng.random(trials) < q[idx]
    frac = hits.mean()
    err = hits.std(ddof=1) / math.sqrt(trials) if trials > 1 else math.inf
    return float(total * frac), float(total * err)


def simulate_counts(contributions, pulses: int, rng: np.random.Generator) -> int:
    """Gated coincidence count over ``pulses`` pump pulses.

    The number of pulses in each relevant class is Poisson (the pulse count is
    huge and the class weights tiny); each of them then yields a coincidence
    with its conditional probability.
    """
    total = 0
    for _, w, q in contributions:
        m = rng.poisson(pulses * w)
        total += int(rng.binomial(m, q)) if m else 0
    return total


def _point_streams(cfg: ExperimentConfig, n: int):
    root = np.random.SeedSequence(cfg.seed)
    return [[np.random.Generator(np.random.Philox(s)) for s in child.spawn(2)]
            for child in root.spawn(n)]


def _mc_point(cfg: ExperimentConfig, x: float, setting: Setting, streams) -> CurvePoint:
    contrib = class_contributions(cfg, setting)
    p_hat, p_err = monte_carlo_estimate(contrib, cfg.trials, streams[0])
    counts = simulate_counts(contrib, cfg.pulses, streams[1])
    if cfg.target_rel_error is not None and p_hat > 0 and p_err / p_hat > cfg.target_rel_error:
        warnings.warn(f"relative error {p_err / p_hat:.3g} at setting {x:.6g} exceeds target "
                      f"{cfg.target_rel_error:.3g}; raise trials", RuntimeWarning, stacklevel=3)
    return CurvePoint(x, float(counts), math.sqrt(counts), p_hat, p_err)


def _analytic_point(cfg: ExperimentConfig, x: float, setting: Setting) -> CurvePoint:
    p = analytic_event_probability(cfg, setting)
    tally = tally_accumulate({}, x, p, cfg.pulses)
    return CurvePoint(x, tally.counts, tally.sigma, p, 0.0)


def scenario_settings(cfg: ExperimentConfig) -> list[tuple[float, Setting]]:
    """The swept coordinate and full setting for every point of the scenario's curve."""
    if cfg.scenario in ("hom2", "gated_dip"):
        return [(d, Setting(d, cfg.theta1[0], cfg.theta2)) for d in cfg.delays]
    if cfg.scenario == "fringe":
        return [(t, Setting(cfg.delays[0], t, cfg.theta2)) for t in cfg.theta1]
    raise ValueError("the CHSH scenario has no single curve; use run_chsh")


def _run_points(cfg: ExperimentConfig, items) -> list[CurvePoint]:
    if cfg.engine == "analytic":
        work = [lambda x=x, s=s: _analytic_point(cfg, x, s) for x, s in items]
    else:
        streams = _point_streams(cfg, len(items))
        work = [lambda x=x, s=s, st=st: _mc_point(cfg, x, s, st)
                for (x, s), st in zip(items, streams)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            return list(pool.map(lambda f: f(), work))
    return [f() for f in work]


def monte_carlo_run(cfg: ExperimentConfig) -> list[CurvePoint]:
    """Curve from the Monte Carlo engine, whatever ``cfg.engine`` says.

    Each point holds an integer count data set and the importance-sampled
    probability with its standard error. Same seed gives identical output.
    """
    return _run_points(cfg.with_(engine="montecarlo"), scenario_settings(cfg))


def _run_curve(cfg: ExperimentConfig, scenario: str) -> list[CurvePoint]:
    if cfg.scenario != scenario:
        raise ValueError(f"config is for scenario {cfg.scenario!r}, expected {scenario!r}")
    return _run_points(cfg, scenario_settings(cfg))


def run_hom_two_photon(cfg: ExperimentConfig) -> list[CurvePoint]:
    """Same-source two-photon dip: D1-D2 coincidences versus delay, no gating."""
    return _run_curve(cfg, "hom2")


def run_gated_dip(cfg: ExperimentConfig) -> list[CurvePoint]:
    return _run_curve(cfg, "gated_dip")


def run_fringe(cfg: ExperimentConfig) -> list[CurvePoint]:
    return _run_curve(cfg, "fringe")


def run_chsh(cfg: ExperimentConfig) -> analysis.ChshResult:
    """CHSH from the 16 gated-coincidence tallies at the configured analyzer settings."""
    if cfg.scenario != "chsh":
        raise ValueError("run_chsh needs a chsh config")
    a, ap, b, bp = cfg.chsh_settings
    half = math.pi / 2
    pairs = [(x, y) for x, y in ((a, b), (a, bp), (ap, b), (ap, bp))
             for x, y in ((x, y), (x + half, y), (x, y + half), (x + half, y + half))]
    items = [(i, Setting(cfg.delays[0], x, y)) for i, (x, y) in enumerate(pairs)]
    points = _run_points(cfg, items)
    table = {pair: pt.counts for pair, pt in zip(pairs, points)}
    return analysis.chsh_from_counts(lambda x, y: table[(x, y)], cfg.chsh_settings)


# --- calibration and the reference operating point ------------------------

def dip_visibility(cfg: ExperimentConfig) -> analysis.FitResult:
    points = _run_points(cfg.with_(engine="analytic"), scenario_settings(cfg))
    return analysis.fit_points(points, "gaussian_dip", weighted=False)


def fringe_visibility(cfg: ExperimentConfig) -> analysis.FitResult:
    points = _run_points(cfg.with_(engine="analytic"), scenario_settings(cfg))
    return analysis.fit_points(points, "sine_squared", weighted=False)


def calibrate_mu_max(cfg: ExperimentConfig, target: float, tol: float = 1e-12) -> float:
    """Zero-delay overlap that makes the fitted dip visibility equal ``target``.

    Visibility grows monotonically with ``mu_max``, so plain bisection on
    [0, 1] is enough.
    """
    if cfg.scenario not in ("hom2", "gated_dip"):
        raise ValueError("calibration runs on a dip scenario")

    def vis(mu):
        return dip_visibility(cfg.with_(overlap=replace(cfg.overlap, mu_max=mu))).visibility

    lo, hi = 0.0, 1.0
    v_hi = vis(hi)
    if not 0.0 < target <= v_hi + 1e-15:
        raise ValueError(f"target {target} is outside the reachable range (0, {v_hi:.6f}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if vis(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def reference_spdc(per_detector: bool = True) -> SpdcParams:
    """Down-conversion source matching 1300 trigger singles/s and 23 heralded pairs/s.

    With ``per_detector`` the 23/s is read as the rate into each of D1 and D2
    (46/s heralded pairs in total); otherwise as the total.
    """
    pairs = 2 * PAIR_RATE_PER_DETECTOR if per_detector else PAIR_RATE_PER_DETECTOR
    return spdc_from_rates(TRIGGER_RATE, pairs, REP_RATE)


def reference_config(scenario: str, mu_max: float | None = None, **changes) -> ExperimentConfig:
    """Config for one of the four measurements at the reference operating point."""
    tau_c = coherence_time_from_filter(WAVELENGTH, FILTER_FWHM)
    if scenario == "hom2":
        tau_c = coherence_time_from_filter(WAVELENGTH, HOM_FILTER_FWHM)
        mu = MU_MAX_SAME_SOURCE if mu_max is None else mu_max
    else:
        mu = MU_MAX_INDEPENDENT if mu_max is None else mu_max
    pol = 0.0 if scenario in ("hom2", "gated_dip") else math.pi / 2
    kw = dict(
        scenario=scenario,
        spdc=reference_spdc(),
        coherent=CoherentParams(ALPHA, polarization_angle=pol),
        overlap=OverlapModel(mu, tau_c),
        delays=tuple(np.linspace(-4.0, 4.0, 41) * tau_c) if scenario in ("hom2", "gated_dip") else (0.0,),
        theta1=tuple(np.deg2rad(np.arange(-90.0, 90.1, 7.5))) if scenario == "fringe" else (0.0,),
        theta2=THETA2_FRINGE if scenario == "fringe" else 0.0,
    )
    kw.update(changes)
    return ExperimentConfig(**kw)


def ideal_config(scenario: str, **changes) -> ExperimentConfig:
    """Perfect overlap and no background (only the heralded-twin, one-photon class)."""
    cfg = reference_config(scenario, mu_max=1.0, include_background=False)
    return cfg.with_(**changes) if changes else cfg


def fringe_budget(gamma: float, alpha: float, h: float,
                  theta2: float = THETA2_FRINGE) -> dict[str, float]:
    """Signal and background of the ideal-overlap fringe at its extremes.

    Returns the per-pulse signal (twin kept, one coherent photon) and
    background (twin lost, two coherent photons) probabilities at the setting
    that maximizes the signal, and the visibility ``sqrt(B^2 + C^2) / A`` of
    the background-inclusive fringe ``A + B sin(2 theta1) + C cos(2 theta1)``.
    """
    eta_signal = 1.0 / (1.0 + h)
    p_trig = gamma / eta_signal
    spdc = SpdcParams(p_pair=p_trig, eta_trigger=1.0, eta_signal=eta_signal)
    cfg = reference_config("fringe", mu_max=1.0, spdc=spdc,
                       coherent=CoherentParams(alpha, polarization_angle=math.pi / 2),
                       theta2=theta2)

    def parts(theta1):
        sig = bg = total = 0.0
        for label, w, q in class_contributions(cfg, Setting(0.0, theta1, theta2)):
            total += w * q
            if label == "twin+trig|n=1":
                sig += w * q
            elif label == "lost+trig|n=2":
                bg += w * q
        return sig, bg, total

    c = {k: parts(th)[2] for k, th in (("0", 0.0), ("90", math.pi / 2),
                                       ("p45", math.pi / 4), ("m45", -math.pi / 4))}
    mean = 0.5 * (c["0"] + c["90"])
    sin_amp = 0.5 * (c["p45"] - c["m45"])
    cos_amp = 0.5 * (c["0"] - c["90"])
    peak = theta2 + math.pi / 2
    sig, bg, _ = parts(peak)
    return {"P_signal": sig, "P_background": bg, "v_max": math.hypot(sin_amp, cos_amp) / mean,
            "A": mean, "B": sin_amp, "C": cos_amp}
