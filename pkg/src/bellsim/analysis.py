"""Curve fitting, visibilities, CHSH statistics and the signal-to-noise budget.

Both curve models are fitted by a small damped Gauss-Newton (Levenberg-
Marquardt) solver with analytic Jacobians. Initialization and damping
schedule are fixed, so a given data set always produces a bit-identical
result.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

BELL_VISIBILITY_THRESHOLD = 1.0 / math.sqrt(2.0)
LOCAL_BOUND = 2.0

_XTOL = 1e-10
_GTOL = 1e-8
_MAX_ITER = 500


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict[str, float]
    errors: dict[str, float]
    rss: float
    converged: bool
    iterations: int
    gradient_norm: float

    @property
    def visibility(self) -> float:
        return self.params["visibility"]

    @property
    def visibility_error(self) -> float:
        return self.errors["visibility"]

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.model == "gaussian_dip":
            return gaussian_dip(x, p["baseline"], p["visibility"], p["center"], p["width"])
        return sine_squared(x, p["baseline"], p["visibility"], p["phase"])


def gaussian_dip(x, baseline, visibility, center, width):
    return baseline * (1.0 - visibility * np.exp(-((x - center) / width) ** 2))


def sine_squared(theta, baseline, visibility, phase):
    return baseline * (1.0 + visibility * np.sin(2.0 * (theta - phase)))


def _levenberg_marquardt(resid: Callable, jac: Callable, p0: np.ndarray):
    p = np.array(p0, dtype=float)
    r = resid(p)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, _MAX_ITER + 1):
        J = jac(p)
        A = J.T @ J
        g = J.T @ r
        gscale = np.linalg.norm(J) * math.sqrt(cost) + 1e-300
        if np.linalg.norm(g) <= _GTOL * gscale or cost == 0.0:
            converged = True
            break
        accepted = False
        while lam <= 1e12:
            damped = A + lam * np.diag(np.maximum(np.diag(A), 1e-300))
            try:
                step = np.linalg.solve(damped, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = p + step
            r_new = resid(p_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no downhill step left: accept only if we're at a stationary point
            converged = np.linalg.norm(g) <= 1e-6 * gscale
            break
        p, r, cost = p_new, r_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if np.linalg.norm(step) <= _XTOL * (np.linalg.norm(p) + _XTOL):
            converged = True
            break
    J = jac(p)
    gnorm = float(np.linalg.norm(J.T @ r))
    return p, r, J, converged, it, gnorm


def _standard_errors(J: np.ndarray, r: np.ndarray, absolute_sigma: bool) -> np.ndarray:
    cov = np.linalg.pinv(J.T @ J)
    if not absolute_sigma:
        dof = max(1, J.shape[0] - J.shape[1])
        cov = cov * float(r @ r) / dof
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _prepare(x, y, sigma):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if sigma is None:
        w = np.ones_like(y)
    else:
        s = np.asarray(sigma, dtype=float)
        # empty bins still carry a count's worth of uncertainty
        w = 1.0 / np.where(s > 0, s, 1.0)
    return x, y, w


def fit_gaussian_dip(x, y, sigma=None) -> FitResult:
    """Fit ``B * (1 - V * exp(-((x - x0) / w)**2))``.

    ``x`` is rescaled internally to unit span so delays in seconds are fine.
    ``sigma`` (if given) is treated as absolute; otherwise errors are scaled by
    the residual variance.
    """
    x, y, w = _prepare(x, y, sigma)
    if len(x) < 5:
        raise ValueError("need at least 5 points to fit a dip")
    shift = 0.5 * (x.max() + x.min())
    scale = 0.5 * (x.max() - x.min()) or 1.0
    u = (x - shift) / scale

    order = np.argsort(np.abs(u - u[np.argmin(y)]))
    shoulder = y[order[-max(2, len(u) // 5):]]
    b0 = float(np.mean(shoulder))
    v0 = float(1.0 - y.min() / b0) if b0 else 0.0
    c0 = float(u[np.argmin(y)])
    half = y < b0 * (1.0 - 0.5 * v0)
    w0 = float(np.ptp(u[half])) / 1.665 if half.sum() >= 2 else 0.2

    def resid(p):
        return (gaussian_dip(u, *p) - y) * w

    def jac(p):
        b, v, c, wd = p
        g = np.exp(-((u - c) / wd) ** 2)
        return np.column_stack([
            1.0 - v * g,
            -b * g,
            -b * v * g * 2.0 * (u - c) / wd ** 2,
            -b * v * g * 2.0 * (u - c) ** 2 / wd ** 3,
        ]) * w[:, None]

    p, r, J, ok, it, gnorm = _levenberg_marquardt(resid, jac, [b0, v0, c0, max(w0, 1e-3)])
    err = _standard_errors(J, r, sigma is not None)
    b, v, c, wd = p
    params = {"baseline": b, "visibility": v, "center": shift + scale * c, "width": scale * abs(wd)}
    errors = {"baseline": err[0], "visibility": err[1], "center": scale * err[2],
              "width": scale * err[3]}
    return FitResult("gaussian_dip", params, errors, float(r @ r), ok, it, gnorm)


def fit_sine_squared(theta, y, sigma=None) -> FitResult:
    """Fit ``B * (1 + V * sin(2 (theta - theta0)))`` with theta in radians.

    This is a sine-squared fringe, ``sin^2(theta - theta0 + pi/4)``, written so
    that ``V`` is the visibility directly. The sign of ``V`` is normalized to
    be non-negative.
    """
    theta, y, w = _prepare(theta, y, sigma)
    if len(theta) < 5:
        raise ValueError("need at least 5 points to fit a fringe")
    if np.ptp(theta) < math.pi / 2 - 1e-12:
        raise ValueError("fringe data must cover at least half a period")

    b0 = float(np.mean(y))
    hi, lo = float(y.max()), float(y.min())
    v0 = (hi - lo) / (hi + lo) if hi + lo > 0 else 0.0
    ph0 = float(theta[np.argmax(y)]) - math.pi / 4

    def resid(p):
        return (sine_squared(theta, *p) - y) * w

    def jac(p):
        b, v, ph = p
        s = np.sin(2.0 * (theta - ph))
        c = np.cos(2.0 * (theta - ph))
        return np.column_stack([1.0 + v * s, b * s, -2.0 * b * v * c]) * w[:, None]

    p, r, J, ok, it, gnorm = _levenberg_marquardt(resid, jac, [b0, max(v0, 1e-6), ph0])
    err = _standard_errors(J, r, sigma is not None)
    b, v, ph = p
    if v < 0:
        v, ph = -v, ph + math.pi / 2
    ph = (ph + math.pi / 2) % math.pi - math.pi / 2
    params = {"baseline": b, "visibility": v, "phase": ph}
    errors = {"baseline": err[0], "visibility": err[1], "phase": err[2]}
    return FitResult("sine_squared", params, errors, float(r @ r), ok, it, gnorm)


def fit_points(points: Sequence, model: str, weighted: bool = True) -> FitResult:
    """Fit a list of curve points (objects with ``setting``, ``counts``, ``sigma``)."""
    x = [pt.setting for pt in points]
    y = [pt.counts for pt in points]
    sigma = [pt.sigma for pt in points] if weighted else None
    if model == "gaussian_dip":
        return fit_gaussian_dip(x, y, sigma)
    if model == "sine_squared":
        return fit_sine_squared(x, y, sigma)
    raise ValueError(f"unknown model {model!r}")


def visibility(values) -> float:
    """(max - min) / (max + min)."""
    values = np.asarray(values, dtype=float)
    hi, lo = values.max(), values.min()
    return float((hi - lo) / (hi + lo))


# --- CHSH -----------------------------------------------------------------

@dataclass(frozen=True)
class ChshResult:
    E: tuple[float, float, float, float]
    E_sigma: tuple[float, float, float, float]
    S: float
    sigma_S: float
    settings: tuple[float, float, float, float] | None = None
    counts: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def violates_local_bound(self) -> bool:
        return abs(self.S) > LOCAL_BOUND


def compute_E(c_ab: float, c_apb: float, c_abp: float, c_apbp: float) -> tuple[float, float]:
    """Correlation from counts at (a,b), (a_perp,b), (a,b_perp), (a_perp,b_perp).

    Errors are first-order propagation of Poisson ``sqrt(N)`` uncertainties.
    """
    counts = np.array([c_ab, c_apb, c_abp, c_apbp], dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ZeroDivisionError("no counts at this setting pair")
    same = c_ab + c_apbp
    e = (same - (c_apb + c_abp)) / total
    # dE/dC is (1 - E)/N for same-parity counts and -(1 + E)/N otherwise
    var = ((1 - e) ** 2 * same + (1 + e) ** 2 * (c_apb + c_abp)) / total ** 2
    return float(e), float(math.sqrt(var))


def compute_S(E_values: Sequence[tuple[float, float]]) -> ChshResult:
    """S = E(a,b) - E(a,b') + E(a',b) + E(a',b') from ``[(E, sigma), ...]`` in that order."""
    if len(E_values) != 4:
        raise ValueError("need exactly four correlation values")
    es = tuple(float(e) for e, _ in E_values)
    sig = tuple(float(s) for _, s in E_values)
    s_val = es[0] - es[1] + es[2] + es[3]
    return ChshResult(es, sig, s_val, math.sqrt(sum(x * x for x in sig)))


def bell_violated(visibility_value: float) -> bool:
    if not 0.0 <= visibility_value <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    return visibility_value > BELL_VISIBILITY_THRESHOLD


def singlet_counts(a: float, b: float, visibility_value: float, total: float = 1.0) -> float:
    """Expected coincidences for a singlet fringe of the given visibility at analyzer angles a, b."""
    return 0.25 * total * (1.0 - visibility_value * math.cos(2.0 * (a - b)))


DEFAULT_CHSH_SETTINGS = (0.0, math.pi / 4, math.pi / 8, 3 * math.pi / 8)


def chsh_from_counts(count_fn: Callable[[float, float], float],
                     settings: Sequence[float] = DEFAULT_CHSH_SETTINGS) -> ChshResult:
    """CHSH analysis from a counts function evaluated at the 16 required angle pairs."""
    a, ap, b, bp = settings
    half = math.pi / 2
    evals = []
    counts = {}
    for x, y in ((a, b), (a, bp), (ap, b), (ap, bp)):
        quad = (count_fn(x, y), count_fn(x + half, y), count_fn(x, y + half),
                count_fn(x + half, y + half))
        counts[(x, y)] = quad
        evals.append(compute_E(*quad))
    res = compute_S(evals)
    return ChshResult(res.E, res.E_sigma, res.S, res.sigma_S, tuple(settings), counts)


# --- signal-to-noise budget -----------------------------------------------

@dataclass(frozen=True)
class SnrBudget:
    Gamma: float
    alpha: float
    H: float
    P_signal: float
    P_background: float
    v_max_predicted: float
    signal_constant: float
    background_constant: float
    formula: str

    @property
    def alpha_H(self) -> float:
        return self.alpha * self.H

    @property
    def signal_to_noise(self) -> float:
        return self.P_signal / self.P_background if self.P_background else math.inf


SNR_FORMULA = ("fringe C(theta1) = A + B sin(2 theta1) + C cos(2 theta1) from the exact class sum "
               "with mu = 1; v_max = sqrt(B^2 + C^2) / A")


def snr_model(Gamma: float, alpha: float, H: float, theta2: float = -math.pi / 4) -> SnrBudget:
    """Signal and dominant background per pulse at the fringe maximum, and the
    best visibility they allow.

    The constants come from the exact evaluator with perfect mode overlap: the
    signal class (twin kept, one coherent photon) and the background class
    (twin lost, two coherent photons) are evaluated at the fringe extremes.
    ``P_signal / (Gamma * alpha)`` and ``P_background / (H * Gamma * alpha**2)``
    are reported as ``signal_constant`` and ``background_constant``.
    """
    if Gamma <= 0 or alpha <= 0 or H <= 0:
        raise ValueError("Gamma, alpha and H must be positive")
    if alpha * H > 0.1:
        warnings.warn(f"alpha*H = {alpha * H:.3g} is not small; background is significant",
                      RuntimeWarning, stacklevel=2)
    from .experiments import fringe_budget

    b = fringe_budget(Gamma, alpha, H, theta2)
    return SnrBudget(
        Gamma=Gamma, alpha=alpha, H=H,
        P_signal=b["P_signal"], P_background=b["P_background"],
        v_max_predicted=b["v_max"],
        signal_constant=b["P_signal"] / (Gamma * alpha),
        background_constant=b["P_background"] / (H * Gamma * alpha ** 2),
        formula=SNR_FORMULA,
    )
