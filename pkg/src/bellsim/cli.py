"""Command-line front end.

    bellsim fringe --config configs/reference.json --seed 7 --out fringe.csv
    bellsim chsh --engine analytic --ideal
    bellsim calibrate --scenario gated-dip --target 0.908
    bellsim selftest

Configs are strict JSON. Angles are given in degrees at this interface and
converted to radians internally; delays and coherence times are in seconds.
Every output file carries a ``#`` header with a hash of the resolved config,
the seed, the engine, the calibration values and the resolved config itself,
so feeding that config back in reproduces the run byte for byte.

Exit codes: 0 success, 1 selftest failure, 2 config error, 3 fit did not converge.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analysis, experiments
from .detection import DetectorSpec
from .optics import OverlapModel
from .sources import CoherentParams, SpdcParams, derived_rates

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_NO_CONVERGENCE = 0, 1, 2, 3

COMMAND_SCENARIO = {"hom-dip": "hom2", "gated-dip": "gated_dip", "fringe": "fringe", "chsh": "chsh"}

# field name -> nested field names (None for a scalar)
SCHEMA = {
    "scenario": None,
    "spdc": ("p_pair", "eta_trigger", "eta_signal"),
    "coherent": ("mean_photons", "polarization_deg", "phase_deg"),
    "overlap": ("coherence_time",),
    "calibration": ("mu_max_same_source", "mu_max_independent"),
    "delays": None,
    "theta1_deg": None,
    "theta2_deg": None,
    "detectors": ("D1", "D2"),
    "pulses": None,
    "engine": None,
    "seed": None,
    "trials": None,
    "include_background": None,
    "chsh_settings_deg": None,
    "rep_rate": None,
    "threads": None,
    "target_rel_error": None,
    "output": ("path", "format"),
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; carries a field or line diagnostic."""


# --- config resolution --------------------------------------------------------

def _deg(x: float) -> float:
    return float(np.rad2deg(x))


def default_config(scenario: str) -> dict:
    """The reference operating point for ``scenario``, in interface units."""
    cfg = experiments.reference_config(scenario)
    if scenario == "fringe":
        theta1 = [float(t) for t in np.arange(-90.0, 90.1, 7.5)]
    else:
        theta1 = [_deg(t) for t in cfg.theta1]
    return {
        "scenario": scenario,
        "spdc": {"p_pair": cfg.spdc.p_pair, "eta_trigger": cfg.spdc.eta_trigger,
                 "eta_signal": cfg.spdc.eta_signal},
        "coherent": {"mean_photons": cfg.coherent.mean_photons,
                     "polarization_deg": _deg(cfg.coherent.polarization_angle),
                     "phase_deg": _deg(cfg.coherent.phase)},
        "overlap": {"coherence_time": cfg.overlap.coherence_time},
        "calibration": {"mu_max_same_source": experiments.MU_MAX_SAME_SOURCE,
                        "mu_max_independent": experiments.MU_MAX_INDEPENDENT},
        "delays": list(cfg.delays),
        "theta1_deg": theta1,
        "theta2_deg": -45.0 if scenario == "fringe" else 0.0,
        "detectors": {d.id: d.efficiency for d in cfg.detectors},
        "pulses": cfg.pulses,
        "engine": cfg.engine,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "include_background": cfg.include_background,
        "chsh_settings_deg": [0.0, 45.0, 22.5, 67.5],
        "rep_rate": cfg.rep_rate,
        "threads": cfg.threads,
        "target_rel_error": cfg.target_rel_error,
        "output": {"path": None, "format": "csv"},
    }


def load_config_file(path: str | Path) -> dict:
    """Parse a JSON config, turning syntax errors into ConfigError with a line number."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def merge_config(base: dict, overrides: dict, source: str = "config") -> dict:
    """Overlay ``overrides`` on ``base``, rejecting unknown keys."""
    out = json.loads(json.dumps(base))
    for key, value in overrides.items():
        if key not in SCHEMA:
            raise ConfigError(f"{source}: unknown field {key!r}")
        sub = SCHEMA[key]
        if sub is None:
            out[key] = value
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"{source}: field {key!r} must be an object")
        for k, v in value.items():
            if k not in sub:
                raise ConfigError(f"{source}: unknown field {key}.{k!r}")
            out[key][k] = v
    return out


def _number(d: dict, key: str, field: str, integer: bool = False):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field {field!r} must be a number, got {v!r}")
    if integer:
        if float(v) != int(v) or v < 0:
            raise ConfigError(f"field {field!r} must be a non-negative integer, got {v!r}")
        return int(v)
    if not math.isfinite(v):
        raise ConfigError(f"field {field!r} must be finite")
    return float(v)


def _numbers(d: dict, key: str) -> tuple[float, ...]:
    v = d[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"field {key!r} must be a non-empty list of numbers")
    return tuple(_number({key: x}, key, f"{key}[{i}]") for i, x in enumerate(v))


def build_experiment(resolved: dict) -> experiments.ExperimentConfig:
    """Turn a resolved interface-unit config into an ExperimentConfig."""
    scenario = resolved["scenario"]
    if scenario not in experiments.SCENARIOS:
        raise ConfigError(f"field 'scenario': unknown scenario {scenario!r}")
    cal = resolved["calibration"]
    mu_key = "mu_max_same_source" if scenario == "hom2" else "mu_max_independent"
    mu = _number(cal, mu_key, f"calibration.{mu_key}")
    sp, co = resolved["spdc"], resolved["coherent"]
    if resolved["engine"] not in experiments.ENGINES:
        raise ConfigError(f"field 'engine' must be one of {experiments.ENGINES}")
    if not isinstance(resolved["include_background"], bool):
        raise ConfigError("field 'include_background' must be true or false")
    target = resolved["target_rel_error"]
    chsh = _numbers(resolved, "chsh_settings_deg")
    if len(chsh) != 4:
        raise ConfigError("field 'chsh_settings_deg' needs exactly four angles (a, a', b, b')")
    dets = resolved["detectors"]
    try:
        return experiments.ExperimentConfig(
            scenario=scenario,
            spdc=SpdcParams(_number(sp, "p_pair", "spdc.p_pair"),
                            _number(sp, "eta_trigger", "spdc.eta_trigger"),
                            _number(sp, "eta_signal", "spdc.eta_signal")),
            coherent=CoherentParams(_number(co, "mean_photons", "coherent.mean_photons"),
                                    math.radians(_number(co, "polarization_deg", "coherent.polarization_deg")),
                                    math.radians(_number(co, "phase_deg", "coherent.phase_deg"))),
            overlap=OverlapModel(mu, _number(resolved["overlap"], "coherence_time",
                                             "overlap.coherence_time")),
            delays=_numbers(resolved, "delays"),
            theta1=tuple(np.deg2rad(_numbers(resolved, "theta1_deg"))),
            theta2=math.radians(_number(resolved, "theta2_deg", "theta2_deg")),
            detectors=tuple(DetectorSpec(k, _number(dets, k, f"detectors.{k}")) for k in ("D1", "D2")),
            pulses=_number(resolved, "pulses", "pulses", integer=True),
            engine=resolved["engine"],
            seed=_number(resolved, "seed", "seed", integer=True),
            trials=_number(resolved, "trials", "trials", integer=True),
            include_background=resolved["include_background"],
            chsh_settings=tuple(math.radians(a) for a in chsh),
            rep_rate=_number(resolved, "rep_rate", "rep_rate"),
            threads=max(1, _number(resolved, "threads", "threads", integer=True)),
            target_rel_error=None if target is None else _number(resolved, "target_rel_error",
                                                                 "target_rel_error"),
        )
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from None


def resolve(scenario: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then command-line flags."""
    resolved = default_config(scenario)
    if getattr(args, "config", None):
        data = load_config_file(args.config)
        if "scenario" in data and data["scenario"] != scenario:
            raise ConfigError(f"{args.config}: field 'scenario' is {data['scenario']!r} "
                              f"but the command runs {scenario!r}")
        resolved = merge_config(resolved, data, str(args.config))
    if getattr(args, "ideal", False):
        resolved["calibration"]["mu_max_same_source"] = 1.0
        resolved["calibration"]["mu_max_independent"] = 1.0
        resolved["include_background"] = False
    flags = {"seed": "seed", "engine": "engine", "pulses": "pulses", "threads": "threads"}
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            resolved[key] = value
    if getattr(args, "out", None):
        resolved["output"]["path"] = args.out
    if getattr(args, "format", None):
        resolved["output"]["format"] = args.format
    if resolved["output"]["format"] not in ("csv", "json"):
        raise ConfigError("field 'output.format' must be 'csv' or 'json'")
    return resolved


def canonical_json(resolved: dict) -> str:
    """The run-defining part of a config (output location excluded), compact and sorted."""
    run = {k: v for k, v in resolved.items() if k != "output"}
    return json.dumps(run, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(canonical_json(resolved).encode()).hexdigest()


# --- output -------------------------------------------------------------------

def _g(x: float) -> str:
    return "%.17g" % x


def emit_curve(points, fmt: str, path: str | Path | None, header: dict | None = None) -> str:
    """Write curve points as CSV (``setting,counts,sigma,model_fit``) or JSON.

    ``header`` entries become ``# key: value`` lines in CSV and a ``meta``
    object in JSON. The text is returned, and also written to ``path`` when one
    is given.
    """
    if not points:
        raise ValueError("no points to write")
    header = header or {}
    if fmt == "csv":
        buf = io.StringIO(newline="")
        for key, value in header.items():
            buf.write(f"# {key}: {value}\n")
        buf.write("setting,counts,sigma,model_fit\n")
        for p in points:
            buf.write(",".join(_g(v) for v in (p.setting, p.counts, p.sigma, p.model_fit)) + "\n")
        text = buf.getvalue()
    elif fmt == "json":
        rows = [{"setting": p.setting, "counts": p.counts, "sigma": p.sigma,
                 "model_fit": None if math.isnan(p.model_fit) else p.model_fit} for p in points]
        text = json.dumps({"meta": header, "points": rows}, indent=1, sort_keys=True) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def read_csv_header(path: str | Path) -> dict:
    """The ``# key: value`` header block of a CSV written by emit_curve."""
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].rstrip("\n").partition(": ")
            meta[key] = value
    return meta


def _header(command: str, resolved: dict, extra: dict | None = None) -> dict:
    cal = resolved["calibration"]
    head = {
        "bellsim": f"{__version__} {command}",
        "config_sha256": config_hash(resolved),
        "seed": resolved["seed"],
        "engine": resolved["engine"],
        "calibration": (f"mu_max_same_source={_g(cal['mu_max_same_source'])} "
                        f"mu_max_independent={_g(cal['mu_max_independent'])}"),
    }
    head.update(extra or {})
    head["config"] = canonical_json(resolved)
    return head


def _write(text_points, resolved, command, extra, stdout):
    out = resolved["output"]
    text = emit_curve(text_points, out["format"], out["path"], _header(command, resolved, extra))
    if out["path"] is None:
        stdout.write(text)


# --- commands -------------------------------------------------------------------

def _curve(command: str, args, stdout) -> int:
    scenario = COMMAND_SCENARIO[command]
    resolved = resolve(scenario, args)
    cfg = build_experiment(resolved)
    runner = {"hom2": experiments.run_hom_two_photon, "gated_dip": experiments.run_gated_dip,
              "fringe": experiments.run_fringe}[scenario]
    points = runner(cfg)
    model = "sine_squared" if scenario == "fringe" else "gaussian_dip"
    weighted = all(p.sigma > 0 for p in points)
    try:
        fit = analysis.fit_points(points, model, weighted=weighted)
    except ValueError as exc:
        fit, reason = None, str(exc)
    fitted = fit.predict([p.setting for p in points]) if fit else [math.nan] * len(points)
    rows = []
    for p, f in zip(points, fitted):
        x = _deg(p.setting) if scenario == "fringe" else p.setting
        rows.append(replace(p, setting=x, model_fit=float(f)))
    if fit:
        summary = (f"{model} V={_g(fit.visibility)} sigma_V={_g(fit.visibility_error)} "
                   f"converged={fit.converged}")
    else:
        summary = f"skipped ({reason})"
    extra = {"setting_unit": "deg" if scenario == "fringe" else "s", "fit": summary}
    _write(rows, resolved, command, extra, stdout)
    if fit is None:
        print(f"{command}: {len(points)} points written, fit {summary}", file=sys.stderr)
        return EXIT_OK
    print(f"{command}: V = {fit.visibility:.4f} +/- {fit.visibility_error:.4f} "
          f"({len(points)} points, engine {cfg.engine})", file=sys.stderr)
    if not fit.converged:
        print(f"{command}: fit did not converge after {fit.iterations} iterations", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _chsh(args, stdout) -> int:
    resolved = resolve("chsh", args)
    cfg = build_experiment(resolved)
    res = experiments.run_chsh(cfg)
    rows = []
    for i, ((a, b), quad) in enumerate(res.counts.items()):
        for j, c in enumerate(quad):
            rows.append(experiments.CurvePoint(4 * i + j, c, math.sqrt(c), math.nan))
    extra = {
        "setting_unit": "index over (a,b),(a+90,b),(a,b+90),(a+90,b+90) for each pair",
        "pairs_deg": " ".join(f"({_g(_deg(a))},{_g(_deg(b))})" for a, b in res.counts),
        "E": " ".join(f"{_g(e)}+/-{_g(s)}" for e, s in zip(res.E, res.E_sigma)),
        "S": f"{_g(res.S)} sigma_S={_g(res.sigma_S)}",
    }
    _write(rows, resolved, "chsh", extra, stdout)
    verdict = "violates" if res.violates_local_bound else "does not violate"
    print(f"chsh: S = {res.S:.10f} +/- {res.sigma_S:.4f} ({verdict} |S| <= 2)", file=sys.stderr)
    return EXIT_OK


def _snr(args, stdout) -> int:
    resolved = resolve("fringe", args)
    cfg = build_experiment(resolved)
    rates = derived_rates(cfg.spdc, cfg.coherent, cfg.rep_rate)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        budget = analysis.snr_model(rates["Gamma"], cfg.coherent.mean_photons, rates["H"])
    report = {
        "Gamma": budget.Gamma, "alpha": budget.alpha, "H": budget.H, "alpha_H": budget.alpha_H,
        "P_signal": budget.P_signal, "P_background": budget.P_background,
        "signal_to_noise": budget.signal_to_noise, "v_max_predicted": budget.v_max_predicted,
        "signal_constant": budget.signal_constant, "background_constant": budget.background_constant,
        "singles_ceiling_per_detector": rates["singles_ceiling_per_detector"],
        "trigger_singles_rate": rates["trigger_singles_rate"],
        "pair_coincidence_rate": rates["pair_coincidence_rate"],
        "formula": budget.formula,
        "warnings": [str(w.message) for w in caught],
        "config_sha256": config_hash(resolved),
    }
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if resolved["output"]["path"]:
        Path(resolved["output"]["path"]).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    print(f"snr: H = {budget.H:.2f}, alpha*H = {budget.alpha_H:.4f}, "
          f"v_max_predicted = {budget.v_max_predicted:.4f}", file=sys.stderr)
    return EXIT_OK


def _calibrate(args, stdout) -> int:
    scenario = COMMAND_SCENARIO[args.scenario]
    resolved = resolve(scenario, args)
    cfg = build_experiment(resolved)
    target = args.target if args.target is not None else (0.994 if scenario == "hom2" else 0.908)
    try:
        mu = experiments.calibrate_mu_max(cfg, target)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    key = "mu_max_same_source" if scenario == "hom2" else "mu_max_independent"
    text = json.dumps({"calibration": {key: mu}, "target_visibility": target,
                       "scenario": scenario}, indent=1, sort_keys=True) + "\n"
    if resolved["output"]["path"]:
        Path(resolved["output"]["path"]).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    print(f"calibrate: {key} = {mu:.15f} gives dip visibility {target}", file=sys.stderr)
    return EXIT_OK


def selftest_checks() -> list[tuple[str, bool, str]]:
    """Fast invariant checks on the installed package."""
    checks = []

    def check(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, reported rather than raised
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        checks.append((name, bool(ok), detail))

    def hom_zero():
        p = experiments.analytic_event_probability(experiments.reference_config("hom2", mu_max=1.0),
                                                   experiments.Setting(0.0))
        return abs(p) < 1e-12, f"P(tau=0) = {p:.3g}"

    def fringe_mu2():
        worst = 0.0
        for mu in (0.0, 0.5, 0.9, 1.0):
            cfg = experiments.ideal_config("fringe")
            cfg = cfg.with_(overlap=OverlapModel(mu, cfg.overlap.coherence_time))
            worst = max(worst, abs(experiments.fringe_visibility(cfg).visibility - mu * mu))
        return worst < 1e-9, f"max |V - mu^2| = {worst:.3g}"

    def chsh_ideal():
        s = experiments.run_chsh(experiments.ideal_config("chsh")).S
        return abs(s + 2 * math.sqrt(2)) < 1e-9, f"S = {s:.12f}"

    def floor_flat():
        cfg = experiments.reference_config("gated_dip")
        vals = [math.fsum(w * q for lab, w, q in experiments.class_contributions(
            cfg, experiments.Setting(d)) if lab.startswith("lost")) for d in (0.0, 1e-12, math.inf)]
        spread = max(vals) - min(vals)
        return spread <= 1e-12 * max(vals), f"relative spread {spread / max(vals):.3g}"

    def symmetry():
        base = experiments.reference_config("fringe")
        a = base.with_(detectors=(DetectorSpec("D1", 0.6), DetectorSpec("D2", 0.9)))
        b = base.with_(detectors=(DetectorSpec("D1", 0.9), DetectorSpec("D2", 0.6)))
        p = experiments.analytic_event_probability(a, experiments.Setting(0.0, 0.3, -0.8))
        q = experiments.analytic_event_probability(b, experiments.Setting(0.0, -0.8, 0.3))
        return abs(p - q) <= 1e-12 * abs(p), f"{p:.6g} vs {q:.6g}"

    def mc_deterministic():
        cfg = experiments.reference_config("fringe", trials=2000, seed=1,
                                       theta1=(0.0, 0.5), engine="montecarlo")
        return experiments.monte_carlo_run(cfg) == experiments.monte_carlo_run(cfg), "two runs"

    def threshold():
        ok = (not analysis.bell_violated(1 / math.sqrt(2))
              and analysis.bell_violated(math.nextafter(1 / math.sqrt(2), 1)))
        return ok, "strict at 1/sqrt(2)"

    check("ideal HOM dip reaches zero", hom_zero)
    check("background-free fringe visibility is mu^2", fringe_mu2)
    check("ideal CHSH gives -2 sqrt 2", chsh_ideal)
    check("gated-dip floor independent of delay", floor_flat)
    check("D1<->D2 with theta1<->theta2 symmetry", symmetry)
    check("Monte Carlo determinism", mc_deterministic)
    check("Bell visibility threshold", threshold)
    return checks


def _selftest(args, stdout) -> int:
    failed = 0
    for name, ok, detail in selftest_checks():
        failed += not ok
        stdout.write(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})\n")
    return EXIT_OK if failed == 0 else EXIT_SELFTEST


# --- argument parsing ----------------------------------------------------------------

def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(float(text))
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bellsim", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"bellsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=_u64)
        p.add_argument("--engine", choices=experiments.ENGINES)
        p.add_argument("--pulses", type=_positive, help="pump pulses per setting")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--threads", type=_positive)

    for name, text in (("hom-dip", "same-source two-photon dip versus delay"),
                       ("gated-dip", "trigger-gated three-photon dip versus delay"),
                       ("fringe", "gated coincidences versus analyzer angle theta1"),
                       ("chsh", "CHSH parameter S from 16 gated-coincidence tallies")):
        p = sub.add_parser(name, help=text)
        run_flags(p)
        if name in ("chsh", "fringe"):
            p.add_argument("--ideal", action="store_true",
                           help="perfect overlap and no background")
    run_flags(sub.add_parser("snr", help="signal-to-noise budget at the operating point"))
    p = sub.add_parser("calibrate", help="solve for mu_max from a target dip visibility")
    run_flags(p)
    p.add_argument("--scenario", choices=("hom-dip", "gated-dip"), default="gated-dip")
    p.add_argument("--target", type=float, help="dip visibility (default 0.994 or 0.908)")
    sub.add_parser("selftest", help="run the invariant checks")
    return parser


def main(argv: list[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command in ("hom-dip", "gated-dip", "fringe"):
            return _curve(args.command, args, stdout)
        if args.command == "chsh":
            return _chsh(args, stdout)
        if args.command == "snr":
            return _snr(args, stdout)
        if args.command == "calibrate":
            return _calibrate(args, stdout)
        return _selftest(args, stdout)
    except ConfigError as exc:
        print(f"bellsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"bellsim: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
