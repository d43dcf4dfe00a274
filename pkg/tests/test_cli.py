import io
import json
import math
from pathlib import Path

import pytest

from bellsim import analysis, cli
from bellsim.experiments import CurvePoint

REFERENCE = str(Path(__file__).resolve().parents[1] / "configs" / "reference.json")


def run(argv):
    out = io.StringIO()
    code = cli.main(argv, stdout=out)
    return code, out.getvalue()


def data_rows(text):
    lines = [l for l in text.split("\n") if l and not l.startswith("#")]
    assert lines[0] == "setting,counts,sigma,model_fit"
    return [list(map(float, l.split(","))) for l in lines[1:]]


def test_emit_three_points(tmp_path):
    pts = [CurvePoint(float(i), 10.0 * i, math.sqrt(10.0 * i), 0.0, 0.0, 1.0 / 3) for i in range(3)]
    path = tmp_path / "c.csv"
    text = cli.emit_curve(pts, "csv", path, {"seed": 1})
    assert path.read_bytes() == text.encode()
    assert text.startswith("# seed: 1\n")
    assert "\r" not in text
    rows = data_rows(text)
    assert len(rows) == 3
    assert rows[2][3] == 1.0 / 3
    assert "0.33333333333333331" in text


def test_emit_json_mirrors_csv(tmp_path):
    pts = [CurvePoint(0.5, 3.0, math.sqrt(3.0), 0.0)]
    doc = json.loads(cli.emit_curve(pts, "json", None, {"seed": 2}))
    assert doc["meta"] == {"seed": 2}
    assert doc["points"] == [{"setting": 0.5, "counts": 3.0, "sigma": math.sqrt(3.0), "model_fit": None}]


def test_emit_rejects_empty_and_bad_path(tmp_path):
    with pytest.raises(ValueError):
        cli.emit_curve([], "csv", None)
    pts = [CurvePoint(0.0, 1.0, 1.0, 0.0)]
    with pytest.raises(OSError):
        cli.emit_curve(pts, "csv", tmp_path / "missing" / "x.csv")


def test_fringe_summary_and_csv(tmp_path, capsys):
    out = tmp_path / "f.csv"
    code, _ = run(["fringe", "--config", REFERENCE, "--seed", "7", "--out", str(out)])
    assert code == 0
    assert "fringe: V = 0.909" in capsys.readouterr().err
    rows = data_rows(out.read_text())
    assert [r[0] for r in rows][:3] == [-90.0, -82.5, -75.0]
    meta = cli.read_csv_header(out)
    assert meta["seed"] == "7"
    assert meta["engine"] == "analytic"
    assert meta["setting_unit"] == "deg"


def test_chsh_ideal(capsys):
    code, text = run(["chsh", "--engine", "analytic", "--ideal"])
    assert code == 0
    assert "S = -2.8284271247" in capsys.readouterr().err
    meta = {}
    for line in text.split("\n"):
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            meta[k] = v
    assert float(meta["S"].split()[0]) == pytest.approx(-2 * math.sqrt(2), abs=1e-9)
    assert len(data_rows(text)) == 16


def test_selftest_passes():
    code, text = run(["selftest"])
    assert code == 0
    assert "FAIL" not in text


def test_monte_carlo_rerun_is_byte_identical(tmp_path):
    cfg = tmp_path / "mc.json"
    cfg.write_text(json.dumps({"theta1_deg": [-45.0, 0.0, 45.0], "trials": 5000}))
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert run(["fringe", "--config", str(cfg), "--engine", "montecarlo", "--seed", "3",
                    "--pulses", "1e10", "--out", str(p)])[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert "# fit: skipped" in paths[0].read_text()
    run(["fringe", "--config", str(cfg), "--engine", "montecarlo", "--seed", "4",
         "--pulses", "1e10", "--out", str(paths[1])])
    assert paths[0].read_bytes() != paths[1].read_bytes()


def test_header_config_round_trips(tmp_path):
    first = tmp_path / "first.csv"
    assert run(["gated-dip", "--engine", "montecarlo", "--seed", "9", "--pulses", "2e10",
                "--out", str(first)])[0] == 0
    meta = cli.read_csv_header(first)
    cfg = tmp_path / "back.json"
    cfg.write_text(meta["config"])
    second = tmp_path / "second.csv"
    assert run(["gated-dip", "--config", str(cfg), "--out", str(second)])[0] == 0
    assert first.read_bytes() == second.read_bytes()


def test_degrees_at_the_interface(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"theta1_deg": [45.0], "theta2_deg": -45.0}))
    resolved = cli.resolve("fringe", cli.build_parser().parse_args(["fringe", "--config", str(cfg)]))
    exp = cli.build_experiment(resolved)
    assert exp.theta1 == (math.pi / 4,)
    assert exp.theta2 == -math.pi / 4


@pytest.mark.parametrize("content, needle", [
    ('{"spdc": {"p_pair": 1e-4,}}', ":1:"),
    ('{\n  "pulses": 10,\n  "bogus": 1\n}', "'bogus'"),
    ('{"spdc": {"eta": 0.1}}', "spdc.'eta'"),
    ('{"detectors": {"D1": 1.5}}', "efficiency"),
    ('{"pulses": -3}', "'pulses'"),
    ('{"theta1_deg": []}', "'theta1_deg'"),
    ('{"scenario": "chsh"}', "'scenario'"),
    ('[1, 2]', "object"),
])
def test_config_errors_exit_2(tmp_path, capsys, content, needle):
    cfg = tmp_path / "bad.json"
    cfg.write_text(content)
    code, _ = run(["fringe", "--config", str(cfg)])
    assert code == 2
    assert needle in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert run(["fringe", "--config", str(tmp_path / "nope.json")])[0] == 2


def test_bad_flags_exit_2():
    assert run(["fringe", "--engine", "exact"])[0] == 2
    assert run(["fringe", "--seed", "-1"])[0] == 2
    assert run([])[0] == 2


def test_non_convergence_exits_3(monkeypatch, capsys):
    real = analysis.fit_points

    def stalled(*a, **k):
        fit = real(*a, **k)
        return analysis.FitResult(fit.model, fit.params, fit.errors, fit.rss, False, 200, 1.0)

    monkeypatch.setattr(analysis, "fit_points", stalled)
    code, _ = run(["gated-dip"])
    assert code == 3
    assert "did not converge" in capsys.readouterr().err


def test_calibrate(tmp_path):
    out = tmp_path / "cal.json"
    assert run(["calibrate", "--scenario", "hom-dip", "--out", str(out)])[0] == 0
    doc = json.loads(out.read_text())
    assert doc["calibration"]["mu_max_same_source"] == pytest.approx(math.sqrt(0.994), abs=1e-9)
    assert run(["calibrate", "--target", "1.5"])[0] == 2


def test_snr_report():
    code, text = run(["snr"])
    assert code == 0
    doc = json.loads(text)
    assert 0.90 <= doc["v_max_predicted"] <= 0.97
    assert doc["singles_ceiling_per_detector"] == pytest.approx(1.394e6, rel=1e-3)
    assert doc["warnings"]
