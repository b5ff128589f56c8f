import hashlib
import json
import os
import subprocess
import sys

import pytest

from qalyroi import __version__
from qalyroi.cli import run

FAST_SUITE = ["--set", "scenarios=[\"base\", \"fairness_high\"]"]


def outputs(d):
    return {p: open(os.path.join(d, p), "rb").read() for p in sorted(os.listdir(d)) if p != "manifest.json"}


def manifest(d):
    with open(os.path.join(d, "manifest.json")) as fh:
        return json.load(fh)


def test_macro(tmp_path, capsys):
    assert run(["macro", "--alpha", "0.11", "--dsii", "1.0", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "macro.json").read_text())["delta_gdp"] == 0.11
    assert "0.11" in capsys.readouterr().out


def test_counterfactual_from_calibration_output(tmp_path):
    calib = tmp_path / "calib.json"
    calib.write_text(json.dumps({"params": {"lambda": 0.999, "gamma": 0.007, "temporal": 1.0}}))
    out = tmp_path / "out"
    assert run(["counterfactual", "--dgamma", "0.2", "--input", str(calib), "--out", str(out)]) == 0
    rep = json.loads((out / "counterfactual.json").read_text())
    assert rep["percent_change"] == pytest.approx(-20.14, abs=0.01)
    m = manifest(out)
    assert m["input_digests"]["calibration"] == hashlib.sha256(calib.read_bytes()).hexdigest()


def test_manifest_contents(tmp_path):
    assert run(["suite", *FAST_SUITE, "--out", str(tmp_path)]) == 0
    m = manifest(tmp_path)
    assert m["version"] == __version__ and m["command"] == "suite" and m["seed"] == 20240607
    files = outputs(tmp_path)
    assert set(m["outputs"]) == set(files)  # nothing unlisted
    for name, data in files.items():
        assert m["outputs"][name] == hashlib.sha256(data).hexdigest()
    assert "timestamp" not in json.dumps(m)
    summary = json.loads(files["suite_summary.json"])["summaries"]
    assert summary["fairness_high"]["terminal_sii_mean"] < summary["base"]["terminal_sii_mean"]


@pytest.mark.parametrize("argv", [
    ["suite", *FAST_SUITE],
    ["fit-synthetic", "--set", "synthetic.n=60"],
    ["robustness", "--fraction", "robustness", "--set", "robustness.n_draws=8", "--set", "synthetic.n=60"],
    ["calibrate", "--set", "synthetic_panel.n_countries=6"],
])
def test_replay_and_threads_are_byte_identical(tmp_path, argv):
    a, b, c = (str(tmp_path / x) for x in "abc")
    assert run([*argv, "--threads", "1", "--out", a]) == 0
    assert run([*argv, "--threads", "8", "--out", b]) == 0
    assert run(["--config", os.path.join(a, "manifest.json"), "--out", c]) == 0
    assert outputs(a) == outputs(b) == outputs(c)
    assert manifest(a)["resolved_config"] == manifest(c)["resolved_config"]


def test_sensitivity_requires_fraction(tmp_path):
    assert run(["sensitivity", "--out", str(tmp_path)]) == 1
    assert os.listdir(tmp_path) == []


def test_sensitivity_presets(tmp_path):
    assert run(["sensitivity", "--fraction", "simulation", "--set", "sensitivity.objective=dynamic",
                "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "sensitivity.json").read_text())
    assert rep["perturbation_fraction"] == 0.08
    c = rep["coefficients"]
    assert c["lambda"]["raw"] > 0 > c["gamma"]["raw"] and c["temporal"]["raw"] > 0


def test_field_csv(tmp_path):
    assert run(["field", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "field.csv").read_text().strip().split("\n")
    assert rows[0].startswith("lambda\\gamma,") and len(rows) == 6


def test_calibrate_from_file(tmp_path):
    panel = tmp_path / "panel.csv"
    lines = ["country,year,health_spending,life_expectancy"]
    for c, base in (("A", 100.0), ("B", 900.0)):
        for k in range(6):
            lines.append(f"{c},{2010 + k},{base * (1.1 ** k) + (k % 2) * 7},{78 + 0.3 * k}")
    lines.append("A,2020,0,80")
    panel.write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    assert run(["calibrate", "--input", str(panel), "--out", str(out)]) == 0
    rep = json.loads((out / "calibration.json").read_text())
    assert rep["n_rows"] == 13 and rep["n_dropped"] == 1
    assert set(rep["params"]) == {"lambda", "gamma", "temporal"}


@pytest.mark.parametrize("argv,code", [
    (["bogus"], 1),
    ([], 1),
    (["macro", "--alpha", "2"], 1),
    (["macro", "--set", "nokeyvalue"], 1),
    (["simulate", "--scenario", "nope"], 1),
    (["counterfactual"], 1),
    (["calibrate", "--input", "/no/such/file.csv"], 1),
    (["fit-synthetic", "--set", "inverse.max_iters=1"], 3),
])
def test_exit_codes(tmp_path, argv, code):
    out = tmp_path / "out"
    assert run([*argv, "--out", str(out)]) == code
    assert not out.exists() or os.listdir(out) == []


def test_data_error_exit(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("country,year,life_expectancy\nA,2010,80\n")
    out = tmp_path / "out"
    assert run(["calibrate", "--input", str(bad), "--out", str(out)]) == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("country,year,health_spending,life_expectancy\nA,2010,0,80\n")
    assert run(["calibrate", "--input", str(empty), "--out", str(out)]) == 2
    assert not out.exists() or os.listdir(out) == []


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "macro", "macro": {"alpha": 0.2, "dsii": 2.0}}))
    out = tmp_path / "out"
    assert run(["--config", str(cfg), "--alpha", "0.11", "--out", str(out)]) == 0
    assert json.loads((out / "macro.json").read_text())["delta_gdp"] == pytest.approx(0.22)


def test_custom_scenario_objects(tmp_path):
    argv = ["suite", "--set", 'scenarios=[{"preset": "base", "label": "b2", "n_rep": 4}, {"label": "x", "lambda": 0.9}]',
            "--out", str(tmp_path)]
    assert run(argv) == 0
    assert {"trajectories_b2.csv", "trajectories_x.csv"} <= set(os.listdir(tmp_path))


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qalyroi", "macro", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "0.11" in proc.stdout
