import json

import pandas as pd
import pytest

from priorci.cli import EXIT_INPUT_ERROR, EXIT_OK, main

from .conftest import CONFIG_DIR, RHO

QUICK = {
    "problem": {"geometry": {"v11": 2.0, "v12": -0.5, "v22": 0.25}, "dof": "inf"},
    "solve": {"label": "quick", "lambda": 0.2, "d": 3, "knot_step": 1},
}


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    folder = tmp_path_factory.mktemp("cli")
    config = folder / "quick.json"
    config.write_text(json.dumps(QUICK))
    solution = folder / "quick.solution.json"
    code = main(["-q", "solve", str(config), "-o", str(solution)])
    return code, config, solution


def _stderr_error(capsys) -> dict:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


def test_solve_writes_solution(solved):
    code, _, solution = solved
    assert code == EXIT_OK
    doc = json.loads(solution.read_text())
    assert doc["bs"]["knots"] == [0.0, 1.0, 2.0, 3.0]
    assert doc["rho"] == pytest.approx(RHO)
    assert doc["report"]["expected_gain"] > 0
    assert len(doc["provenance"]["config_hash"]) == 64


def test_curves_to_csv(solved, tmp_path):
    _, _, solution = solved
    out = tmp_path / "curve.csv"
    assert main(["-q", "curves", str(solution), "--gamma-max", "5", "--step", "0.5", "-o", str(out)]) == EXIT_OK
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["gamma", "coverage", "e_squared"]
    assert len(frame) == 11
    assert frame["coverage"].min() >= 0.949


def test_interval_on_real_data(solved, capsys):
    _, _, solution = solved
    code = main(["-q", "interval", str(CONFIG_DIR / "real_data.json"), str(solution), str(CONFIG_DIR / "real_data.csv")])
    assert code == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["standard"]["lower"] == pytest.approx(-1.01745, abs=1e-4)
    assert result["standard"]["upper"] == pytest.approx(3.41745, abs=1e-4)
    assert result["new"]["upper"] - result["new"]["lower"] < result["standard"]["upper"] - result["standard"]["lower"]
    assert result["dof"] == "inf"


def test_interval_rejects_other_correlation(solved, tmp_path, capsys):
    _, _, solution = solved
    config = tmp_path / "other.json"
    config.write_text(json.dumps({"problem": {"design": {"replicates": 1}, "a": [0, 1, 0, 0], "c": [0, 0, 0, 1], "sigma_hat": 0.8, "dof": "inf"}}))
    code = main(["-q", "interval", str(config), str(solution), str(CONFIG_DIR / "real_data.csv")])
    assert code == EXIT_INPUT_ERROR
    assert _stderr_error(capsys)["error"] == "InvalidInputError"


def test_mc_check(solved, tmp_path):
    _, _, solution = solved
    out = tmp_path / "mc.json"
    code = main(["-q", "mc-check", str(solution), "--gamma", "0", "2", "--samples", "50000", "-o", str(out)])
    assert code == EXIT_OK
    report = json.loads(out.read_text())
    assert [row["gamma"] for row in report["rows"]] == [0.0, 2.0]
    assert report["samples"] == 50000


def test_naive_defaults_to_test_at_level(capsys):
    code = main(["-q", "naive", "--rho", str(RHO), "--dof", "76", "--gamma-max", "4", "--step", "0.5"])
    assert code == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["q"] == pytest.approx(1.991673, abs=1e-6)
    assert result["min_coverage"] <= result["grid_min_coverage"]
    assert result["min_coverage"] < 0.95


def test_naive_needs_finite_dof(capsys):
    assert main(["-q", "naive", "--rho", "0.5", "--dof", "inf"]) == EXIT_INPUT_ERROR
    assert _stderr_error(capsys)["error"] == "InvalidInputError"


def test_sweep_writes_summary(tmp_path, capsys):
    config = tmp_path / "quick.json"
    config.write_text(json.dumps(QUICK))
    out = tmp_path / "sweep.csv"
    code = main(["-q", "sweep", str(config), "--vary", "lambda", "--values", "0.2", "1", "-o", str(out)])
    assert code in (0, 1)
    frame = pd.read_csv(out)
    assert list(frame["label"]) == ["lambda=0.2", "lambda=1"]
    assert "gain/loss ratio" in capsys.readouterr().out


def test_missing_config(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "nope.json")]) == EXIT_INPUT_ERROR
    assert _stderr_error(capsys)["error"] == "FileNotFoundError"


def test_invalid_override(tmp_path, capsys):
    config = tmp_path / "quick.json"
    config.write_text(json.dumps(QUICK))
    assert main(["-q", "solve", str(config), "--lambda", "-1"]) == EXIT_INPUT_ERROR
    assert _stderr_error(capsys)["error"] == "InvalidInputError"


def test_malformed_config(tmp_path, capsys):
    config = tmp_path / "bad.json"
    config.write_text('{"problem": {"design": {}}, "solve": {"lamda": 0.2}}')
    assert main(["-q", "solve", str(config)]) == EXIT_INPUT_ERROR
    assert "lamda" in _stderr_error(capsys)["message"]


def test_mc_check_rejects_corrupted_solution(solved, tmp_path, capsys):
    _, _, solution = solved
    doc = json.loads(solution.read_text())
    doc["bs"]["s_values"] = [-v for v in doc["bs"]["s_values"]]
    corrupted = tmp_path / "corrupted.json"
    corrupted.write_text(json.dumps(doc))
    out = tmp_path / "mc.json"
    assert main(["-q", "mc-check", str(corrupted), "--gamma", "0", "-o", str(out)]) == EXIT_INPUT_ERROR
    assert _stderr_error(capsys)["error"] == "InvalidInputError"
    assert not out.exists()


def test_curves_use_the_stored_quadrature_settings(solved, tmp_path, capsys):
    _, _, solution = solved
    doc = json.loads(solution.read_text())
    assert doc["eval"]["x_nodes"] == 8
    doc["eval"]["x_nodes"] = 0
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(doc))
    assert main(["-q", "curves", str(broken), "--gamma-max", "2", "--step", "1"]) == EXIT_INPUT_ERROR
    assert _stderr_error(capsys)["error"] == "InvalidInputError"
