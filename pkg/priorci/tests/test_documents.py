import json

import numpy as np
import pytest

from priorci.bsfun import build_spline_bs
from priorci.documents import (
    RunConfigDocument,
    SolutionDocument,
    build_geometry,
    dump_json,
    load_config,
    load_solution,
    parse_config,
)
from priorci.dist_core import INFINITE, DegreesOfFreedom
from priorci.errors import InvalidInputError
from priorci.optimize import SolveConfig, solve

from .conftest import CONFIG_DIR, RHO


def _config(**problem):
    return {"problem": problem, "solve": {"lambda": 0.2, "d": 3, "knot_step": 1, "max_iterations": 30}}


def test_factorial20_config():
    doc = load_config(CONFIG_DIR / "factorial20.json")
    assert doc.solve.lam == 0.2
    assert doc.solve.knot_list() == [0, 1, 2, 3, 4, 5, 6]
    geom = build_geometry(doc.problem)
    assert geom.rho == pytest.approx(RHO, abs=1e-12)
    assert geom.dof == DegreesOfFreedom(76)
    config = doc.solve_config(geom)
    assert config.knots == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    assert config.dof == DegreesOfFreedom(76)


def test_relative_data_path_is_resolved():
    doc = load_config(CONFIG_DIR / "real_data.json")
    assert doc.problem.data_csv == str(CONFIG_DIR.resolve() / "real_data.csv")
    geom = build_geometry(doc.problem)
    assert geom.theta_hat == pytest.approx(1.2)
    assert geom.tau_hat == pytest.approx(0.325)
    assert geom.sigma_hat == 0.8
    assert geom.dof.is_infinite


def test_direct_geometry():
    doc = parse_config(json.dumps(_config(geometry={"v11": 0.1, "v12": -0.025, "v22": 0.0125}, dof=76)))
    geom = build_geometry(doc.problem)
    assert geom.rho == pytest.approx(RHO)
    assert not geom.has_estimates


def test_lambda_alias_round_trips():
    doc = parse_config(json.dumps(_config(design={"replicates": 20})))
    dumped = json.loads(doc.canonical_json())
    assert dumped["solve"]["lambda"] == 0.2
    assert parse_config(doc.canonical_json()) == doc


def test_config_hash_is_stable():
    first = parse_config(json.dumps(_config(design={"replicates": 20})))
    second = parse_config(json.dumps(_config(design={"replicates": 20}), indent=4))
    assert first.config_hash() == second.config_hash()
    third = parse_config(json.dumps(_config(design={"replicates": 21})))
    assert third.config_hash() != first.config_hash()


@pytest.mark.parametrize(
    "problem",
    [
        {},
        {"design": {"replicates": 2}, "unknown": 1},
        {"design": {"replicates": 0}},
        {"design": {"replicates": 2}, "design_csv": "x.csv"},
        {"geometry": {"v11": 1, "v12": 0, "v22": 1}},
        {"geometry": {"v11": 1, "v12": 0, "v22": 1}, "dof": 5, "design": {"replicates": 2}},
        {"design": {"replicates": 2}, "sigma_hat": 1.0},
        {"design": {"replicates": 2}, "dof": 0},
        {"design": {"replicates": 2}, "alpha": 1.5},
        {"design_csv": "x.csv"},
    ],
)
def test_invalid_problems(problem):
    with pytest.raises(InvalidInputError):
        parse_config(json.dumps(_config(**problem)))


def test_knots_and_step_are_exclusive():
    text = json.dumps({"problem": {"design": {}}, "solve": {"knots": [0, 3, 6], "knot_step": 1}})
    with pytest.raises(InvalidInputError):
        parse_config(text)


def test_not_json():
    with pytest.raises(InvalidInputError):
        parse_config("{not json")


def test_missing_config(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.json")


def test_design_and_csv_columns_conflict(tmp_path):
    (tmp_path / "data.csv").write_text("y,x\n" + "".join(f"{i},{i}\n" for i in range(8)))
    (tmp_path / "run.json").write_text(json.dumps(_config(design={"replicates": 2}, data_csv="data.csv")))
    doc = load_config(tmp_path / "run.json")
    with pytest.raises(InvalidInputError):
        build_geometry(doc.problem)


def test_data_csv_with_design_columns(tmp_path):
    rows = [(1, x1, x2, x1 * x2) for x1, x2 in [(-1, -1), (1, -1), (-1, 1), (1, 1)]] * 2
    y = np.arange(8.0)
    body = "".join(f"{yi},{','.join(str(v) for v in row)}\n" for yi, row in zip(y, rows))
    (tmp_path / "data.csv").write_text("y,one,x1,x2,x12\n" + body)
    (tmp_path / "run.json").write_text(
        json.dumps(_config(data_csv="data.csv", a=[0, 2, 0, -2], c=[0, 0, 0, 1]))
    )
    geom = build_geometry(load_config(tmp_path / "run.json").problem)
    assert geom.dof == DegreesOfFreedom(4)
    assert geom.rho == pytest.approx(RHO)


def test_dof_must_match_residuals(tmp_path):
    (tmp_path / "data.csv").write_text("y\n" + "".join(f"{i}\n" for i in range(8)))
    (tmp_path / "run.json").write_text(json.dumps(_config(design={"replicates": 2}, data_csv="data.csv", dof=7)))
    with pytest.raises(InvalidInputError):
        build_geometry(load_config(tmp_path / "run.json").problem)


def test_solution_document_round_trip(tmp_path):
    config = SolveConfig(lam=0.2, d=3.0, knots=(0, 1, 2, 3), rho=RHO, max_iterations=30)
    report = solve(config)
    doc = SolutionDocument.from_report(report, config, "abc123")
    path = tmp_path / "solution.json"
    path.write_text(dump_json(doc))
    loaded = load_solution(path)
    assert loaded.bs.dof == "inf"
    assert loaded.provenance.config_hash == "abc123"
    assert loaded.rho == RHO
    assert loaded.to_bs() == report.bs
    assert loaded.eval.settings() == config.eval
    assert loaded.curve.to_curve().min_coverage == report.curve.min_coverage


def test_solution_with_negative_dip_is_rejected():
    bs = build_spline_bs(3.0, [0, 1, 2, 3], [0.0, 0.0], [5.0, 0.0, 0.0], 0.05, INFINITE)
    doc = SolutionDocument.model_validate(
        {"bs": bs.to_dict(), "rho": RHO, "report": {}, "provenance": {"config_hash": "x"}}
    )
    with pytest.raises(InvalidInputError):
        doc.to_bs()


def test_default_sections():
    doc = RunConfigDocument.model_validate({"problem": {"design": {}}})
    assert doc.solve.d == 6.0
    assert doc.eval.settings().w_panels == 16
    assert doc.mc.settings().sample_count == 1_000_000
