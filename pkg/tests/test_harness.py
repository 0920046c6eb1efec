import json

import numpy as np
import pytest

from compconj.cli import main
from compconj.errors import MalformedExpr, ScenarioError, UnknownExample
from compconj.grid import from_csv
from compconj.harness import compare_fn, round_sig, run_example, run_scenario
from compconj.scenario import BUILTINS, builtin, load_scenario
from compconj.grid import Grid, sample

MINIMAL = {
    "name": "minimal",
    "f0": "0",
    "g": "pow(w1,2)/2",
    "F": ["x1"],
    "grids": {"x": [[-4, 4, 81]], "u": [[-4, 4, 81]], "v": [[-3, 3, 61]], "y": [[-6, 6, 121]]},
    "expected": {"rho": "pow(v1,2)/2", "composite_conjugate": "pow(v1,2)/2"},
}


def test_minimal_scenario_passes():
    rep = run_scenario(MINIMAL)
    assert rep.passed and rep.exit_code == 0
    ids = [c.check_id for c in rep.checks]
    assert "rho" in ids and "conjugate_le_rho" in ids


def test_mismatch_fails():
    bad = dict(MINIMAL, expected={"rho": "pow(v1,2)"})
    rep = run_scenario(bad)
    assert not rep.passed and rep.exit_code == 1
    assert rep.failures()[0].check_id == "rho"


def test_report_is_deterministic_and_file_equivalent(tmp_path):
    path = tmp_path / "ex52.json"
    path.write_text(json.dumps(builtin("ex52")))
    a = run_example("ex52").dumps(timing=False)
    b = run_scenario(str(path)).dumps(timing=False)
    assert a == b
    doc = json.loads(a)
    assert doc["citation"] and doc["pass"]
    assert "timing" not in doc


def test_builtins_carry_citations():
    assert set(BUILTINS) == {"ex51", "ex51-repaired", "ex52", "ex52-repaired", "ex53",
                             "nonattain-dual", "nonattain-primal"}
    assert all(sc["citation"] for sc in BUILTINS.values())
    with pytest.raises(UnknownExample):
        builtin("ex99")


def test_scenario_validation():
    with pytest.raises(ScenarioError):
        load_scenario({"g": "w1"})
    with pytest.raises(ScenarioError):
        load_scenario("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(dict(MINIMAL, expected={"rho": "v2"}))
    with pytest.raises(MalformedExpr):
        load_scenario(dict(MINIMAL, g="pow(w1,"))
    with pytest.raises(ScenarioError):
        load_scenario(dict(MINIMAL, grids={"x": [[-1, 1, 5], [-1, 1, 5]]}))


def test_overrides_and_tol_scale():
    sc = load_scenario(MINIMAL, grid_override={"x": [-2, 2, 41]}, tol_scale=2.0)
    assert sc.problem.x_grid.to_spec() == [[-2.0, 2.0, 41]]
    assert sc.tolerances["value"] == pytest.approx(0.1)


def test_compare_fn_patterns():
    g = Grid(((-2, 2, 9),))
    h = sample("0 if x1 >= 0 else inf", g)
    assert compare_fn(h, "0 if x1 >= 0.5 else inf")["domain_ok"]  # within one node
    assert not compare_fn(h, "0 if x1 >= 1.5 else inf")["domain_ok"]
    r = compare_fn(sample("-inf if x1 > 0 else 0", g), "-inf if x1 > 0 else 0")
    assert r["minus_inf_ok"] and r["abs_dev"] == 0


def test_round_sig():
    out = round_sig({"a": 1.0 / 3, "b": [np.inf, -np.inf], "c": np.float64(2.0), "d": np.bool_(True)})
    assert out == {"a": 0.333333333333, "b": ["inf", "-inf"], "c": 2.0, "d": True}


def test_cli_example_and_dumps(tmp_path, capsys):
    out = tmp_path / "r.json"
    code = main(["example", "ex53", "--out", str(out), "--dump-grids", str(tmp_path / "grids")])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["scenario"] == "ex53" and doc["pass"]
    g = from_csv((tmp_path / "grids" / "g.csv").read_text())
    assert g.values.shape == (81, 81)
    assert "PASS" in capsys.readouterr().out


def test_cli_run_failure_and_errors(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(dict(MINIMAL, expected={"rho": "pow(v1,2)"})))
    assert main(["run", str(p)]) == 1
    p.write_text(json.dumps(dict(MINIMAL, g="pow(w1,,2)")))
    assert main(["run", str(p)]) == 2
    assert "column" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    with pytest.raises(SystemExit) as e:
        main(["example", "nope"])
    assert e.value.code == 2
    assert main(["run", str(p), "--grid-override", "q=0,1,3"]) == 2


def test_cli_conjugate(capsys):
    assert main(["conjugate", "pow(x1,2)/2", "--grid=-2,2,5", "--dual-grid=-1,1,3"]) == 0
    g = from_csv(capsys.readouterr().out)
    np.testing.assert_allclose(g.values, [0.5, 0.0, 0.5])


def test_cli_kconv_and_qual(tmp_path, capsys):
    p = tmp_path / "ex52.json"
    p.write_text(json.dumps(builtin("ex52")))
    assert main(["kconv", str(p), "--cone", "R-x0"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["K_F_within_minus_hzn_g"] is False
    assert [k["convex"] for k in doc["k_convex"]] == [True, False]
    assert main(["qual", str(p)]) == 0
    doc = json.loads(capsys.readouterr().out)
    names = {c["name"]: c["verdict"] for c in doc["conditions"]}
    assert names["0_in_rint_U"] is True


def test_cli_list(capsys):
    assert main(["list"]) == 0
    assert "nonattain-dual" in capsys.readouterr().out
