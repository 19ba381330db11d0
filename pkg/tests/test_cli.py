from __future__ import annotations

import json

import pytest

from gevreylab import cli
from gevreylab._io import read_csv


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def test_params_json(tmp_path, capsys):
    assert run(tmp_path, "params", "--rpq", "2,3,5") == 0
    d = json.loads((tmp_path / "params.json").read_text())
    assert d["params"]["s0"]["rational"] == "4/3"
    assert d["config"]["rpq"] == [2, 3, 5] and d["config"]["command"] == "params"
    assert json.loads(capsys.readouterr().out)["theta"]["rational"] == "3/4"


def test_fit_unit(tmp_path):
    assert run(tmp_path, "fit", "--rpq", "2,3,5", "--mode", "unit", "--k", "50:200") == 0
    rep = json.loads((tmp_path / "fit_unit.json").read_text())
    assert abs(rep["fit"]["s"] / (4 / 3) - 1) <= 0.01


@pytest.mark.parametrize("argv", [
    ["params", "--rpq", "2,2,2"],
    ["params", "--rpq", "2,3"],
    ["fit", "--k", "200:50"],
    ["fit", "--mode", "unit", "--k", "50:60"],
    ["nonsense"],
    ["iterbound", "--N", "a,b"],
    ["params", "--workers", "0"],
    ["strata", "--fields", "missing.txt"],
    ["strata", "--fields", "missing.txt", "--point", "0,0,0,0,0,0,1,0"],
])
def test_usage_errors_exit_2(tmp_path, argv, capsys):
    assert run(tmp_path, *argv) == 2
    assert capsys.readouterr().err


def test_config_precedence(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[common]\nrpq = 2,3,7\n[iterbound]\nN = 20\nweight5 = 0\n")
    assert run(tmp_path, "iterbound", "--config", str(ini)) == 0
    cfg, header, rows = read_csv(tmp_path / "iterbound.csv")
    assert cfg["rpq"] == [2, 3, 7] and cfg["weight5"] == 0
    assert header[0] == "N" and rows[0][1] == "20"
    # a flag beats the file
    assert run(tmp_path, "iterbound", "--config", str(ini), "--rpq", "2,3,5", "--weight5", "1") == 0
    cfg, _, rows = read_csv(tmp_path / "iterbound.csv")
    assert cfg["rpq"] == [2, 3, 5] and rows[0][1] == "27"


def test_config_unknown_key(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[params]\nlevels = 3\n")
    assert run(tmp_path, "params", "--config", str(ini)) == 2
    assert "levels" in capsys.readouterr().err


def test_spectrum_csv(tmp_path):
    assert run(tmp_path, "spectrum", "--potential", "2:1", "--levels", "3", "--extrapolate") == 0
    cfg, header, rows = read_csv(tmp_path / "spectrum.csv")
    assert [round(float(r[1]), 6) for r in rows] == [1.0, 3.0, 5.0]
    assert cfg["potential"] == "2:1"
    assert run(tmp_path, "spectrum", "--potential", "3:1") == 2


def test_strata_default_and_fields_file(tmp_path):
    assert run(tmp_path, "strata", "--rpq", "2,3,5") == 0
    reports = json.loads((tmp_path / "strata.json").read_text())["strata"]
    assert {r["name"]: r["depth"] for r in reports}["P2:Sigma3+"] == 3
    f = tmp_path / "fields.txt"
    f.write_text("xi1\nxi2\nx1^2*xi3  # r = 3\n")
    assert run(tmp_path, "strata", "--fields", str(f), "--point", "0,0,0,0,0,0,1,0") == 0
    assert json.loads((tmp_path / "strata.json").read_text())["strata"][0]["depth"] == 3
    assert run(tmp_path, "strata", "--fields", str(f), "--point", "1,0,0,0,0,0,1,0") == 2
    assert run(tmp_path, "strata", "--fields", str(f)) == 2


def test_roots_and_residual_deterministic(tmp_path):
    assert run(tmp_path, "roots", "--fast") == 0
    meta = json.loads((tmp_path / "roots.json").read_text())
    assert meta["uniqueness_sign_changes"] and set(meta["uniqueness_sign_changes"]) == {1}
    assert run(tmp_path, "residual", "--fast", "--seed", "3", "--spot-points", "2") == 0
    first = (tmp_path / "residual.json").read_text()
    assert run(tmp_path, "residual", "--fast", "--seed", "3", "--spot-points", "2") == 0
    assert (tmp_path / "residual.json").read_text() == first


def test_moments_and_branch(tmp_path):
    assert run(tmp_path, "moments", "--mode", "unit", "--k", "0:40") == 0
    _, _, rows = read_csv(tmp_path / "moments_unit.csv")
    assert len(rows) == 41 and abs(float(rows[2][1]) - 2.0794415416798357) < 1e-10  # log 8
    assert run(tmp_path, "branch", "--fast", "--hbar", "0.01:0.1") == 0
    cfg, header, rows = read_csv(tmp_path / "branch_0.csv")
    assert header[:2] == ["hbar", "E"] and len(rows) >= 2


def test_tunneling(tmp_path):
    assert run(tmp_path, "tunneling", "--fast") == 0
    rep = json.loads((tmp_path / "tunneling.json").read_text())
    assert rep["splitting"]["slope"] < 0 and rep["even"]["s_fit"] > 0


def test_verify_all_fast_exit_zero(tmp_path, capsys):
    assert run(tmp_path, "verify-all", "--rpq", "2,3,5", "--fast") == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 11
    checks = json.loads((tmp_path / "verify_all.json").read_text())["checks"]
    assert all(c["passed"] for c in checks)


def test_verify_all_only_subset(tmp_path):
    assert run(tmp_path, "verify-all", "--only", "1,10") == 0
    checks = json.loads((tmp_path / "verify_all.json").read_text())["checks"]
    assert [c["id"] for c in checks] == [1, 10]
