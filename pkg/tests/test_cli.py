import json
import math
import os

import pytest

from transient_impact.cli import run
from transient_impact.config import RunConfig
from transient_impact.exceptions import ConfigError

ONES = """
[model]
kind = "ou_linear"

[frictions]
Lambda = 1.0
C = 1.0
R = 1.0
eps = 0.25

[state]
y = [0.0, 1.0]

[simulation]
dt = 0.0025
horizon = 10.0
paths = 64
seed = 3
policies = ["asymptotic", "zero"]
block_size = 32
"""

SWEEP = """
[model]
kind = "ou_linear"

[frictions]
Lambda = 1.0
C = 1.0
R = 1.0

[sweep]
eps_grid = [0.5, 0.25]
paths = 64
seed = 1
block_size = 32
"""


@pytest.fixture
def cfg_file(tmp_path):
    def make(text, name="cfg.toml"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return make


def test_riccati_command(cfg_file, tmp_path, capsys):
    assert run(["riccati", "--config", cfg_file(ONES), "--out", str(tmp_path / "r")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["Qh"][0][0] == pytest.approx(1.0)
    assert out["Qd"][0][0] == pytest.approx(math.sqrt(6) - 2)
    manifest = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert manifest["artifacts"] == ["riccati.json", "manifest.json"]
    assert manifest["config"]["model"]["kind"] == "ou_linear"
    assert "git_describe" in manifest and "wall_time_s" in manifest


def test_riccati_csv(cfg_file, tmp_path):
    assert run(["riccati", "--config", cfg_file(ONES), "--out", str(tmp_path), "--format", "csv"]) == 0
    assert (tmp_path / "riccati.csv").read_text().startswith("name,row,col,value")


def test_unknown_subcommand(capsys):
    assert run(["bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_config(capsys, tmp_path):
    assert run(["riccati", "--out", str(tmp_path)]) == 2
    assert run(["riccati", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 2


def test_config_error_names_line_and_field(cfg_file, tmp_path, capsys):
    bad = ONES.replace("R = 1.0", "R = -1.0")
    assert run(["riccati", "--config", cfg_file(bad), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "line 8" in err and "frictions.R" in err


def test_unknown_key(cfg_file, tmp_path, capsys):
    assert run(["riccati", "--config", cfg_file(ONES + "\n[field]\nfoo = 1\n"), "--out", str(tmp_path)]) == 2
    assert "field.foo" in capsys.readouterr().err


def test_numerical_failure_exit_code(cfg_file, tmp_path, capsys):
    stiff = ONES.replace("dt = 0.0025", "dt = 0.2")
    assert run(["simulate", "--config", cfg_file(stiff), "--out", str(tmp_path)]) == 1
    assert "stiffness_guard" in capsys.readouterr().err


def test_simulate_outputs(cfg_file, tmp_path):
    out = tmp_path / "s"
    assert run(["simulate", "--config", cfg_file(ONES), "--out", str(out), "--trace", "2"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    for name in manifest["artifacts"]:
        assert (out / name).exists()
    rows = (out / "paths.csv").read_text().splitlines()
    assert len(rows) == 65
    assert rows[0].startswith("path,frictionless,J[asymptotic]")
    summary = json.loads((out / "simulate.json").read_text())
    # the zero policy keeps the initial position while the target moves
    assert summary["policies"]["zero"]["decomposition"] < 0
    assert "transversality_note" in summary


def test_manifest_round_trip(cfg_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--config", cfg_file(ONES), "--out", str(a), "--seed", "11", "--paths", "40"]) == 0
    assert run(["simulate", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (a / "paths.csv").read_text() == (b / "paths.csv").read_text()
    assert json.loads((b / "manifest.json").read_text())["seed"] == 11


def test_sweep_command(cfg_file, tmp_path):
    out = tmp_path / "sw"
    assert run(["sweep", "--plan", cfg_file(SWEEP), "--out", str(out)]) == 0
    rep = json.loads((out / "sweep.json").read_text())
    assert [r["eps"] for r in rep["rows"]] == [0.5, 0.25]
    assert rep["u"] == pytest.approx((math.sqrt(6) - 1) / 2)
    for key in ("gap", "gap_se", "target", "deviation", "ranking"):
        assert key in rep["rows"][0]
    assert (out / "sweep.csv").exists()
    # --dt is rejected for sweeps (the step is tied to eps)
    assert run(["sweep", "--plan", cfg_file(SWEEP), "--out", str(out), "--dt", "0.1"]) == 2


def test_field_and_expand(cfg_file, tmp_path):
    two = """
[model]
kind = "matrix_constant"
mu = [0.0, 0.0]
Sigma = [1.0, 0.0, 0.0, 2.0]

[frictions]
Lambda = [[0.5, 0.0], [0.0, 1.0]]
C = [[2.0, 0.0], [0.0, 4.0]]
R = 0.5

[field]
x1 = [-1.0, 1.0, 5]
x2 = [-1.0, 1.0, 5]
distortion = [0.5, 0.0]
"""
    assert run(["field", "--config", cfg_file(two), "--out", str(tmp_path / "f"), "--format", "csv"]) == 0
    lines = (tmp_path / "f" / "field.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,rate1,rate2" and len(lines) == 26
    assert run(["expand", "--config", cfg_file(ONES), "--out", str(tmp_path / "e")]) == 0
    res = json.loads((tmp_path / "e" / "expand.json").read_text())
    assert res["vhat"] == pytest.approx(1 / 3 - 0.25 * (math.sqrt(6) - 1) / 2)


def test_figures_command(tmp_path):
    assert run(["figures", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fig2_positive.csv").exists()


def test_full_precision_csv(cfg_file, tmp_path):
    assert run(["simulate", "--config", cfg_file(ONES), "--out", str(tmp_path)]) == 0
    row = (tmp_path / "paths.csv").read_text().splitlines()[1].split(",")
    assert any(len(v.replace("-", "").replace(".", "").lstrip("0")) >= 16 for v in row[1:])


def test_config_matrix_forms():
    cfg = RunConfig.from_text('[model]\nkind = "matrix_constant"\nmu = [1.0, 0.0]\nSigma = 2.0\n'
                              '[frictions]\nLambda = [1.0, 0.0, 0.0, 1.0]\nC = [[1.0, 0.0], [0.0, 3.0]]\nR = 1.0\n')
    fr = cfg.frictions()
    assert fr.C0[1, 1] == 3.0 and fr.Lambda0[0, 1] == 0.0
    assert cfg.model().Sigma[0, 0] == 2.0
    with pytest.raises(ConfigError) as e:
        RunConfig.from_text('[model]\nkind = "matrix_constant"\nmu = [1.0, 0.0]\nSigma = [1.0, 2.0]\n').model()
    assert e.value.field == "model.Sigma" and e.value.line == 4


def test_config_state_conflicts():
    cfg = RunConfig.from_text(ONES.replace("[state]", "[state]\nd = 0.1\nD = 0.2"))
    with pytest.raises(ConfigError):
        cfg.initial_state(cfg.model(), cfg.frictions())


def test_config_syntax_error_line():
    with pytest.raises(ConfigError) as e:
        RunConfig.from_text('[model]\nkind = "ou_linear"\nlam = \n')
    assert e.value.line == 3


def test_bad_model_kind():
    with pytest.raises(ConfigError) as e:
        RunConfig.from_text('[model]\nkind = "heston"\n')
    assert e.value.field == "model.kind"
