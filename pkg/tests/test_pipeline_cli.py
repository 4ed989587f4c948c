import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from slinverse import bc, cli, entire, pipeline, potential, spectrum
from slinverse.errors import PipelineError

TYPE_III = bc.classify(bc.matrix_from_parameters(2.0, 0.0, 0))
SMALL = dict(n_fit=24, n_check=12)


@pytest.fixture(scope="module")
def zero_run():
    opts = pipeline.PipelineOptions(n_fit=30, n_check=20)
    return pipeline.theorem3_pipeline(potential.zero(), 0.1, TYPE_III, 10, opts)


def test_pipeline_zero_type_three_is_already_multiple(zero_run):
    rep = zero_run.report
    assert rep["norms"]["q_qN"] < 1e-8
    assert rep["mean"]["difference"] < 1e-12
    # the base spectrum is exactly doubled and so is the model beyond N
    assert all(r["base_gap"] <= 1e-8 for r in rep["gap_table"])
    hm = zero_run.model
    for n in range(11, 21):
        _, gap = spectrum.critical_gap(hm, entire.tilde_root(n, 0, 0j, 0j))
        assert gap <= 1e-8
    # gaps measured on q_N's determinant sit at the double-root rounding floor
    assert rep["max_gap"] <= 1e-6
    assert [r["n"] for r in rep["gap_table"]] == list(range(11, 21))


def test_pipeline_report_is_machine_checkable(zero_run):
    rep = json.loads(json.dumps(zero_run.report, default=cli._json_default))
    for key in ("gap_table", "norms", "determinant_residuals", "mean", "seed", "fit", "stage_a"):
        assert key in rep
    assert rep["determinant_residuals"]["at_dirichlet_roots"] < 1e-8
    assert set(zero_run.timings) >= {"a", "e", "total"}


def test_pipeline_input_errors_carry_stage():
    with pytest.raises(PipelineError) as err:
        pipeline.theorem3_pipeline(potential.zero(), -1.0, TYPE_III, 5)
    assert err.value.stage == "input"
    type_one = bc.classify(bc.PERIODIC)
    with pytest.raises(PipelineError) as err:
        pipeline.theorem3_pipeline(potential.zero(), 0.1, type_one, 5)
    assert err.value.stage == "input"


def test_pipeline_stage_failure_is_tagged():
    # too few fit indices for the asymptotic fit
    opts = pipeline.PipelineOptions(n_fit=4, fit_from=3, n_check=6)
    with pytest.raises(PipelineError) as err:
        pipeline.theorem3_pipeline(potential.zero(), 0.1, TYPE_III, 2, opts)
    assert err.value.stage == "d"


def test_simple_dirichlet_base_keeps_generic_potential():
    q = potential.parse_expression("x")
    q1, dd, info = pipeline.simple_dirichlet_base(q, 0.1, 6, pipeline.PipelineOptions())
    assert q1 is q and info["attempts"] == 0 and dd.simple


def _run(tmp_path, *argv):
    return cli.main(["--out", str(tmp_path), *argv])


def _read(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_cli_classify(tmp_path, capsys):
    assert _run(tmp_path, "classify", "--matrix", "1,-1,0,0,0,0,1,-1") == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["type"] == "I" and doc["alpha"] == 0.5 and doc["gamma"] == 0 and doc["theta"] == 0
    assert json.loads(capsys.readouterr().out) == doc


def test_cli_determinant_matches_closed_form(tmp_path):
    assert _run(tmp_path, "determinant", "--alpha", "0.5", "--gamma", "0", "--theta", "0",
                "--q", "zero", "--mu-grid", "0:10:0.01") == 0
    head, data = _read(tmp_path / "determinant.csv")
    assert head == ["re_mu", "im_mu", "re_delta", "im_delta"]
    assert data.shape[0] == 1001
    mu = data[:, 0]
    err = np.abs(data[:, 2] + 1j * data[:, 3] - (np.cos(np.pi * mu) - 1))
    assert err.max() < 1e-10


def test_cli_full_precision_output(tmp_path):
    _run(tmp_path, "determinant", "--q", "zero", "--mu-grid", "0.1:0.3:0.1")
    field = (tmp_path / "determinant.csv").read_text().splitlines()[1].split(",")[2]
    # shortest round-trip repr of a double, not a truncated format
    assert field == repr(float(field))
    assert abs(float(field) - (math.cos(math.pi * 0.1) - 1)) < 1e-13
    assert len(field.lstrip("-").replace("0.0", "", 1)) >= 15


def test_cli_domain_error_exits_one(tmp_path, capsys):
    assert _run(tmp_path, "theorem3", "--alpha", "0.5", "--N", "3") == 1
    assert "PipelineError" in capsys.readouterr().err


def test_cli_usage_error_exits_two(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "slinverse.cli", "classify", "--bogus", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr
    with pytest.raises(SystemExit) as exc:
        cli.main(["nosuchcommand"])
    assert exc.value.code == 2


def test_cli_missing_config_exits_two(tmp_path):
    assert cli.main(["--config", str(tmp_path / "missing.json"), "classify", "--matrix", "1,0,0,1,0,1,0,0"]) == 2


def test_cli_config_defaults_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mu-grid": "0:1:0.5", "alpha": "0.5"}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["--config", str(cfg), "--out", str(a), "determinant"]) == 0
    assert _read(a / "determinant.csv")[1].shape[0] == 3
    assert cli.main(["--config", str(cfg), "--out", str(b), "determinant", "--mu-grid", "0:2:0.5"]) == 0
    assert _read(b / "determinant.csv")[1].shape[0] == 5


def test_cli_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SLINVERSE_OUTPUT_DIR", str(tmp_path / "env"))
    assert cli.main(["classify", "--matrix", "1,-1,0,0,0,0,1,-1"]) == 0
    assert (tmp_path / "env" / "report.json").exists()
    # an explicit flag wins over the environment
    assert cli.main(["--out", str(tmp_path / "flag"), "classify", "--matrix", "1,-1,0,0,0,0,1,-1"]) == 0
    assert (tmp_path / "flag" / "report.json").exists()


def test_cli_spectrum_and_dirichlet(tmp_path):
    assert _run(tmp_path, "dirichlet", "--q", "zero", "--n-max", "5") == 0
    assert _run(tmp_path, "spectrum", "--alpha", "2", "--q", "zero", "--n-max", "8") == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert "verdict" in json.dumps(doc)
    assert (tmp_path / "spectrum.csv").exists()


def test_cli_theorem3_deterministic_artifacts(tmp_path):
    argv = ["theorem3", "--q", "zero", "--alpha", "2", "--gamma", "0", "--theta", "0", "--N", "4",
            "--n-fit", str(SMALL["n_fit"]), "--n-check", str(SMALL["n_check"]), "--grid-size", "513"]
    for d in ("r1", "r2"):
        assert cli.main(["--out", str(tmp_path / d), *argv]) == 0
    for name in ("report.json", "potential.csv", "spectrum.csv", "determinant.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    rep = json.loads((tmp_path / "r1" / "report.json").read_text())
    assert rep["seed"] == 0 and rep["N"] == 4
    assert [r["n"] for r in rep["gap_table"]] == list(range(5, 15))
    assert rep["max_gap"] <= 1e-6
