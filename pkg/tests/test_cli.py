"""Command line interface: config validation, subcommands, exit codes."""

import csv
import json

import numpy as np
import pytest

from nsgpreg.cli import CliError, build_experiment_config, load_config, main


def _write(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def test_bundled_config_is_valid_and_complete():
    raw = load_config(None)
    config = build_experiment_config(raw)
    assert config.runs == 100
    assert config.uq is True
    assert len(config.methods) == 7
    assert config.batch_reg.lambda_ell == 18.0
    assert config.ss_reg.rho_f == 50.0


def test_bundled_config_equals_library_defaults():
    # the shipped JSON and ExperimentConfig() must describe the same run
    from nsgpreg.experiment import METHOD_IDS, ExperimentConfig

    from_json = build_experiment_config(load_config(None))
    default = ExperimentConfig()
    assert from_json.methods == default.methods
    assert from_json.batch_reg == default.batch_reg
    assert from_json.ss_reg == default.ss_reg
    for field in ("runs", "seed", "uq", "threads", "num_points", "noise_var",
                  "nu", "b_ell", "b_sigma", "link_kind", "u_lengthscale",
                  "u_magnitude"):
        assert getattr(from_json, field) == getattr(default, field)
    for method in METHOD_IDS:
        assert from_json.solver_settings(method) == default.solver_settings(method)


def test_config_overrides_win(tmp_path):
    path = _write(tmp_path / "c.json", {"runs": 5, "seed": 2})
    config = build_experiment_config(load_config(path), {"runs": 9, "seed": None})
    assert config.runs == 9
    assert config.seed == 2


def test_negative_weight_error_names_key(tmp_path, capsys):
    path = _write(tmp_path / "bad.json", {"batch_reg": {"lambda_ell": -1.0}})
    assert main(["experiment", "--config", path]) == 1
    err = capsys.readouterr().err
    assert "lambda_ell" in err


def test_unknown_key_error_names_key(tmp_path, capsys):
    path = _write(tmp_path / "bad.json", {"windows": 3})
    assert main(["experiment", "--config", path]) == 1
    assert "windows" in capsys.readouterr().err


def test_unknown_method_rejected(tmp_path, capsys):
    path = _write(tmp_path / "bad.json", {"methods": ["gp", "lasso"]})
    assert main(["experiment", "--config", path]) == 1
    assert "lasso" in capsys.readouterr().err


def test_malformed_json_is_user_error(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["experiment", "--config", str(path)]) == 1
    assert "JSON" in capsys.readouterr().err


def test_missing_config_is_user_error(capsys):
    assert main(["experiment", "--config", "/no/such/file.json"]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_bad_flag_is_user_error(capsys):
    assert main(["experiment", "--frobnicate"]) == 1


def test_help_exits_zero():
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0


def test_experiment_subcommand_writes_results(tmp_path, capsys):
    path = _write(
        tmp_path / "c.json",
        {"methods": ["gp"], "runs": 1, "uq": False, "num_points": 30},
    )
    outdir = tmp_path / "out"
    assert main(["experiment", "--config", path, "--out", str(outdir)]) == 0
    assert (outdir / "results.csv").exists()
    assert (outdir / "trace_gp.csv").exists()
    assert "rmse_mean" in capsys.readouterr().out


def test_fit_subcommand_on_csv(tmp_path, capsys):
    data = tmp_path / "d.csv"
    rows = ["t,y"] + [f"{k / 10},{np.sin(k)}" for k in range(10)]
    data.write_text("\n".join(rows) + "\n")
    out = tmp_path / "fit.csv"
    code = main(["fit", "--method", "gp", "--data", str(data), "--out", str(out)])
    assert code == 0
    assert "nlml" in capsys.readouterr().out
    with open(out, newline="") as handle:
        parsed = list(csv.reader(handle))
    assert parsed[0][:3] == ["t", "y", "f_hat"]
    assert len(parsed) == 11


def test_fit_accepts_per_sample_noise_column(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("t,y,r\n0.0,0.1,0.01\n0.5,0.4,0.02\n1.0,0.2,0.01\n")
    assert main(["fit", "--method", "gp", "--data", str(data)]) == 0


def test_fit_rejects_non_increasing_times(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("t,y\n0.0,0.1\n0.2,0.4\n0.2,1.1\n")
    assert main(["fit", "--method", "gp", "--data", str(data)]) == 1
    assert "row 3" in capsys.readouterr().err


def test_fit_rejects_bad_header(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("time,value\n0.0,0.1\n")
    assert main(["fit", "--method", "gp", "--data", str(data)]) == 1
    assert "header" in capsys.readouterr().err


def test_fit_rejects_malformed_cell(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("t,y\n0.0,0.1\n0.5,oops\n")
    assert main(["fit", "--method", "gp", "--data", str(data)]) == 1
    assert "row 2" in capsys.readouterr().err


def test_fit_requires_a_method(tmp_path, capsys):
    path = _write(tmp_path / "c.json", {"runs": 1})
    assert main(["fit", "--config", path]) == 1
    assert "method" in capsys.readouterr().err


def test_runtime_failure_exit_code(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("t,y\n0.0,0.1\n0.5,0.4\n1.0,0.2\n")
    code = main(
        ["fit", "--method", "gp", "--data", str(data),
         "--out", str(tmp_path / "no" / "such" / "dir" / "x.csv")]
    )
    assert code == 2
    assert "runtime failure" in capsys.readouterr().err


def test_diagnose_writes_iteration_csv(tmp_path, capsys):
    path = _write(
        tmp_path / "c.json",
        {
            "num_points": 24,
            "solvers": {"r-ss-nsgp-admm": {"max_outer": 10, "inner_max_iters": 40}},
        },
    )
    out = tmp_path / "diag.csv"
    code = main(
        ["diagnose", "--config", path, "--method", "r-ss-nsgp-admm", "--out", str(out)]
    )
    assert code == 0
    captured = capsys.readouterr()
    assert "lagrangian_monotone" in captured.out
    with open(out, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["iteration", "lagrangian", "primal_residual", "dual_residual"]
    assert len(rows) >= 3
    assert [int(r[0]) for r in rows[1:]] == list(range(1, len(rows)))


def test_diagnose_rejects_non_admm_method(tmp_path, capsys):
    path = _write(tmp_path / "c.json", {"method": "gp"})
    assert main(["diagnose", "--config", path, "--out", str(tmp_path / "d.csv")]) == 1
    assert "gp" in capsys.readouterr().err


def test_load_config_rejects_bad_solver_key(tmp_path):
    path = _write(tmp_path / "c.json", {"solvers": {"gp": {"stepsize": 2}}})
    with pytest.raises(CliError, match="stepsize"):
        load_config(path)
