import json
import math

import pytest

from gossipopt import cli, experiments
from gossipopt.experiments import CSV_HEADER, ExperimentConfig


def _quadratic_config(**overrides):
    base = dict(
        problem={"kind": "random_quadratic", "n": 4, "d": 3, "L": 10.0, "mu": 1.0, "seed": 0},
        topology={"kind": "ring_star", "n": 4},
        budget=40,
        target_eps=1e-30,
        stop_metric="stacked",
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def _hard_config(**overrides):
    base = dict(
        problem={"kind": "hard_instance", "chi": 9.0, "L": 16.0, "mu": 1.0, "d_trunc": 40},
        budget=30,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_emit_csv_header_and_row_count():
    result = experiments.run_experiment(_quadratic_config(budget=3))
    text = experiments.emit(result.records, "csv")
    lines = text.strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 5  # header + records for k = 0..3
    assert experiments.emit([], "csv").strip() == CSV_HEADER


def test_emit_json_roundtrip_exact():
    result = experiments.run_experiment(_quadratic_config(budget=3))
    rows = json.loads(experiments.emit(result.records, "json"))
    for row, rec in zip(rows, result.records):
        assert row["k"] == rec.k
        assert row["err_sq_stacked"] == rec.err_sq_stacked
        assert row["psi_x"] == rec.psi_x


def test_csv_floats_roundtrip_exactly():
    result = experiments.run_experiment(_quadratic_config(budget=5))
    lines = experiments.emit(result.records, "csv").strip().split("\n")[1:]
    for line, rec in zip(lines, result.records):
        cells = line.split(",")
        assert float(cells[3]) == rec.err_sq_stacked
        assert float(cells[5]) == rec.psi_x


def test_run_experiment_is_byte_deterministic(tmp_path):
    cfg = _quadratic_config(output_path="run.csv")
    experiments.run_experiment(cfg, output_dir=str(tmp_path / "a"))
    experiments.run_experiment(cfg, output_dir=str(tmp_path / "b"))
    (tmp_path / "a").mkdir(exist_ok=True)
    a = (tmp_path / "a" / "run.csv").read_bytes()
    b = (tmp_path / "b" / "run.csv").read_bytes()
    assert a == b


def test_output_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(experiments.OUTPUT_DIR_ENV, str(tmp_path))
    cfg = _quadratic_config(budget=2, output_path="env.csv")
    result = experiments.run_experiment(cfg)
    assert (tmp_path / "env.csv").exists()
    assert result.summary["output_path"] == str(tmp_path / "env.csv")


def test_declared_chi_validated_against_measured():
    # ring/star on 4 nodes measures chi = 4
    with pytest.raises(ValueError, match="below the measured"):
        experiments.run_experiment(_quadratic_config(chi=2.0))
    result = experiments.run_experiment(_quadratic_config(chi=8.0, budget=2))
    assert result.summary["chi_used"] == 8.0
    assert abs(result.summary["chi_measured"] - 4.0) < 1e-9


def test_auto_T_resolves_to_halving_rounds():
    result = experiments.run_experiment(_quadratic_config(T="auto", budget=2))
    chi = result.summary["chi_measured"]
    assert result.summary["T"] == math.ceil(chi * math.log(2.0))
    assert result.summary["chi_eff"] == 2.0
    assert result.summary["comm_rounds"] == 2 * result.summary["T"]


def test_param_overrides_change_the_trajectory():
    default = experiments.run_experiment(_quadratic_config(budget=5))
    slowed = experiments.run_experiment(
        _quadratic_config(budget=5, param_overrides={"tau1": 1e-6})
    )
    assert (
        default.records[-1].err_sq_stacked != slowed.records[-1].err_sq_stacked
    )


def test_certify_requires_hard_instance():
    with pytest.raises(ValueError, match="hard_instance"):
        experiments.run_experiment(_quadratic_config(certify=True))


def test_certification_attached_to_summary():
    result = experiments.run_experiment(_hard_config(certify=True))
    assert result.summary["certified"] is True
    assert result.cert_report.passed


def test_config_validation():
    with pytest.raises(ValueError, match="budget"):
        ExperimentConfig(problem={"kind": "random_quadratic"})
    with pytest.raises(ValueError, match="T must be"):
        _quadratic_config(T=0)
    with pytest.raises(ValueError, match="output format"):
        _quadratic_config(output_format="yaml")
    with pytest.raises(ValueError, match="unknown problem kind"):
        experiments.run_experiment(
            ExperimentConfig(problem={"kind": "nope"}, budget=1)
        )
    with pytest.raises(ValueError, match="topology"):
        experiments.run_experiment(
            ExperimentConfig(
                problem={"kind": "random_quadratic", "n": 4, "d": 3, "L": 10.0,
                         "mu": 1.0, "seed": 0},
                budget=1,
            )
        )


def test_config_from_dict_nested_layout():
    cfg = ExperimentConfig.from_dict(
        {
            "problem": {"kind": "hard_instance", "chi": 9.0, "L": 16.0, "mu": 1.0,
                        "d_trunc": 40},
            "algorithm": {"T": "auto", "param_overrides": {"zeta": 0.4}},
            "stop": {"budget": 10, "target_eps": 1e-9, "metric": "stacked"},
            "output": {"path": "out.json", "format": "json", "record_lyapunov": False},
            "certify": True,
        }
    )
    assert cfg.T == "auto"
    assert cfg.param_overrides == {"zeta": 0.4}
    assert cfg.stop_metric == "stacked"
    assert cfg.output_format == "json"
    assert cfg.certify is True


def test_sweep_singleton_matches_run():
    cfg = _hard_config(budget=None, target_eps=1e-4, stop_metric="stacked")
    rows = experiments.sweep(cfg, "chi", [9.0])
    single = experiments.run_experiment(experiments._config_with(cfg, "chi", 9.0))
    assert rows[0]["status"] == "ok"
    assert rows[0]["iterations_to_eps"] == single.summary["iterations"]
    assert rows[0]["comm_rounds_to_eps"] == single.summary["comm_rounds"]


def test_sweep_isolates_failed_rows():
    cfg = _hard_config()
    rows = experiments.sweep(cfg, "chi", [1.0, 9.0])  # chi = 1 is invalid
    assert rows[0]["status"] == "error"
    assert rows[1]["status"] == "ok"


def test_sweep_axis_validation():
    cfg = _hard_config()
    with pytest.raises(ValueError, match="at least one value"):
        experiments.sweep(cfg, "chi", [])
    rows = experiments.sweep(cfg, "kappa", [10.0])
    assert rows[0]["status"] == "error"  # kappa sweeps need a logistic problem


def test_sweep_T_axis():
    cfg = _hard_config(budget=5)
    rows = experiments.sweep(cfg, "T", [1, 3])
    assert all(r["status"] == "ok" for r in rows)


def test_budget_only_run_marks_unconverged():
    result = experiments.run_experiment(_hard_config(budget=3, target_eps=1e-30))
    assert result.summary["converged"] is False
    assert result.summary["iterations"] == 3


# ---------------------------------------------------------------- CLI


def _write_config(tmp_path, obj, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def test_cli_params_prints_schedule(capsys):
    assert cli.main(["params", "--L", "4", "--mu", "1", "--chi", "1"]) == 0
    out = capsys.readouterr().out
    assert "tau2 = 0.5" in out
    assert "sigma2 = 0.03125" in out
    assert "theta = 4.0" in out


def test_cli_params_auto_T(capsys):
    assert cli.main(["params", "--L", "4", "--mu", "1", "--chi", "9", "--T", "auto"]) == 0
    out = capsys.readouterr().out
    assert "T = 7" in out
    assert "chi_eff = 2.0" in out


def test_cli_run_and_exit_codes(tmp_path, capsys):
    config = _write_config(
        tmp_path,
        {
            "problem": {"kind": "random_quadratic", "n": 4, "d": 3, "L": 10.0,
                        "mu": 1.0, "seed": 0},
            "topology": {"kind": "ring_star", "n": 4},
            "stop": {"budget": 5},
            "output": {"path": "run.csv"},
        },
    )
    assert cli.main(["run", config, "--output-dir", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["iterations"] == 5
    assert (tmp_path / "run.csv").exists()

    assert cli.main(["run", str(tmp_path / "missing.json")]) == 1
    assert "error:" in capsys.readouterr().err


def test_cli_validate_gossip(tmp_path, capsys):
    config = _write_config(
        tmp_path,
        {
            "problem": {"kind": "random_quadratic", "n": 5, "d": 2, "L": 4.0,
                        "mu": 1.0, "seed": 0},
            "topology": {"kind": "ring_star", "n": 5},
            "stop": {"budget": 1},
        },
    )
    assert cli.main(["validate-gossip", config]) == 0
    out = capsys.readouterr().out
    assert "round 0" in out and "round 1" in out
    assert "contraction=True" in out


def test_cli_lowerbound_certify(tmp_path, capsys):
    config = _write_config(
        tmp_path,
        {
            "problem": {"kind": "hard_instance", "chi": 9.0, "L": 16.0, "mu": 1.0,
                        "d_trunc": 40},
            "stop": {"budget": 20},
        },
    )
    curve = tmp_path / "curve.csv"
    code = cli.main(["lowerbound", config, "--certify", "--curve", str(curve)])
    out = capsys.readouterr().out
    assert code == 0
    assert "certification: PASS" in out
    lines = curve.read_text().strip().splitlines()
    assert lines[0] == "q,exact,relaxed"
    assert len(lines) == 22  # header + q = 0..20


def test_cli_sweep(tmp_path, capsys):
    config = _write_config(
        tmp_path,
        {
            "problem": {"kind": "hard_instance", "chi": 9.0, "L": 16.0, "mu": 1.0,
                        "d_trunc": 40},
            "stop": {"budget": 500, "target_eps": 1e-3, "metric": "stacked"},
        },
    )
    assert cli.main(["sweep", config, "--axis", "T", "--values", "1,2"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[0].startswith("value,status")
    assert len(out) == 3
