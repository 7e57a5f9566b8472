"""End-to-end command checks on deliberately tiny configurations.

A module-scoped pipeline directory is built once: generate, calibrate, and
train run as real CLI invocations, later tests consume their artifacts.
"""

import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from mirrorforge.cli import main, worker_cap

TINY_CONFIG = {
    "seed": 7,
    "generate": {"linear": {"n_per_load": 150}},
    "calibrate": {
        "grid": [[2.0e9, 0.4e9, 3.0], [1.6e9, 0.16e9, 1.0]],
        "n_samples": 500,
        "n_eval": 300,
    },
    "train": {
        "epochs": 200,
        "batch_size": 32,
        "hidden_sizes": [8],
        "selection_interval": 100,
        "n_eval": 200,
        "noise_dim": 2,
    },
    "evaluate": {"n_eval": 300},
    "extrapolate": {"n_per_load": 110, "calibration_samples": 500},
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    config_path = root / "config.json"
    config_path.write_text(json.dumps(TINY_CONFIG))
    data_dir = root / "data"
    assert (
        main(
            [
                "generate",
                "--config",
                str(config_path),
                "--case",
                "linear",
                "--out",
                str(data_dir),
            ]
        )
        == 0
    )
    return {
        "root": root,
        "config": str(config_path),
        "data": str(data_dir / "linear.csv"),
    }


@pytest.fixture(scope="module")
def calibrated(pipeline):
    models = Path(pipeline["root"]) / "models"
    assert (
        main(
            [
                "calibrate",
                "--config",
                pipeline["config"],
                "--data",
                pipeline["data"],
                "--out",
                str(models),
            ]
        )
        == 0
    )
    return models


@pytest.fixture(scope="module")
def trained(pipeline):
    models = Path(pipeline["root"]) / "models"
    assert (
        main(
            [
                "train",
                "--config",
                pipeline["config"],
                "--data",
                pipeline["data"],
                "--mode",
                "black-box",
                "--out",
                str(models),
            ]
        )
        == 0
    )
    return models


class TestGenerate:
    def test_writes_records_and_sidecar(self, pipeline):
        data = Path(pipeline["data"])
        assert data.exists()
        assert data.with_suffix(".json").exists()
        lines = data.read_text().splitlines()
        assert lines[0] == "load,tip_displacement,seed"
        assert len(lines) == 1 + 20 * 150

    def test_collision_without_force_fails(self, pipeline, capsys):
        code = main(
            [
                "generate",
                "--config",
                pipeline["config"],
                "--out",
                str(Path(pipeline["data"]).parent),
            ]
        )
        assert code == 1
        assert "--force" in capsys.readouterr().err

    def test_force_rerun_is_byte_identical(self, pipeline):
        data = Path(pipeline["data"])
        before_csv = data.read_bytes()
        before_sidecar = data.with_suffix(".json").read_bytes()
        assert (
            main(
                [
                    "generate",
                    "--config",
                    pipeline["config"],
                    "--out",
                    str(data.parent),
                    "--force",
                ]
            )
            == 0
        )
        assert data.read_bytes() == before_csv
        assert data.with_suffix(".json").read_bytes() == before_sidecar

    def test_prints_per_load_summary(self, pipeline, tmp_path, capsys):
        assert (
            main(
                [
                    "generate",
                    "--config",
                    pipeline["config"],
                    "--out",
                    str(tmp_path / "fresh"),
                ]
            )
            == 0
        )
        out = capsys.readouterr().out
        assert "load 10:" in out and "load 200:" in out
        assert "mean=" in out and "std=" in out

    def test_nonlinear_case_shape(self, tmp_path):
        config = dict(TINY_CONFIG)
        config["generate"] = {"nonlinear": {"n_realizations": 12}}
        config_path = tmp_path / "nl.json"
        config_path.write_text(json.dumps(config))
        out_dir = tmp_path / "nl"
        assert (
            main(
                [
                    "generate",
                    "--config",
                    str(config_path),
                    "--case",
                    "nonlinear",
                    "--out",
                    str(out_dir),
                ]
            )
            == 0
        )
        lines = (out_dir / "nonlinear.csv").read_text().splitlines()
        assert len(lines) == 1 + 40 * 12


class TestExitCodes:
    def test_usage_error_is_two(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["no-such-command"])
        assert excinfo.value.code == 2

    def test_missing_subcommand_is_two(self):
        with pytest.raises(SystemExit) as excinfo:
            main([])
        assert excinfo.value.code == 2

    def test_domain_error_is_one(self, tmp_path, capsys):
        code = main(
            [
                "calibrate",
                "--data",
                str(tmp_path / "missing.csv"),
                "--out",
                str(tmp_path),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_hybrid_without_sfe_is_one(self, pipeline, tmp_path, capsys):
        code = main(
            [
                "train",
                "--config",
                pipeline["config"],
                "--data",
                pipeline["data"],
                "--mode",
                "hybrid",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == 1
        assert "missing SFE model" in capsys.readouterr().err


class TestWorkerCap:
    def test_env_caps_requested_workers(self, monkeypatch):
        monkeypatch.setenv("MIRRORFORGE_THREADS", "2")
        assert worker_cap(8) == 2
        assert worker_cap(1) == 1

    def test_unset_env_leaves_request(self, monkeypatch):
        monkeypatch.delenv("MIRRORFORGE_THREADS", raising=False)
        assert worker_cap(8) == 8


class TestCalibrate:
    def test_writes_calibration_and_report(self, calibrated, capsys):
        assert (calibrated / "sfe.json").exists()
        assert (calibrated / "sfe_report.json").exists()
        payload = json.loads((calibrated / "sfe.json").read_text())
        assert payload["best_index"] in (0, 1)
        report = json.loads((calibrated / "sfe_report.json").read_text())
        assert len(report["codes"]) == 20

    def test_recovers_truth_from_decoy_grid(self, calibrated):
        payload = json.loads((calibrated / "sfe.json").read_text())
        best = payload["grid"][payload["best_index"]]
        assert best == [2.0e9, 0.4e9, 3.0]


class TestTrain:
    def test_writes_model_and_trace(self, trained):
        assert (trained / "cgan.json").exists()
        trace = (trained / "cgan_trace.csv").read_text().splitlines()
        assert trace[0] == "epoch,hidden_size,val_kl"
        assert len(trace) == 1 + 2

    def test_epochs_flag_overrides_config(self, pipeline, tmp_path):
        out = tmp_path / "override"
        assert (
            main(
                [
                    "train",
                    "--config",
                    pipeline["config"],
                    "--data",
                    pipeline["data"],
                    "--out",
                    str(out),
                    "--epochs",
                    "100",
                ]
            )
            == 0
        )
        trace = (out / "cgan_trace.csv").read_text().splitlines()
        assert len(trace) == 1 + 1

    def test_hybrid_uses_stored_calibration(self, pipeline, calibrated, tmp_path):
        out = tmp_path / "hybrid"
        assert (
            main(
                [
                    "train",
                    "--config",
                    pipeline["config"],
                    "--data",
                    pipeline["data"],
                    "--mode",
                    "hybrid",
                    "--sfe",
                    str(calibrated / "sfe.json"),
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        model = json.loads((out / "hybrid.json").read_text())
        assert model["mode"] == "hybrid"
        assert model["noise_dim"] == 1
        assert model["latent"]["germ_dim"] == 2


class TestEvaluate:
    def test_self_comparison_epsilon_near_zero(self, pipeline, tmp_path):
        out = tmp_path / "self"
        assert (
            main(
                [
                    "evaluate",
                    "--config",
                    pipeline["config"],
                    "--model",
                    pipeline["data"],
                    "--data",
                    pipeline["data"],
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        report = json.loads((out / "report.json").read_text())
        assert report["epsilon"] < 0.01
        assert report["pass_epsilon"] is True

    def test_emits_density_and_alpha_tables(self, pipeline, trained, tmp_path):
        out = tmp_path / "tables"
        assert (
            main(
                [
                    "evaluate",
                    "--config",
                    pipeline["config"],
                    "--model",
                    str(trained / "cgan.json"),
                    "--data",
                    pipeline["data"],
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        densities = sorted(out.glob("density_code_*.csv"))
        assert len(densities) == 20
        first = densities[0].read_text().splitlines()
        assert first[0] == "x,p_data,p_model"
        assert len(first) == 1 + 512
        alpha = (out / "alpha_curve.csv").read_text().splitlines()
        assert alpha[0] == "alpha,coverage"
        assert len(alpha) == 1 + 51
        per_code = (out / "per_code_kl.csv").read_text().splitlines()
        assert per_code[0] == "load,kl"
        assert len(per_code) == 1 + 20

    def test_rerun_is_byte_identical(self, pipeline, trained, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert (
                main(
                    [
                        "evaluate",
                        "--config",
                        pipeline["config"],
                        "--model",
                        str(trained / "cgan.json"),
                        "--data",
                        pipeline["data"],
                        "--out",
                        str(out),
                    ]
                )
                == 0
            )
            outs.append(out)
        for name in ("report.json", "per_code_kl.csv", "alpha_curve.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_sfe_model_evaluates(self, pipeline, calibrated, tmp_path):
        out = tmp_path / "sfe-eval"
        assert (
            main(
                [
                    "evaluate",
                    "--config",
                    pipeline["config"],
                    "--model",
                    str(calibrated / "sfe.json"),
                    "--data",
                    pipeline["data"],
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        report = json.loads((out / "report.json").read_text())
        assert np.isfinite(report["epsilon"])

    def test_pass_verdict_printed(self, pipeline, tmp_path, capsys):
        assert (
            main(
                [
                    "evaluate",
                    "--config",
                    pipeline["config"],
                    "--model",
                    pipeline["data"],
                    "--data",
                    pipeline["data"],
                    "--out",
                    str(tmp_path / "v"),
                ]
            )
            == 0
        )
        assert "pass" in capsys.readouterr().out


class TestReport:
    def test_tables_from_stored_report(self, pipeline, tmp_path, capsys):
        eval_out = tmp_path / "eval"
        main(
            [
                "evaluate",
                "--config",
                pipeline["config"],
                "--model",
                pipeline["data"],
                "--data",
                pipeline["data"],
                "--out",
                str(eval_out),
            ]
        )
        capsys.readouterr()
        report_out = tmp_path / "tables"
        assert (
            main(
                [
                    "report",
                    "--report",
                    str(eval_out / "report.json"),
                    "--out",
                    str(report_out),
                ]
            )
            == 0
        )
        assert (report_out / "per_code_kl.csv").exists()
        assert (report_out / "alpha_curve.csv").exists()
        out = capsys.readouterr().out
        assert "average KL" in out
        assert "coverage at alpha=2" in out


@pytest.mark.slow
class TestExtrapolate:
    def test_emits_paired_reports(self, pipeline, tmp_path, capsys):
        out = tmp_path / "extrap"
        assert (
            main(
                [
                    "extrapolate",
                    "--config",
                    pipeline["config"],
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        black = json.loads((out / "extrap_black_box.json").read_text())
        grey = json.loads((out / "extrap_hybrid.json").read_text())
        assert black["codes"] == grey["codes"]
        assert min(black["codes"]) == 320.0
        full = json.loads((out / "extrapolation.json").read_text())
        assert set(full["reports"]) == {"black-box", "hybrid"}
        text = capsys.readouterr().out
        assert "black-box held_out" in text
        assert "hybrid held_out" in text
