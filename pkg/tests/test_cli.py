import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from gflup.cli import main
from gflup.config import parse_value, read_config


class TestConfigParser:
    @pytest.mark.parametrize("text,expected", [
        ("3", 3),
        ("0.5", 0.5),
        ("true", True),
        ("false", False),
        ("'cv2'", "cv2"),
        ("cv2", "cv2"),
        ("[0.5, 0.7, 0.9]", [0.5, 0.7, 0.9]),
        ("['a', 'b']", ["a", "b"]),
        ("[]", []),
    ])
    def test_parse_value(self, text, expected):
        assert parse_value(text) == expected

    def test_read_config(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(
            "# run settings\n"
            "tau = 0.95\n"
            "scenario = 'cv2'\n"
            "seed = 7  # rng\n"
            "h2_s = [0.5, 0.9]\n"
        )
        cfg = read_config(path)
        assert cfg == {"tau": 0.95, "scenario": "cv2", "seed": 7, "h2_s": [0.5, 0.9]}


@pytest.fixture
def workdir(tmp_path):
    sim = tmp_path / "sim.toml"
    sim.write_text(
        "n_g = 100\nr = 2\nn_snp = 50\nblocks = 2\nfeats_per_block = 16\n"
        "h2_s = 0.9\nh2_y = 0.5\ncommunality = 0.8\nn_signal_factors = 1\n"
        "seed = 3\nn_train = 70\nsplit_seed = 4\n"
    )
    run = tmp_path / "run.toml"
    run.write_text("tau = 0.95\nk_folds = 5\nseed = 0\nscenario = 'cv2'\n")
    return tmp_path


class TestCliWorkflow:
    def test_simulate_fit_predict(self, workdir):
        runner = CliRunner()
        data_dir = workdir / "data"
        res = runner.invoke(
            main, ["simulate", "--config", str(workdir / "sim.toml"), "--out", str(data_dir)]
        )
        assert res.exit_code == 0, res.output
        for name in ("markers.tsv", "phenotypes.tsv", "truth.tsv",
                     "train_phenotypes.tsv", "test_phenotypes.tsv"):
            assert (data_dir / name).exists()

        model_dir = workdir / "model"
        res = runner.invoke(
            main,
            [
                "fit",
                "--pheno", str(data_dir / "train_phenotypes.tsv"),
                "--markers", str(data_dir / "markers.tsv"),
                "--config", str(workdir / "run.toml"),
                "--out", str(model_dir),
            ],
        )
        assert res.exit_code == 0, res.output
        assert (model_dir / "meta.tsv").exists()

        preds = workdir / "preds.tsv"
        res = runner.invoke(
            main,
            [
                "predict",
                "--model", str(model_dir),
                "--scenario", "cv2",
                "--test-pheno", str(data_dir / "test_phenotypes.tsv"),
                "--out", str(preds),
            ],
        )
        assert res.exit_code == 0, res.output
        table = pd.read_csv(preds, sep="\t")
        assert list(table.columns) == ["genotype", "prediction", "scenario"]
        assert len(table) == 30
        assert set(table["scenario"]) == {"cv2"}
        assert np.isfinite(table["prediction"]).all()

        # scenario can be overridden at predict time
        for scenario in ("cv1", "univariate"):
            res = runner.invoke(
                main,
                ["predict", "--model", str(model_dir), "--scenario", scenario,
                 "--out", str(workdir / f"preds_{scenario}.tsv")],
            )
            assert res.exit_code == 0, res.output
            out = pd.read_csv(workdir / f"preds_{scenario}.tsv", sep="\t")
            assert set(out["scenario"]) == {scenario}

    def test_benchmark(self, workdir):
        grid = workdir / "grid.toml"
        grid.write_text(
            "n_g = 40\nr = 2\nn_snp = 30\nblocks = 2\nfeats_per_block = 4\n"
            "n_signal_factors = 1\nseed = 1\nn_train = 30\n"
            "h2_s = [0.9]\nh2_y = [0.5]\ncommunality = [0.8]\n"
            "methods = ['univariate', 'oracle']\n"
        )
        out = workdir / "report.tsv"
        runner = CliRunner()
        res = runner.invoke(
            main, ["benchmark", "--grid", str(grid), "--replicates", "2", "--out", str(out)]
        )
        assert res.exit_code == 0, res.output
        report = pd.read_csv(out, sep="\t")
        assert set(report["method"]) == {"univariate", "oracle"}
        assert (report["n_reps"] == 2).all()
