"""
Tests de la ligne de commande: enchaînement complet, configuration et codes de sortie.
"""

import json

import pytest
from loguru import logger

from app.config import Settings
from app.main import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, build_parser, config_from_args, main
from app.schemas.cli import FULL_ARCHITECTURE, build_cli_config, nest_dotted
from app.services.training_service import load_checkpoint


TINY_TRAIN = [
    "--epochs", "1", "--batch-size", "4", "--hidden-size", "8", "--num-layers", "1",
    "--num-heads", "2", "--dropout", "0", "--seed", "3",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Jeu de 8 + 4 échantillons et un modèle entraîné une époque."""
    root = tmp_path_factory.mktemp("cli")
    data, runs = root / "data", root / "runs"
    assert main(["generate", "--n-train", "8", "--n-test", "4", "--seed", "1",
                 "--l-in", "16", "--l-out", "16", "--out", str(data)]) == EXIT_OK
    assert main(["train", "--data", str(data), "--out", str(runs), *TINY_TRAIN]) == EXIT_OK
    return data, runs


class TestGenerate:
    def test_files(self, workspace):
        data, _ = workspace
        assert len((data / "train.csv").read_text().splitlines()) == 9
        assert len((data / "test.csv").read_text().splitlines()) == 5
        manifest = json.loads((data / "manifest.json").read_text())
        assert manifest["seed"] == 1
        assert manifest["sigma_y_ranges"]["train"] == [20.98, 1907.53]
        assert manifest["hardening_range"] == [0.068, 0.4046]
        assert manifest["config"]["generation"]["n_train"] == 8

    def test_identical_files(self, tmp_path):
        for name in ("a", "b"):
            assert main(["generate", "--n-train", "8", "--n-test", "2", "--seed", "1",
                         "--l-in", "8", "--l-out", "8", "--out", str(tmp_path / "same")]) == EXIT_OK
            (tmp_path / name).write_bytes((tmp_path / "same" / "train.csv").read_bytes())
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


class TestTrain:
    def test_checkpoint_is_loadable(self, workspace):
        _, runs = workspace
        ckpt = load_checkpoint(runs / "proposed.ckpt")
        assert ckpt.config.gaf_enabled
        assert ckpt.run_config["command"] == "train"
        assert ckpt.run_config["train"]["epochs"] == 1
        assert (runs / "proposed_loss.csv").exists()

    def test_same_config_same_checkpoint(self, workspace):
        data, runs = workspace
        before = (runs / "proposed.ckpt").read_bytes()
        assert main(["train", "--data", str(data), "--out", str(runs), *TINY_TRAIN]) == EXIT_OK
        assert (runs / "proposed.ckpt").read_bytes() == before

    def test_baseline(self, workspace, tmp_path):
        data, _ = workspace
        assert main(["train", "--data", str(data), "--out", str(tmp_path), "--baseline-1d", *TINY_TRAIN]) == EXIT_OK
        assert load_checkpoint(tmp_path / "1d-baseline.ckpt").config.gaf_enabled is False

    def test_paper_arch_with_explicit_overrides(self, workspace, tmp_path):
        data, _ = workspace
        code = main(["train", "--data", str(data), "--out", str(tmp_path), "--paper-arch", *TINY_TRAIN])
        assert code == EXIT_OK
        config = load_checkpoint(tmp_path / "proposed.ckpt").config
        assert (config.hidden_size, config.num_layers) == (8, 1)

    def test_missing_data(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path), *TINY_TRAIN]) == EXIT_RUNTIME


class TestEvaluateAndFriends:
    def test_evaluate_prints_aggregates(self, workspace, capsys):
        data, runs = workspace
        code = main(["evaluate", "--data", str(data), "--checkpoint", str(runs / "proposed.ckpt"),
                     "--out", str(runs), "--plot-extremes"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        for key in ("max_mae", "min_mae", "max_r2", "min_r2"):
            assert key in out
        report = json.loads((runs / "report_proposed_test.json").read_text())
        assert report["config"]["command"] == "evaluate"
        assert len(list((runs / "plots").glob("*.svg"))) == 2

    def test_predict(self, workspace):
        data, runs = workspace
        code = main(["predict", "--data", str(data), "--checkpoint", str(runs / "proposed.ckpt"),
                     "--index", "1", "--out", str(runs)])
        assert code == EXIT_OK
        lines = (runs / "prediction_test_0001.csv").read_text().splitlines()
        assert lines[0] == "strain,pred_stress"
        assert len(lines) == 17

    def test_predict_index_out_of_range(self, workspace):
        data, runs = workspace
        code = main(["predict", "--data", str(data), "--checkpoint", str(runs / "proposed.ckpt"),
                     "--index", "40", "--out", str(runs)])
        assert code == EXIT_RUNTIME

    def test_predict_without_checkpoint(self, workspace):
        data, runs = workspace
        assert main(["predict", "--data", str(data), "--index", "0", "--out", str(runs)]) == EXIT_USAGE

    def test_corrupted_checkpoint(self, workspace, tmp_path):
        data, runs = workspace
        broken = tmp_path / "broken.ckpt"
        broken.write_bytes((runs / "proposed.ckpt").read_bytes()[:-1])
        assert main(["predict", "--data", str(data), "--checkpoint", str(broken), "--index", "0"]) == EXIT_RUNTIME

    def test_checkpoint_without_config(self, workspace, tmp_path):
        data, runs = workspace
        blob = (runs / "proposed.ckpt").read_bytes()
        meta_size = int.from_bytes(blob[8:12], "little")
        meta = json.loads(blob[12:12 + meta_size])
        del meta["config"]
        body = json.dumps(meta).encode("utf-8")
        broken = tmp_path / "no_config.ckpt"
        broken.write_bytes(blob[:8] + len(body).to_bytes(4, "little") + body + blob[12 + meta_size:])
        assert main(["predict", "--data", str(data), "--checkpoint", str(broken), "--index", "0"]) == EXIT_RUNTIME

    def test_export_gaf(self, workspace, tmp_path):
        data, _ = workspace
        assert main(["export-gaf", "--data", str(data), "--index", "2", "--out", str(tmp_path)]) == EXIT_OK
        pgm = (tmp_path / "gaf" / "test" / "gaf_0002.pgm").read_bytes()
        header = b"P5\n16 16\n255\n"
        assert pgm.startswith(header) and len(pgm) == len(header) + 256
        assert (tmp_path / "gaf" / "test" / "gaf_0002.csv").exists()

    def test_export_gaf_limit(self, workspace, tmp_path):
        data, _ = workspace
        assert main(["export-gaf", "--data", str(data), "--split", "train", "--limit", "3",
                     "--out", str(tmp_path)]) == EXIT_OK
        assert len(list((tmp_path / "gaf" / "train").glob("*.pgm"))) == 3
        assert json.loads((tmp_path / "gaf" / "train" / "export.json").read_text())["samples"] == [0, 1, 2]

    def test_plot(self, workspace, tmp_path):
        data, runs = workspace
        code = main(["plot", "--data", str(data), "--checkpoint", str(runs / "proposed.ckpt"),
                     "--index", "0", "--out", str(tmp_path)])
        assert code == EXIT_OK
        stems = sorted(p.name for p in (tmp_path / "plots").iterdir())
        assert stems == ["proposed_test_0000.csv", "proposed_test_0000.json", "proposed_test_0000.svg"]

    def test_plot_dataset_and_describe(self, workspace, tmp_path):
        data, _ = workspace
        assert main(["plot-dataset", "--data", str(data), "--out", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "dataset_test.png").exists()
        assert main(["describe", "--data", str(data), "--out", str(tmp_path)]) == EXIT_OK
        description = json.loads((tmp_path / "dataset_description.json").read_text())
        assert [s["num_samples"] for s in description["splits"]] == [8, 4]

    def test_compare(self, workspace, tmp_path, capsys):
        data, runs = workspace
        main(["evaluate", "--data", str(data), "--checkpoint", str(runs / "proposed.ckpt"), "--out", str(runs)])
        report = str(runs / "report_proposed_test.json")
        assert main(["compare", report, report, "--out", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "comparison.csv").exists()
        assert "proposed" in capsys.readouterr().out


class TestConfiguration:
    def test_precedence(self):
        config = build_cli_config(
            file_data={"train": {"epochs": 3, "hidden_size": 16, "lr": 0.01}},
            overrides={"train": {"epochs": 5}},
            full_arch=True,
        )
        assert config.train.epochs == 5
        assert config.train.lr == 0.01
        assert config.train.hidden_size == FULL_ARCHITECTURE["hidden_size"]
        assert config.train.num_layers == 5

    @pytest.mark.parametrize("flag", ["--paper-arch", "--full-arch"])
    def test_paper_arch_flag(self, flag):
        args = build_parser().parse_args(["train", flag, "--epochs", "2"])
        config = config_from_args(args)
        assert config.train.hidden_size == 128
        assert config.train.num_layers == 5
        assert config.train.num_heads == 4
        assert config.train.epochs == 2

    def test_desk_defaults(self):
        config = build_cli_config()
        assert (config.train.hidden_size, config.train.num_layers) == (64, 2)
        assert config.max_train_samples == 200

    def test_environment_only_sets_log_level(self, monkeypatch, tmp_path):
        monkeypatch.setenv("DATA_DIR", str(tmp_path / "from_env"))
        monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "from_env"))
        monkeypatch.setenv("LOG_FILE", str(tmp_path / "from_env.log"))
        monkeypatch.setenv("LOG_LEVEL", "DEBUG")
        config = build_cli_config()
        assert (config.data_dir, config.output_dir) == ("data", "runs")
        assert Settings().LOG_LEVEL == "DEBUG"
        assert set(Settings.model_fields) == {"LOG_LEVEL"}

    def test_log_file_option(self, tmp_path):
        log_file = tmp_path / "logs" / "poincon.log"
        code = main(["generate", "--n-train", "2", "--n-test", "1", "--l-in", "8", "--l-out", "8",
                     "--out", str(tmp_path / "data"), "--log-file", str(log_file)])
        assert code == EXIT_OK
        logger.remove()
        assert log_file.read_text(encoding="utf-8")

    def test_nest_dotted(self):
        assert nest_dotted({"train.epochs": 3, "data_dir": "d", "train.lr": None}) == {
            "train": {"epochs": 3}, "data_dir": "d",
        }

    def test_config_file(self, workspace, tmp_path):
        data, _ = workspace
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"train": {"epochs": 1, "hidden_size": 8, "num_layers": 1,
                                              "num_heads": 2, "dropout": 0.0}}))
        assert main(["train", "--config", str(path), "--data", str(data), "--out", str(tmp_path)]) == EXIT_OK
        assert load_checkpoint(tmp_path / "proposed.ckpt").config.hidden_size == 8

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"train": {"epoch": 3}}))
        assert main(["generate", "--config", str(path), "--out", str(tmp_path)]) == EXIT_USAGE

    def test_unreadable_config(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        assert main(["generate", "--config", str(path), "--out", str(tmp_path)]) == EXIT_USAGE
        assert main(["generate", "--config", str(tmp_path / "absent.json")]) == EXIT_USAGE

    def test_usage_errors(self, tmp_path):
        assert main([]) == EXIT_USAGE
        assert main(["generate", "--bogus"]) == EXIT_USAGE
        assert main(["train", "--epochs", "0", "--out", str(tmp_path)]) == EXIT_USAGE
        assert main(["train", "--teacher-forcing", "1.5", "--out", str(tmp_path)]) == EXIT_USAGE
