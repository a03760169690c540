import numpy as np
import pytest

from fedsense.cli import cli_main

MICRO_CFG = """
settings = 2
num_uavs = 2
data_per_uav = 16
signal_len = 64
fs_hz = 6.4e6
max_epochs = 1
workers = 1
"""


@pytest.fixture
def micro_config(tmp_path):
    path = tmp_path / "micro.cfg"
    path.write_text(MICRO_CFG)
    return str(path)


class TestUsage:
    def test_help_exits_zero(self, capsys):
        assert cli_main(["--help"]) == 0
        assert "fedsense" in capsys.readouterr().out

    def test_no_command_is_usage_error(self):
        assert cli_main([]) == 1

    def test_unknown_flag(self):
        assert cli_main(["run", "--frobnicate"]) == 1

    def test_unknown_command(self):
        assert cli_main(["explode"]) == 1

    def test_missing_config_file_is_runtime_error(self):
        assert cli_main(["run", "--config", "does_not_exist.cfg"]) == 2


class TestRun:
    def test_run_prints_rounds(self, micro_config, capsys):
        assert cli_main(["run", "--config", micro_config, "--seed", "3"]) == 0
        out = capsys.readouterr().out
        assert "round 1/2" in out
        assert "round 2/2" in out
        assert "headline accuracy" in out

    def test_run_saves_weights(self, micro_config, tmp_path, capsys):
        out_path = tmp_path / "global.ckpt"
        assert cli_main(["run", "--config", micro_config, "--out", str(out_path)]) == 0
        from fedsense.neuralnet import load_weights
        w = load_weights(out_path)
        assert w.param_count() == 32_971

    def test_env_seed_overrides_flag(self, micro_config, capsys, monkeypatch):
        monkeypatch.setenv("FEDSENSE_SEED", "11")
        cli_main(["run", "--config", micro_config, "--seed", "5"])
        with_env = capsys.readouterr().out
        monkeypatch.delenv("FEDSENSE_SEED")
        cli_main(["run", "--config", micro_config, "--seed", "11"])
        plain = capsys.readouterr().out
        assert with_env == plain

    def test_aggregator_flag(self, micro_config, capsys):
        assert cli_main(["run", "--config", micro_config, "--aggregator", "fedavg"]) == 0
        assert "aggregator=fedavg" in capsys.readouterr().out


class TestBaseline:
    def test_baseline_prints_mean(self, micro_config, capsys):
        assert cli_main(["baseline", "--config", micro_config]) == 0
        out = capsys.readouterr().out
        assert "uav 0 accuracy" in out
        assert "baseline mean accuracy" in out


class TestSweep:
    def test_sweep_writes_csv(self, micro_config, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        code = cli_main([
            "sweep", "--config", micro_config, "--axis", "num_uavs",
            "--values", "2", "--seeds", "0", "--out", str(out),
        ])
        assert code == 0
        text = out.read_text()
        assert text.startswith("axis,value,method,mean_accuracy,ci95,seeds\n")
        assert "num_uavs,2,fedsnr," in text

    def test_sweep_byte_identical_reruns(self, micro_config, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert cli_main([
                "sweep", "--config", micro_config, "--axis", "ptx",
                "--values", "5", "--seeds", "0", "--out", str(out),
            ]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_bad_axis_usage_error(self, micro_config):
        assert cli_main([
            "sweep", "--config", micro_config, "--axis", "nope",
            "--values", "1", "--seeds", "0",
        ]) == 1
