import numpy as np
import pytest

from spinqite.cli import main, parse_config_text, load_config, ConfigError

BASE_CONFIG = """
schema_version = 1

[model]
kind = tfim
n_sites = 2
j = 1.0
h = 1.0

[qite]
delta_tau = 0.1
n_steps = 3
domain_size = 2
regularizer = 0.0
shots = exact
unitary_mode = trotterized
initial_state = 01

[trace]
mode = full
betas = 0.0, 0.2, 0.4
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text(BASE_CONFIG)
    return path


class TestConfigParsing:
    def test_sections_and_values(self):
        data = parse_config_text(BASE_CONFIG)
        assert data[""]["schema_version"] == 1
        assert data["model"]["kind"] == "tfim"
        assert data["qite"]["initial_state"] == "01"
        assert data["trace"]["betas"] == [0.0, 0.2, 0.4]

    def test_missing_schema_version(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("[model]\nkind = tfim\nn_sites = 2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_beta_grid_must_align(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text(BASE_CONFIG.replace("betas = 0.0, 0.2, 0.4", "betas = 0.3"))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_defaults_match_reported_settings(self, config_path):
        cfg = load_config(config_path)
        assert cfg.regularizer == 0.0  # overridden by file
        assert cfg.calibration_shots == 1000
        assert cfg.qite_rounds == 3 and cfg.time_rounds == 5
        assert cfg.target_fidelity == 0.999

    def test_bad_config_exit_code(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("schema_version = 1\n[model]\nkind = nonsense\nn_sites = 2\n")
        rc = main(["model-info", "--config", str(path)])
        assert rc == 2


class TestCommands:
    def test_qite_csv_and_trajectory(self, config_path, tmp_path):
        out = tmp_path / "run"
        rc = main(["qite", "--config", str(config_path), "--out", str(out)])
        assert rc == 0
        lines = (out / "qite.csv").read_text().splitlines()
        assert lines[0].startswith("# spinqite-csv v1 qite")
        assert lines[1] == "step,tau,energy,c,residual,exact_energy"
        assert len(lines) == 2 + 3 + 1  # comment, header, 3 steps, final row
        assert (out / "trajectory.txt").exists()

    def test_qite_zero_steps_single_row(self, config_path, tmp_path):
        text = config_path.read_text().replace("n_steps = 3", "n_steps = 0")
        path = config_path.parent / "zero.txt"
        path.write_text(text)
        out = tmp_path / "zero_run"
        assert main(["qite", "--config", str(path), "--out", str(out)]) == 0
        lines = (out / "qite.csv").read_text().splitlines()
        assert len(lines) == 3  # comment, header, initial-energy row
        assert lines[2].startswith("0,0,")

    def test_thermal_includes_oracle_column(self, config_path, tmp_path):
        out = tmp_path / "thermal"
        rc = main(["thermal", "--config", str(config_path), "--out", str(out)])
        assert rc == 0
        lines = (out / "thermal_energy.csv").read_text().splitlines()
        assert lines[1] == "beta,value,variance,exact_value"
        row0 = lines[2].split(",")
        assert float(row0[0]) == 0.0
        assert abs(float(row0[1]) - float(row0[3])) < 1e-9

    def test_byte_identical_reruns(self, config_path, tmp_path):
        text = config_path.read_text().replace("shots = exact", "shots = 500")
        path = config_path.parent / "sampled.txt"
        path.write_text(text)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = main(
                ["thermal", "--config", str(path), "--seed", "7", "--out", str(out)]
            )
            assert rc == 0
            outs.append((out / "thermal_energy.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_seed_changes_sampled_output(self, config_path, tmp_path):
        text = config_path.read_text().replace("shots = exact", "shots = 500")
        path = config_path.parent / "sampled.txt"
        path.write_text(text)
        blobs = []
        for seed in ("1", "2"):
            out = tmp_path / f"s{seed}"
            main(["thermal", "--config", str(path), "--seed", seed, "--out", str(out)])
            blobs.append((out / "thermal_energy.csv").read_bytes())
        assert blobs[0] != blobs[1]

    def test_corr_and_spectrum(self, config_path, tmp_path):
        text = config_path.read_text().replace(
            "betas = 0.0, 0.2, 0.4", "betas = 0.2"
        ) + "\n[time]\nmode = kak\nn_t = 16\nt_max = 3.141592653589793\n"
        path = config_path.parent / "corr.txt"
        path.write_text(text)
        out = tmp_path / "corr"
        assert main(["corr", "--config", str(path), "--out", str(out)]) == 0
        corr_csv = out / "corr_beta0.2.csv"
        lines = corr_csv.read_text().splitlines()
        assert lines[1] == "t,re,im,re_err,im_err,exact_re,exact_im"
        first = lines[2].split(",")
        assert float(first[1]) == pytest.approx(1.0, abs=1e-9)  # t = 0 real part
        assert (
            main(
                [
                    "spectrum",
                    "--config",
                    str(path),
                    "--out",
                    str(out),
                    "--series",
                    str(corr_csv),
                ]
            )
            == 0
        )
        spec_lines = (out / "spectrum_beta0.2.csv").read_text().splitlines()
        assert spec_lines[1] == "omega,s_re,s_im,s_abs2,exact_abs2"
        assert len(spec_lines) == 2 + 16

    def test_kak_command(self, tmp_path):
        u = np.eye(4, dtype=complex)
        target = tmp_path / "u.npy"
        np.save(target, u)
        rc = main(["kak", "--target", str(target), "--out", str(tmp_path)])
        assert rc == 0
        assert "cnots = 0" in (tmp_path / "kak.txt").read_text()

    def test_recompile_command(self, tmp_path):
        target = tmp_path / "u.npy"
        np.save(target, np.eye(4, dtype=complex))
        rc = main(
            [
                "recompile",
                "--target",
                str(target),
                "--rounds",
                "0",
                "--family",
                "ry",
                "--out",
                str(tmp_path),
            ]
        )
        assert rc == 0
        text = (tmp_path / "recompile.txt").read_text()
        assert "reached = True" in text

    def test_calibrate_requires_noise(self, config_path, tmp_path):
        rc = main(
            ["calibrate", "--config", str(config_path), "--out", str(tmp_path / "c")]
        )
        assert rc == 2

    def test_calibrate_with_noise_flag(self, config_path, tmp_path):
        out = tmp_path / "calib"
        rc = main(
            [
                "calibrate",
                "--config",
                str(config_path),
                "--noise",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        assert (out / "calibration.json").exists()

    def test_model_info_runs(self, config_path, capsys):
        assert main(["model-info", "--config", str(config_path)]) == 0
        out = capsys.readouterr().out
        assert "Z0Z1" in out
