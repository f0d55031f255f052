import json

import numpy as np
import pytest

from rabi_dimer.cli import (COLUMNS, DEFAULTS, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION,
                            ConfigError, main, parse_config, read_trajectory, run)

BASELINE = """\
# dissipative dimer, baseline parameters
J = 0.05
g = 0.3
A_L = 1.0
A_R = 1.0
alpha = 0.1
s = 0.5
omega_c = 1.0
N_bath = 60
M = 6
photons = 20
"""

# a few hundred steps of a small problem
TINY = """\
M = 2
N_bath = 2
photons = 1
t_max = 0.2
dt = 0.01
sample_every = 5
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParsing:
    def test_baseline_accepted(self):
        cfg = parse_config(BASELINE, "base.cfg")
        assert cfg["g"] == 0.3 and cfg["N_bath"] == 60 and cfg["M"] == 6
        model = cfg.model()
        assert model.n_bath == 60 and model.bath.alpha == 0.1

    def test_defaults_fill_missing_keys(self):
        cfg = parse_config("")
        assert all(cfg[k] == v[1] for k, v in DEFAULTS.items())

    def test_negative_coupling_names_key_and_line(self):
        with pytest.raises(ConfigError, match=r"bad\.cfg:3: key 'g'"):
            parse_config("J = 0.05\n\ng = -0.3\n", "bad.cfg")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key 'gamma'"):
            parse_config("gamma = 1\n", "x.cfg")

    def test_type_error(self):
        with pytest.raises(ConfigError, match="key 'M'"):
            parse_config("M = 2.5\n")

    def test_sweep_error_names_block(self):
        with pytest.raises(ConfigError, match=r"sweep\[1\]\.A_L"):
            parse_config("[sweep]\nA_L = 1, -5\n", "s.cfg")

    def test_bad_rcond(self):
        with pytest.raises(ConfigError, match="rcond"):
            parse_config("rcond = 1.5\n")

    def test_bath_frequencies_must_match(self):
        with pytest.raises(ConfigError, match="bath_frequencies"):
            parse_config("N_bath = 3\nbath_frequencies = [0.5, 1.5]\n")
        cfg = parse_config("N_bath = 2\nbath_frequencies = [0.5, 1.5]\n")
        assert np.allclose(cfg.model().modes.omega, [0.5, 1.5])

    def test_sweep_expansion(self):
        cfg = parse_config("[sweep]\nA_L = 1, 5, 10\n")
        runs = cfg.expand()
        assert [sub for sub, _ in runs] == ["A_L=1.0", "A_L=5.0", "A_L=10.0"]
        assert [c["A_L"] for _, c in runs] == [1.0, 5.0, 10.0]

    def test_grid_of_two_sweeps(self):
        cfg = parse_config("[sweep]\nA_L = 1, 10\n[sweep]\nOmega_L = 0.1, 0.5, 1\n")
        assert len(cfg.expand()) == 6

    def test_override(self):
        cfg = parse_config("g = 0.3\n", overrides=["g=0.1", "M=3"])
        assert cfg["g"] == 0.1 and cfg["M"] == 3

    def test_echo_round_trip(self):
        cfg = parse_config(BASELINE + "\n[sweep]\nOmega_L = 0.1, 0.5\n")
        again = parse_config(cfg.echo())
        assert again.values == cfg.values and again.sweeps == cfg.sweeps


class TestRuns:
    def test_single_run_files(self, tmp_path):
        out = tmp_path / "out"
        cfg = parse_config(TINY + f"output = {out}\n")
        assert run(cfg) == EXIT_OK
        traj = read_trajectory(out / "trajectory.dat")
        assert list(traj) == list(COLUMNS)
        assert np.allclose(traj["t"], [0.0, 0.05, 0.1, 0.15, 0.2])
        assert traj["N_L"][0] == pytest.approx(1.0)
        bath = np.loadtxt(out / "bath_populations.dat")
        assert bath.shape == (5, 3)
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["status"] == "ok" and meta["seed"] == 0 and not meta["oracle"]
        assert meta["solver"]["solves"] > 0
        assert parse_config(meta["config"]).values == cfg.values

    def test_sweep_writes_one_trajectory_per_point(self, tmp_path):
        out = tmp_path / "sweep"
        cfg = parse_config(TINY + f"output = {out}\n[sweep]\nA_L = 1, 5, 10\n")
        assert run(cfg) == EXIT_OK
        for sub in ("A_L=1.0", "A_L=5.0", "A_L=10.0"):
            assert (out / sub / "trajectory.dat").exists()
        manifest = json.loads((out / "sweep_manifest.json").read_text())
        assert [r["path"] for r in manifest["runs"]] == ["A_L=1.0", "A_L=5.0", "A_L=10.0"]
        assert all(r["status"] == "ok" for r in manifest["runs"])

    def test_identical_inputs_identical_outputs(self, tmp_path):
        texts = []
        for name in ("a", "b"):
            cfg = parse_config(TINY + f"output = {tmp_path / name}\n")
            run(cfg)
            texts.append((tmp_path / name / "trajectory.dat").read_bytes())
        assert texts[0] == texts[1]

    def test_oracle_mode(self, tmp_path):
        out = tmp_path / "oracle"
        cfg = parse_config(TINY + f"output = {out}\nmode = oracle\nn_max_photon = 12\n")
        assert run(cfg) == EXIT_OK
        exact = read_trajectory(out / "trajectory.dat")
        cfg = parse_config(TINY + f"output = {tmp_path / 'var'}\nM = 4\n")
        run(cfg)
        approx = read_trajectory(tmp_path / "var" / "trajectory.dat")
        assert np.allclose(exact["N_L"], approx["N_L"], atol=1e-3)
        assert json.loads((out / "metadata.json").read_text())["oracle"]

    def test_oracle_budget_refused_before_compute(self, tmp_path, capsys):
        path = write(tmp_path, "mode = oracle\nN_bath = 3\nn_max_photon = 14\nn_max_bath = 20\n"
                               f"max_dim = 100000\noutput = {tmp_path / 'big'}\n")
        assert main([str(path)]) == EXIT_VALIDATION
        assert "exceeds budget" in capsys.readouterr().err
        assert not (tmp_path / "big").exists()

    def test_abort_marks_outputs(self, tmp_path):
        out = tmp_path / "abort"
        path = write(tmp_path, "M = 4\nN_bath = 0\nphotons = 20\ndt = 0.5\nt_max = 5\n"
                               f"max_halvings = 0\noutput = {out}\n")
        assert main([str(path)]) == EXIT_NUMERICAL
        assert (out / "trajectory.dat.aborted").exists()
        assert not (out / "trajectory.dat").exists()
        assert (out / "checkpoint.txt").exists()
        assert json.loads((out / "metadata.json").read_text())["status"].startswith("aborted")


class TestMain:
    def test_validation_exit(self, tmp_path, capsys):
        assert main([str(write(tmp_path, "g = -1\n"))]) == EXIT_VALIDATION
        assert "key 'g'" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main([str(tmp_path / "nope.cfg")]) == EXIT_VALIDATION

    def test_overrides_and_out(self, tmp_path):
        path = write(tmp_path, TINY)
        out = tmp_path / "cli"
        assert main([str(path), "--set", "M=1", "--out", str(out)]) == EXIT_OK
        meta = json.loads((out / "metadata.json").read_text())
        assert "M = 1" in meta["config"]
