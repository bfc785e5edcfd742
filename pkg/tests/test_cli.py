"""Command line layer: configs, artifacts, figures, reproducibility."""

import json

import numpy as np
import pytest

from execlab.cli import (ExperimentConfig, default_out_dir, main,
                         reproduce_figure, run, write_csv, OUTPUT_DIR_ENV)


class TestWriteCsv:
    def test_roundtrip(self, tmp_path):
        p = tmp_path / "a.csv"
        t = np.linspace(0.0, 1.0, 7)
        y = np.sin(t) / 3.0
        write_csv(p, ["t", "y"], [t, y])
        lines = p.read_text().splitlines()
        assert lines[0] == "t,y"
        back = np.array([[float(v) for v in ln.split(",")]
                         for ln in lines[1:]])
        assert np.array_equal(back[:, 0], t)
        assert np.array_equal(back[:, 1], y)

    def test_column_length_checked(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / "b.csv", ["a", "b"],
                      [np.zeros(3), np.zeros(4)])


class TestExperimentConfig:
    def test_unknown_tag_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(tag="nope", model={}, n_steps=10)

    def test_positive_sizes_required(self):
        with pytest.raises(ValueError):
            ExperimentConfig(tag="ow_value", model={}, n_steps=0)

    def test_from_file(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "tag": "ow_value",
            "model": {"T": 1.0, "gamma0": 1.0, "pieces": [
                {"t_from": 0.0, "rho": 0.5, "mu": 0.0, "sigma": 0.0}]},
            "n_steps": 100, "x": 1.0,
            "out_dir": str(tmp_path),
        }))
        cfg = ExperimentConfig.from_file(cfg_path)
        assert cfg.tag == "ow_value" and cfg.n_steps == 100

    def test_output_dir_env_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
        assert default_out_dir() == str(tmp_path)
        cfg = ExperimentConfig(tag="ow_value", model={}, n_steps=10)
        assert cfg.out_dir == str(tmp_path)


class TestRun:
    def ow_config(self, tmp_path, n_steps=200):
        return ExperimentConfig(
            tag="ow_value",
            model={"T": 10.0, "gamma0": 1.0, "pieces": [
                {"t_from": 0.0, "rho": 0.5, "mu": 0.0, "sigma": 0.0}]},
            n_steps=n_steps, x=1.0, d=0.0, out_dir=str(tmp_path))

    def test_ow_value_summary(self, tmp_path):
        summary = run(self.ow_config(tmp_path))
        assert summary["pass"] is True
        assert summary["results"]["value"] == pytest.approx(1.0 / 7.0)
        for r in summary["results"]["error_ratios"]:
            assert 1.5 <= r <= 2.5
        assert (tmp_path / "ow_value_summary.json").exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        run(self.ow_config(tmp_path))
        first = (tmp_path / "ow_value_summary.json").read_bytes()
        run(self.ow_config(tmp_path))
        assert (tmp_path / "ow_value_summary.json").read_bytes() == first

    def test_naive_brownian_small(self, tmp_path):
        cfg = ExperimentConfig(
            tag="naive_brownian",
            model={"T": 1.0, "gamma0": 1.0, "pieces": [
                {"t_from": 0.0, "rho": 0.05, "mu": 0.0, "sigma": 0.0}]},
            n_steps=200, n_paths=2000, seed=4, nu=2.0, out_dir=str(tmp_path))
        summary = run(cfg)
        assert summary["pass"] is True
        assert summary["results"]["closed_form"] < 0.0


class TestFigures:
    def test_jump_figure_deviation_levels(self, tmp_path):
        path = reproduce_figure("jump", tmp_path, n_steps=500)
        rows = np.loadtxt(path, delimiter=",", skiprows=1)
        header = path.read_text().splitlines()[0].split(",")
        d = rows[:, header.index("D_star")]
        t = rows[:, header.index("t")]
        # two constant deviation levels separated by the interior block
        before = d[(t > 0.0) & (t < 4.0 - 1e-9)]
        after = d[(t > 4.0 + 1e-9) & (t < 5.0 - 1e-9)]
        assert np.ptp(before) <= 1e-8 * abs(before[0])
        assert np.ptp(after) <= 1e-8 * abs(after[0])
        assert abs(after[0]) > abs(before[0])

    def test_negres_figure_flat_deviation(self, tmp_path):
        path = reproduce_figure("negres", tmp_path, n_steps=500)
        rows = np.loadtxt(path, delimiter=",", skiprows=1)
        d = rows[:-1, 2]  # D_star column, pre-terminal
        assert np.ptp(d) <= 1e-8 * abs(d[0])

    def test_byte_identical_reruns(self, tmp_path):
        a = reproduce_figure("lambertw", tmp_path / "a", seed=3, n_steps=400)
        b = reproduce_figure("lambertw", tmp_path / "b", seed=3, n_steps=400)
        assert a.read_bytes() == b.read_bytes()
        c = reproduce_figure("lambertw", tmp_path / "c", seed=4, n_steps=400)
        assert c.read_bytes() != a.read_bytes()

    def test_unknown_figure_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            reproduce_figure("spiral", tmp_path)


class TestMain:
    def test_figure_subcommand(self, tmp_path, capsys):
        rc = main(["figure", "jump", "--out", str(tmp_path), "--seed", "1"])
        assert rc == 0
        out = capsys.readouterr().out.strip()
        assert out.endswith("figure_jump.csv")
        assert (tmp_path / "figure_jump.csv").exists()

    def test_run_subcommand(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "tag": "ow_value",
            "model": {"T": 10.0, "gamma0": 1.0, "pieces": [
                {"t_from": 0.0, "rho": 0.5, "mu": 0.0, "sigma": 0.0}]},
            "n_steps": 100, "x": 1.0, "out_dir": str(tmp_path)}))
        rc = main(["run", "--config", str(cfg_path)])
        assert rc == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed["pass"] is True
