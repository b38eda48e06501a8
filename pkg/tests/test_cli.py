import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from thgnls import cli
from thgnls.grid import make_grid, write_nlsf

BASE = {"n": 1, "sigma": 1 / 3, "mu": 1.0, "omega": 0.0, "points": 256, "half_width": 16.0}


def config(command, **extra):
    return {"command": command, **BASE, **extra}


def write_config(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestParse:
    def test_defaults(self):
        cfg = cli.parse_config(json.dumps(config("groundstate")))
        assert cfg.tol == 1e-8
        assert cfg.max_iter == 50_000
        assert cfg.seed == 0 and cfg.stepper is None

    def test_points_named(self):
        with pytest.raises(cli.ConfigError, match="points"):
            cli.parse_config(json.dumps(config("groundstate") | {"points": 100}))

    def test_unknown_key(self):
        with pytest.raises(cli.ConfigError, match="foo"):
            cli.parse_config(json.dumps(config("groundstate", foo=1)))

    def test_nested_unknown_key(self):
        bad = config("evolve", init={"kind": "zero"}, stepper={"dt": 0.01, "t_end": 0.1, "bar": 2})
        with pytest.raises(cli.ConfigError, match="bar"):
            cli.parse_config(json.dumps(bad))

    def test_syntax_position(self):
        with pytest.raises(cli.ConfigError, match="line 1, column"):
            cli.parse_config('{"command": ')

    def test_command_requirements(self):
        with pytest.raises(cli.ConfigError, match="stepper"):
            cli.parse_config(json.dumps(config("evolve", init={"kind": "zero"})))
        with pytest.raises(cli.ConfigError, match="init"):
            cli.parse_config(json.dumps(config("criteria")))

    def test_missing_file(self, tmp_path):
        cfg = config("criteria", init={"kind": "file", "path": str(tmp_path / "nope.nlsf")})
        with pytest.raises(cli.ConfigError, match="does not exist"):
            cli.parse_config(json.dumps(cfg))

    def test_init_variants(self):
        cfg = cli.parse_config(
            json.dumps(config("criteria", init={"kind": "gaussian", "amplitudes": [0.1, 0.2], "widths": [1, 2]}))
        )
        assert cfg.init.widths == (1.0, 2.0)
        with pytest.raises(cli.ConfigError, match="widths"):
            cli.parse_config(json.dumps(config("criteria", init={"kind": "gaussian", "widths": [0, 1]})))
        with pytest.raises(cli.ConfigError):
            cli.parse_config(json.dumps(config("criteria", init={"kind": "sphere"})))


class TestRun:
    def test_evolve_zero(self, tmp_path):
        cfg = cli.parse_config(
            json.dumps(config("evolve", init={"kind": "zero"}, stepper={"dt": 0.01, "t_end": 0.1}))
        )
        assert cli.run(cfg, tmp_path) == cli.EXIT_OK
        rows = list(csv.DictReader(io.StringIO((tmp_path / "diagnostics.csv").read_text())))
        assert len(rows) == 11
        for row in rows:
            for key in ("M", "E", "K", "N", "V"):
                assert float(row[key]) == 0.0
        report = json.loads((tmp_path / "evolution.json").read_text())
        assert report["outcome"] == "Completed"
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["exit_status"] == 0
        assert manifest["config"]["command"] == "evolve"
        assert {"numpy", "scipy", "python"} <= set(manifest["versions"])
        assert "wall_time_seconds" in manifest

    def test_groundstate_action(self, tmp_path):
        cfg = cli.parse_config(json.dumps(config("groundstate") | {"points": 512}))
        assert cli.run(cfg, tmp_path) == cli.EXIT_OK
        files = sorted(p.name for p in tmp_path.iterdir())
        summary = json.loads((tmp_path / "groundstate.json").read_text())
        assert summary["converged"]
        # closed form for kappa = 1: S = 4/27
        assert summary["action"] == pytest.approx(4 / 27, rel=1e-8)
        assert "manifest.json" in files

    def test_spectrum(self, tmp_path):
        cfg = cli.parse_config(json.dumps(config("spectrum") | {"points": 1024, "half_width": 32.0}))
        assert cli.run(cfg, tmp_path) == cli.EXIT_OK
        rep = json.loads((tmp_path / "spectrum.json").read_text())
        assert rep["negative_count"] == 1
        assert rep["verdict"] == "Stable"

    def test_spectrum_wrong_dimension(self, tmp_path):
        cfg = cli.parse_config(json.dumps(config("spectrum") | {"n": 2, "points": 32, "half_width": 8.0}))
        assert cli.run(cfg, tmp_path) == cli.EXIT_VALIDATION
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["exit_status"] == cli.EXIT_VALIDATION and manifest["error"]

    def test_nonconvergence_code(self, tmp_path):
        cfg = cli.parse_config(json.dumps(config("groundstate", max_iter=1, tol=1e-14) | {"mu": 2.0, "sigma": 1.0}))
        assert cli.run(cfg, tmp_path) == cli.EXIT_CONVERGENCE
        assert (tmp_path / "groundstate_failed.json").exists()

    def test_io_failure(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        cfg = cli.parse_config(json.dumps(config("groundstate")))
        assert cli.run(cfg, blocker / "sub") == cli.EXIT_IO

    def test_gn_constant(self, tmp_path):
        cfg = config("gn-constant", samples=50, seed=3) | {"sigma": 3.0, "mu": 9.0}
        assert cli.run(cli.parse_config(json.dumps(cfg)), tmp_path) == cli.EXIT_OK
        rep = json.loads((tmp_path / "gn_constant.json").read_text())
        # the line minimizer is a coupled pair, above the semitrivial 3^(-3/2)/4
        assert rep["C_GN"] == pytest.approx(0.0489021, rel=1e-6)
        assert rep["ground_state_ratio"] == pytest.approx(1.0, rel=1e-9)
        assert rep["violations"] == 0 and rep["max_sample_ratio"] <= 1.0

    def test_criteria_planar(self, tmp_path):
        cfg = {
            "command": "criteria", "n": 2, "sigma": 3.0, "mu": 9.0, "points": 64, "half_width": 8.0,
            "init": {"kind": "zero"},
        }
        assert cli.run(cli.parse_config(json.dumps(cfg)), tmp_path) == cli.EXIT_OK
        lines = (tmp_path / "criteria.jsonl").read_text().splitlines()
        verdicts = {json.loads(x)["id"]: json.loads(x)["verdict"] for x in lines}
        assert "Global" in verdicts.values()

    def test_file_init_round_trip(self, tmp_path):
        g = make_grid(1, 256, 16.0)
        u = 0.1 * np.exp(-g.x1d**2) + 0j
        w = 0.2 * np.exp(-g.x1d**2) + 0j
        write_nlsf(tmp_path / "init.nlsf", g, [u, w])
        cfg = config(
            "evolve",
            init={"kind": "file", "path": str(tmp_path / "init.nlsf")},
            stepper={"dt": 0.01, "t_end": 0.05, "snapshot_stride": 5},
        )
        out = tmp_path / "out"
        assert cli.run(cli.parse_config(json.dumps(cfg)), out) == cli.EXIT_OK
        assert len(list((out / "snapshots").iterdir())) >= 1

    def test_file_init_grid_mismatch(self, tmp_path):
        g = make_grid(1, 128, 16.0)
        write_nlsf(tmp_path / "init.nlsf", g, [g.zeros(complex), g.zeros(complex)])
        cfg = config(
            "evolve", init={"kind": "file", "path": str(tmp_path / "init.nlsf")}, stepper={"dt": 0.01, "t_end": 0.05}
        )
        assert cli.run(cli.parse_config(json.dumps(cfg)), tmp_path / "out") == cli.EXIT_VALIDATION

    def test_virial_check(self, tmp_path):
        cfg = config(
            "virial-check",
            init={"kind": "gaussian", "amplitudes": [0.3, 0.4], "widths": [1.0, 1.5]},
            stepper={"dt": 1e-3, "t_end": 0.2, "output_stride": 10},
        ) | {"sigma": 3.0, "mu": 9.0}
        assert cli.run(cli.parse_config(json.dumps(cfg)), tmp_path) == cli.EXIT_OK
        rep = json.loads((tmp_path / "virial.json").read_text())
        assert rep["virial"]["samples"] > 0
        assert rep["virial"]["max_relative_mismatch"] < 1e-3


def test_determinism(tmp_path):
    cfg = cli.parse_config(
        json.dumps(
            config(
                "evolve",
                init={"kind": "gaussian", "amplitudes": [0.5, 0.8], "widths": [1.0, 0.7]},
                stepper={"dt": 1e-3, "t_end": 0.05, "output_stride": 5},
            )
        )
    )
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(cfg, a) == cli.run(cfg, b) == cli.EXIT_OK
    for name in ("diagnostics.csv", "evolution.json", "final.nlsf"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    ma.pop("wall_time_seconds"), mb.pop("wall_time_seconds")
    assert ma == mb


def test_gn_seeded_determinism(tmp_path):
    cfg = cli.parse_config(json.dumps(config("gn-constant", samples=20, seed=7) | {"sigma": 3.0, "mu": 9.0}))
    cli.run(cfg, tmp_path / "a")
    cli.run(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "gn_constant.json").read_bytes() == (tmp_path / "b" / "gn_constant.json").read_bytes()


class TestMain:
    def test_command_mismatch(self, tmp_path):
        path = write_config(tmp_path, config("groundstate"))
        assert cli.main(["spectrum", "--config", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_VALIDATION

    def test_missing_config(self, tmp_path):
        assert cli.main(["groundstate", "--config", str(tmp_path / "none.json")]) == cli.EXIT_IO

    def test_invalid_config(self, tmp_path):
        path = write_config(tmp_path, config("groundstate", points=100))
        assert cli.main(["groundstate", "--config", str(path)]) == cli.EXIT_VALIDATION

    def test_console_entry(self, tmp_path):
        path = write_config(tmp_path, config("groundstate"))
        out = tmp_path / "o"
        proc = subprocess.run(
            [sys.executable, "-m", "thgnls.cli", "groundstate", "--config", str(path), "--out", str(out)],
            capture_output=True,
            text=True,
            timeout=300,
        )
        assert proc.returncode == 0, proc.stderr
        assert (out / "manifest.json").exists()
