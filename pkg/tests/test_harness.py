"""Configuration, orchestration, CLI contract, and reproducibility tests."""

import os
import subprocess
import sys

import numpy as np
import pytest

from swarmscale.config import DEFAULTS, Scenario, echo_config, parse_config
from swarmscale.errors import AuditError, ConfigError
from swarmscale.harness import (
    build_setup,
    coefficient_csv_text,
    coefficient_table,
    compare,
    run,
)

MINIMAL = "[scenario]\nname = gaussian-blob\n"

SMALL = """
[scenario]
name = gaussian-blob
n_agents = 300
t_end = 1.0
seed = 3
sigma = 2.0

[grid]
nx = 32
ny = 32
xmin = -8
xmax = 8
ymin = -8
ymax = 8

[rates]
r_peak = 2.0

[output]
stride = 5
"""


class TestParseConfig:
    def test_minimal_binds_all_defaults(self):
        sc = parse_config(MINIMAL)
        assert sc == DEFAULTS
        echo = echo_config(sc)
        # the echo documents every key, including defaulted ones
        for key in ("beta", "zeta", "c_f", "c_p", "c_s", "lambda", "nu",
                    "r0", "epsilon", "nx", "boundary", "turn", "alignment",
                    "interaction", "stride", "leader_fraction", "seed"):
            assert f"{key} = " in echo

    def test_zeta_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[model]\nzeta = 1.5\n")
        with pytest.raises(ConfigError):
            parse_config("[model]\nzeta = 0.0\n")

    def test_unknown_key_is_hard_error(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("[model]\nbetaa = 1.0\n")
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config("[modell]\nbeta = 1.0\n")

    def test_speed_ordering_warns_but_parses(self):
        sc = parse_config("[model]\nc_f = 2.0\nc_s = 1.0\n")
        assert sc.c_f == 2.0
        assert any("c_f" in w for w in sc.warnings)

    def test_round_trip_identity(self):
        sc = parse_config(SMALL)
        again = parse_config(echo_config(sc))
        assert sc == again

    def test_leader_fraction_range(self):
        with pytest.raises(ConfigError):
            parse_config("[scenario]\nleader_fraction = 0.6\n")


class TestRun:
    def test_micro_counts_exact(self):
        sc = parse_config(SMALL)
        rep = run(sc, "micro")
        assert rep.audit["follower_residual"] == 0
        assert rep.audit["leader_residual"] == 0

    def test_parabolic_mass_residual(self):
        sc = parse_config(SMALL)
        rep = run(sc, "parabolic")
        assert rep.audit["follower_residual"] <= 1e-12
        assert rep.audit["leader_residual"] <= 1e-12

    def test_unknown_level(self):
        sc = parse_config(SMALL)
        with pytest.raises(ConfigError):
            run(sc, "quantum")

    def test_outputs_written(self, tmp_path):
        sc = parse_config(SMALL)
        out = tmp_path / "m"
        run(sc, "micro", out_dir=str(out))
        for name in ("report.csv", "audit.txt", "config_echo.ini",
                     "trajectory.csv"):
            assert (out / name).exists()

    def test_self_compare_zero_error(self):
        sc = parse_config(SMALL)
        res = compare(sc, "kinetic", "kinetic")
        assert res["rows"]
        for row in res["rows"]:
            assert row["l1"] == 0.0
            assert row["linf"] == 0.0


class TestCoefficientTable:
    def test_columns_and_digits(self):
        rows = coefficient_table(kappas=(0.0, 2.0), dimensions=(2,))
        text = coefficient_csv_text(rows)
        lines = text.strip().split("\n")
        assert lines[0] == "family,n,kappa,nu1,z,a0,a1,a3"
        vm = [ln for ln in lines if ln.startswith("von-mises")][0]
        nu1 = float(vm.split(",")[3])
        assert nu1 == pytest.approx(0.697774657964, abs=1e-9)
        # 12 significant digits survive the formatting
        assert len(vm.split(",")[3].replace(".", "").lstrip("0")) >= 11


def run_cli(*args, env_extra=None):
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join(
        [os.path.join(os.path.dirname(__file__), "..", "src"),
         env.get("PYTHONPATH", "")])
    if env_extra:
        env.update(env_extra)
    return subprocess.run([sys.executable, "-m", "swarmscale.cli", *args],
                          capture_output=True, text=True, env=env)


class TestCli:
    def test_validate_clean(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(SMALL)
        res = run_cli("validate", "--config", str(cfg))
        assert res.returncode == 0
        assert "beta = " in res.stdout

    def test_config_error_exit_2(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[model]\nzeta = 1.5\n")
        res = run_cli("validate", "--config", str(cfg))
        assert res.returncode == 2
        res = run_cli("run", "--config", str(tmp_path / "missing.ini"),
                      "--level", "micro")
        assert res.returncode == 2

    def test_solver_abort_exit_4(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(SMALL + "\n[scenario]\ndt = 50.0\n")
        # rewrite: merge dt into the scenario section
        cfg.write_text(SMALL.replace("seed = 3", "seed = 3\ndt = 50.0"))
        res = run_cli("run", "--config", str(cfg), "--level", "kinetic")
        assert res.returncode == 4

    def test_audit_failure_exit_3(self, monkeypatch, tmp_path):
        import swarmscale.cli as cli
        import swarmscale.harness as harness

        def boom(*a, **k):
            raise AuditError("forced")

        monkeypatch.setattr(harness, "run", boom)
        cfg = tmp_path / "c.ini"
        cfg.write_text(SMALL)
        code = cli.main(["run", "--config", str(cfg), "--level", "micro"])
        assert code == 3

    def test_run_and_coeffs_clean(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(SMALL)
        res = run_cli("run", "--config", str(cfg), "--level", "micro",
                      "--out", str(tmp_path / "out"))
        assert res.returncode == 0, res.stderr
        res = run_cli("coeffs", "--kappas", "0,1")
        assert res.returncode == 0
        assert res.stdout.startswith("family,n,kappa")


class TestReproducibility:
    def test_same_seed_bit_identical(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(SMALL)
        outs = []
        for tag in ("a", "b"):
            res = run_cli("run", "--config", str(cfg), "--level", "micro",
                          "--out", str(tmp_path / tag))
            assert res.returncode == 0, res.stderr
            outs.append({name: (tmp_path / tag / name).read_bytes()
                         for name in ("report.csv", "audit.txt",
                                      "trajectory.csv")})
        assert outs[0] == outs[1]

    def test_thread_count_invariance(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(SMALL)
        outs = []
        for tag, threads in (("t1", "1"), ("t4", "4")):
            res = run_cli("run", "--config", str(cfg), "--level", "kinetic",
                          "--out", str(tmp_path / tag),
                          "--threads", threads)
            assert res.returncode == 0, res.stderr
            outs.append({name: (tmp_path / tag / name).read_bytes()
                         for name in ("report.csv", "audit.txt")})
        assert outs[0] == outs[1]
