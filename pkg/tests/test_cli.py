import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from pulseforge import cli
from pulseforge.errors import ValidationError
from pulseforge.trajectory import PhaseParameterization, pulse_area


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestGrid:
    def test_inclusive(self):
        g = cli.parse_grid("-0.5:0.5:0.005", "alpha")
        assert len(g) == 201 and g[0] == -0.5 and g[-1] == 0.5

    def test_rounded_step_count(self):
        # 1 / 0.3 = 3.33 steps rounds to 3: endpoints are kept exactly
        g = cli.parse_grid("0:1:0.3", "alpha")
        assert g.tolist() == pytest.approx([0, 1 / 3, 2 / 3, 1])

    def test_single(self):
        assert cli.parse_grid("0", "delta").tolist() == [0.0]

    def test_degenerate(self):
        assert cli.parse_grid("0.2:0.2:0.1", "delta").tolist() == [0.2]

    @pytest.mark.parametrize("text", ["a:b:c", "0:1", "1:0:0.1", "0:1:0", "0:1:-0.1", "0:inf:1"])
    def test_invalid(self, text):
        with pytest.raises(ValidationError, match="--alpha"):
            cli.parse_grid(text, "alpha")


class TestThreads:
    def test_env_overrides_flag(self, monkeypatch):
        monkeypatch.setenv(cli.THREADS_ENV, "3")
        assert cli.resolve_threads(7) == 3

    def test_flag(self, monkeypatch):
        monkeypatch.delenv(cli.THREADS_ENV, raising=False)
        assert cli.resolve_threads(2) == 2

    def test_default(self, monkeypatch):
        monkeypatch.delenv(cli.THREADS_ENV, raising=False)
        assert cli.resolve_threads(None) >= 1

    @pytest.mark.parametrize("value", ["x", "0"])
    def test_invalid_env(self, monkeypatch, value):
        monkeypatch.setenv(cli.THREADS_ENV, value)
        with pytest.raises(ValidationError):
            cli.resolve_threads(None)


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ValidationError, match="bogus"):
            cli.DesignConfig.from_dict({"family": "a", "bogus": 1})

    def test_round_trip(self):
        cfg = cli.ScanConfig(pulse="p.csv", alpha="-0.1:0.1:0.05", rabi=True)
        data = json.loads(json.dumps(cfg.to_dict()))
        assert data.pop("command") == "scan"
        assert cli.ScanConfig.from_dict(data) == cfg

    def test_unknown_key_exit_code(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"family": "a", "coefficients": [-1], "bogus": 1}), encoding="utf-8")
        assert run("design", "--config", cfg) == 1

    def test_wrong_command(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"command": "scan"}), encoding="utf-8")
        assert run("design", "--config", cfg) == 1

    def test_flags_override_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        out = tmp_path / "p.csv"
        cfg.write_text(json.dumps({"family": "b", "coefficients": [0.5], "out": str(out), "n_samples": 11}), encoding="utf-8")
        assert run("design", "--config", cfg, "--coeffs=-1.6788") == 0
        meta = json.loads(out.with_suffix(".json").read_text(encoding="utf-8"))
        assert meta["family"] == "b" and meta["coefficients"] == [-1.6788] and meta["n_samples"] == 11

    def test_reproducible_from_echo(self, tmp_path, capsys):
        out = tmp_path / "p.csv"
        assert run("design", "--family", "a", "--coeffs=-0.2305", "--n-samples", 101, "--out", out) == 0
        echoed = json.loads(out.with_suffix(".json").read_text(encoding="utf-8"))["config"]
        first = out.read_bytes()
        out.unlink()
        cfg = tmp_path / "echo.json"
        cfg.write_text(json.dumps(echoed), encoding="utf-8")
        assert run("design", "--config", cfg) == 0
        assert out.read_bytes() == first


class TestDesign:
    def test_table_row(self, tmp_path, capsys):
        out = tmp_path / "p.csv"
        assert run("design", "--family", "a", "--coeffs=-1", "--out", out) == 0
        printed = capsys.readouterr().out.strip()
        assert printed == "2.1565"
        meta = json.loads(out.with_suffix(".json").read_text(encoding="utf-8"))
        assert abs(meta["area_over_pi"] - 2.16) <= 0.01
        assert meta["config"]["command"] == "design"
        assert len(read_rows(out)) == 4001

    def test_flat_slope(self, tmp_path, capsys):
        assert run("design", "--family", "a", "--coeffs=0", "--out", tmp_path / "z.csv") == 0
        got = float(capsys.readouterr().out)
        assert got == pytest.approx(pulse_area(PhaseParameterization("a", (0.0,))) / math.pi, abs=5e-5)
        assert got > 1.5

    def test_bad_coeffs(self, tmp_path, capsys):
        assert run("design", "--family", "b", "--coeffs=bad", "--out", tmp_path / "x.csv") == 1
        assert "--coeffs" in capsys.readouterr().err
        assert not (tmp_path / "x.csv").exists()

    def test_bad_family(self, capsys):
        with pytest.raises(SystemExit) as info:
            run("design", "--family", "c")
        assert info.value.code == 1

    def test_io_error(self, tmp_path):
        assert run("design", "--family", "a", "--out", tmp_path / "missing" / "p.csv") == 2


class TestSolve:
    def test_area_b(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        assert run("solve", "--channel", "area", "--order", 3, "--family", "b", "--threads", 1, "--out", out) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["coefficients"][0] == pytest.approx(-1.6788, abs=0.002)
        assert report["verified_orders"] == [1, 2, 3]
        assert report["config"]["channel"] == "area"
        assert json.loads(out.read_text(encoding="utf-8")) == report

    def test_seeded(self, capsys):
        assert run("solve", "--channel", "detuning", "--order", 3, "--seed=-0.2") == 0
        assert json.loads(capsys.readouterr().out)["coefficients"][0] == pytest.approx(-0.2305, abs=0.002)

    def test_even_order_rejected(self, capsys):
        assert run("solve", "--channel", "area", "--order", 2) == 1

    def test_no_convergence(self, capsys):
        assert run("solve", "--channel", "area", "--order", 3, "--seed=5000") == 3
        assert "last iterate" in capsys.readouterr().err

    def test_seed_length(self, capsys):
        assert run("solve", "--channel", "area", "--order", 5, "--seed=-1") == 1


@pytest.fixture(scope="module")
def pulse_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("scan") / "p.csv"
    assert cli.main(["design", "--family", "a", "--coeffs=-1", "--out", str(out)]) == 0
    return out


class TestScan:
    def test_rows_and_config(self, pulse_file, tmp_path, capsys):
        out = tmp_path / "s.csv"
        assert run("scan", "--pulse", pulse_file, "--alpha=-0.5:0.5:0.05", "--delta", "0", "--threads", 1, "--out", out) == 0
        rows = read_rows(out)
        assert len(rows) == 21
        assert list(rows[0]) == ["alpha", "delta", "p2", "log10_infidelity"]
        meta = json.loads(out.with_suffix(".json").read_text(encoding="utf-8"))
        assert meta["config"]["alpha"] == "-0.5:0.5:0.05" and meta["n_rows"] == 21

    def test_row_count_from_grammar(self, pulse_file, tmp_path, monkeypatch, capsys):
        # 201 rows for the 0.005 grid; propagation is stubbed to keep this fast
        monkeypatch.setattr(cli, "scan", _fake_scan)
        out = tmp_path / "s.csv"
        assert run("scan", "--pulse", pulse_file, "--alpha=-0.5:0.5:0.005", "--delta", "0", "--out", out) == 0
        assert len(read_rows(out)) == 201

    def test_round_trip_fidelity(self, pulse_file, tmp_path, capsys):
        out = tmp_path / "s.csv"
        assert run("scan", "--pulse", pulse_file, "--alpha", 0, "--delta", 0, "--out", out) == 0
        assert float(read_rows(out)[0]["p2"]) >= 1 - 1e-8

    def test_rabi_column(self, pulse_file, tmp_path, capsys):
        out = tmp_path / "s.csv"
        assert run("scan", "--pulse", pulse_file, "--alpha=-0.5:0.5:0.5", "--delta=0:0.5:0.5", "--rabi", "--threads", 1, "--out", out) == 0
        rows = read_rows(out)
        ref = {(float(r["alpha"]), float(r["delta"])): float(r["rabi_p2"]) for r in rows}
        assert ref[(-0.5, 0.0)] == pytest.approx(0.5, abs=1e-12)
        assert ref[(0.0, 0.0)] == 1.0
        assert 0 < ref[(0.0, 0.5)] < 1

    def test_missing_pulse(self, tmp_path, capsys):
        assert run("scan", "--pulse", tmp_path / "nope.csv", "--out", tmp_path / "s.csv") == 2

    def test_bad_grid(self, pulse_file, tmp_path, capsys):
        assert run("scan", "--pulse", pulse_file, "--alpha=1:0:0.1", "--out", tmp_path / "s.csv") == 1
        assert not (tmp_path / "s.csv").exists()

    def test_flat_detuning_profile(self, tmp_path, capsys):
        design = tmp_path / "d.csv"
        assert run("design", "--family", "a", "--coeffs=-0.2305", "--out", design) == 0
        out = tmp_path / "s.csv"
        assert run("scan", "--pulse", design, "--alpha", 0, "--delta=-2:2:0.05", "--threads", 1, "--out", out) == 0
        rows = read_rows(out)
        delta = np.array([float(r["delta"]) for r in rows])
        p2 = np.array([float(r["p2"]) for r in rows])
        i = int(np.argmin(np.abs(delta)))
        h = delta[i + 1] - delta[i]
        curvature = (p2[i + 1] - 2 * p2[i] + p2[i - 1]) / h**2
        assert abs(curvature) < 1e-3


def _fake_scan(pulse, alphas, deltas, workers=1):
    from pulseforge.propagator import ScanResult

    aa, dd = (x.ravel() for x in np.meshgrid(alphas, deltas, indexing="ij"))
    return ScanResult(alpha=aa, delta=dd, p2=np.ones(aa.size), infidelity=np.zeros(aa.size))


class TestArea:
    def test_print(self, capsys):
        assert run("area", "--family", "a", "--coeffs=-0.2305") == 0
        assert capsys.readouterr().out.strip() == "1.7795"


class TestVerify:
    def test_quick(self, tmp_path, capsys):
        out = tmp_path / "v.json"
        code = run("verify", "--no-solve", "--threads", 1, "--out", out)
        text = capsys.readouterr().out
        assert "Rabi baseline" in text and "PASS" in text
        report = json.loads(out.read_text(encoding="utf-8"))
        assert report["config"]["solve"] is False
        assert code == (0 if all(c["passed"] for c in report["checks"]) else 1)


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "pulseforge.cli", "area", "--family", "b", "--coeffs=-1.6788"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0 and proc.stdout.strip() == "2.0937"
