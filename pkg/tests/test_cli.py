from __future__ import annotations

import csv
import json
import math

import pytest

from levybridge import cli
from levybridge.cli import OUTPUT_DIR_ENV, CliConfig, build_parser, config_from_namespace, main, parse_observations
from levybridge.verification import CheckReport, VerificationReport


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _rb_args(cmd, atoms_file, *extra, model="cauchy", z="0"):
    return [cmd, "--model", model, "--z", z, "--tau", str(atoms_file), *extra]


class TestDensity:
    def test_cauchy_origin(self, tmp_path, capsys):
        out = tmp_path / "d.csv"
        assert main(["density", "--model", "cauchy", "--t", "1", "--x-max", "10", "--out", str(out)]) == 0
        rows = _rows(out)
        at0 = [float(r["f"]) for r in rows if float(r["x"]) == 0.0]
        assert at0 == [pytest.approx(0.3183099, abs=1e-7)]
        assert min(float(r["x"]) for r in rows) >= -10 and max(float(r["x"]) for r in rows) <= 10
        assert "rows" in capsys.readouterr().out

    def test_json_and_custom_grid(self, tmp_path):
        out = tmp_path / "d.json"
        code = main(
            ["density", "--model", "gaussian:sigma=1", "--t", "1", "--x-max", "5", "--cutoff", "40",
             "--grid-points", "4096", "--format", "json", "--out", str(out)]
        )
        assert code == 0
        data = json.loads(out.read_text())
        assert data["dx"] == pytest.approx(math.pi / 40)
        i = data["x"].index(0.0)
        assert data["f"][i] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-12)

    def test_window_beyond_period(self, tmp_path):
        args = ["density", "--model", "cauchy", "--t", "1", "--x-max", "1000", "--cutoff", "40",
                "--grid-points", "64", "--out", str(tmp_path / "d.csv")]
        assert main(args) == 2


class TestPosterior:
    def test_example(self, tmp_path, atoms_file):
        out = tmp_path / "p.csv"
        assert main(_rb_args("posterior", atoms_file, "--obs", "0.5:0.0", "--out", str(out))) == 0
        rows = _rows(out)
        assert [(r["kind"], float(r["r"])) for r in rows] == [("atom", 1.0), ("atom", 2.0)]
        assert [float(r["value"]) for r in rows] == [pytest.approx(0.6, abs=1e-12), pytest.approx(0.4, abs=1e-12)]

    def test_absorbed_token(self, tmp_path, atoms_file):
        out = tmp_path / "p.json"
        assert main(_rb_args("posterior", atoms_file, "--obs", "0.5:0,1.5:z", "--format", "json", "--out", str(out))) == 0
        data = json.loads(out.read_text())
        assert data["atoms"] == [{"r": 1.0, "p": 1.0}]
        assert data["lower"] == 0.5 and data["upper"] == 1.5

    def test_invalid_pattern(self, tmp_path, atoms_file):
        assert main(_rb_args("posterior", atoms_file, "--obs", "0.5:z,1.5:0.3", "--out", str(tmp_path / "p"))) == 2

    def test_zero_normalizer(self, tmp_path, atoms_file):
        assert main(_rb_args("posterior", atoms_file, "--obs", "2.5:0.1", "--out", str(tmp_path / "p"))) == 3

    @pytest.mark.parametrize("obs", ["0.5", "a:1", "", "0.5:x"])
    def test_bad_syntax(self, tmp_path, atoms_file, obs):
        assert main(_rb_args("posterior", atoms_file, "--obs", obs, "--out", str(tmp_path / "p"))) == 2


class TestKernelAndExpect:
    def test_kernel_json(self, tmp_path, atoms_file):
        out = tmp_path / "k.json"
        assert main(_rb_args("kernel", atoms_file, "--t", "0.5", "--x", "0", "--u", "1.5", "--out", str(out))) == 0
        data = json.loads(out.read_text())
        assert data["atom_mass"] == pytest.approx(0.6, abs=1e-12)
        assert data["atom_mass"] + sum(data["density"]) * data["dy"] == pytest.approx(1.0, abs=1e-5)

    def test_kernel_csv_absorbed(self, tmp_path, atoms_file):
        out = tmp_path / "k.csv"
        args = _rb_args("kernel", atoms_file, "--t", "1.2", "--absorbed", "--u", "1.5", "--format", "csv", "--out", str(out))
        assert main(args) == 0
        rows = _rows(out)
        assert rows[0]["kind"] == "atom" and float(rows[0]["value"]) == 1.0

    def test_kernel_time_order(self, tmp_path, atoms_file):
        assert main(_rb_args("kernel", atoms_file, "--t", "1", "--x", "0", "--u", "0.5", "--out", str(tmp_path / "k"))) == 2

    def test_expect_one(self, tmp_path, atoms_file):
        out = tmp_path / "e.json"
        args = _rb_args("expect", atoms_file, "--t", "0.5", "--x", "0.3", "--u", "1.5", "--g", "one", "--format", "json", "--out", str(out))
        assert main(args) == 0
        assert json.loads(out.read_text())["value"] == pytest.approx(1.0, abs=1e-5)

    def test_expect_joint_tau(self, tmp_path, atoms_file):
        out = tmp_path / "e.json"
        args = _rb_args("expect", atoms_file, "--t", "0.5", "--x", "0", "--u", "1.5", "--g", "tau", "--joint",
                        "--format", "json", "--out", str(out))
        assert main(args) == 0
        assert json.loads(out.read_text())["value"] == pytest.approx(0.6 * 1 + 0.4 * 2, abs=1e-5)

    def test_expect_unknown_function(self, tmp_path, atoms_file):
        args = _rb_args("expect", atoms_file, "--t", "0.5", "--x", "0", "--u", "1.5", "--g", "exp", "--out", str(tmp_path / "e"))
        assert main(args) == 2

    def test_phi(self, tmp_path, atoms_file):
        out = tmp_path / "phi.csv"
        assert main(_rb_args("phi", atoms_file, "--t", "1", "--x", "0", "--r", "2", "0.5", "--out", str(out))) == 0
        rows = _rows(out)
        assert float(rows[0]["phi"]) == pytest.approx(2.0, rel=1e-12)
        assert float(rows[1]["phi"]) == 0.0


class TestSampling:
    def test_bridge_sample_byte_identical(self, tmp_path):
        args = ["bridge-sample", "--model", "nig", "--r", "1", "--z", "0.3", "--steps", "8", "--n-paths", "50", "--seed", "4"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b), "--workers", "2"]) == 0
        assert a.read_bytes() == b.read_bytes()
        rows = _rows(a)
        assert len(rows) == 50 * 9
        assert all(float(r["value"]) == 0.3 for r in rows if float(r["t"]) == 1.0)

    def test_rlb_sample_byte_identical(self, tmp_path, atoms_file):
        args = _rb_args("rlb-sample", atoms_file, "--t-max", "2.5", "--steps", "5", "--n-paths", "100", "--seed", "1",
                        "--format", "json")
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        paths = [json.loads(line) for line in a.read_text().splitlines()]
        assert len(paths) == 100
        for p in paths:
            assert p["realized_length"] in (1.0, 2.0)
            assert all((v == 0.0) == a_ for v, a_ in zip(p["value"], p["absorbed"]) if a_)

    def test_unreachable_endpoint(self, tmp_path):
        args = ["bridge-sample", "--model", "gaussian", "--r", "1", "--z", "60", "--out", str(tmp_path / "x")]
        assert main(args) == 3

    def test_bad_model(self, tmp_path):
        assert main(["bridge-sample", "--model", "stable:alpha=3", "--r", "1", "--out", str(tmp_path / "x")]) == 2
        assert main(["bridge-sample", "--model", "nope", "--r", "1", "--out", str(tmp_path / "x")]) == 2

    def test_missing_tau_file(self, tmp_path):
        args = ["rlb-sample", "--model", "cauchy", "--tau", str(tmp_path / "missing.json"), "--t-max", "1"]
        assert main(args + ["--out", str(tmp_path / "x")]) == 2


class TestUsage:
    def test_argparse_errors(self, capsys):
        assert main([]) == 2
        assert main(["density", "--model", "cauchy"]) == 2
        assert main(["unknown"]) == 2
        assert main(["--help"]) == 0
        capsys.readouterr()

    def test_output_dir_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "outdir"))
        assert main(["density", "--model", "cauchy", "--t", "1", "--x-max", "2"]) == 0
        assert (tmp_path / "outdir" / "density.csv").exists()

    def test_config_round_trip(self, atoms_file):
        ns = build_parser().parse_args(
            ["phi", "--model", "cauchy", "--z", "0.5", "--tau", str(atoms_file), "--t", "1", "--x", "0", "--r", "2", "3"]
        )
        cfg = config_from_namespace(ns)
        assert cfg.subcommand == "phi" and cfg.z == 0.5 and cfg.option("r") == (2.0, 3.0)
        assert CliConfig.from_json(cfg.to_json()) == cfg
        assert CliConfig.from_dict(cfg.to_dict()) == cfg

    def test_parse_observations(self):
        assert parse_observations("0.5:0, 1.5:Z") == ([0.5, 1.5], [0.0, "z"])
        assert parse_observations("1:-2.5") == ([1.0], [-2.5])


class TestVerifyCommand:
    def _fake(self, monkeypatch, status):
        report = VerificationReport(7, [CheckReport("levy.x", status, 0.5, 1.0, 0.1, 7)])
        monkeypatch.setattr(cli.verification, "run_all", lambda seed, n_paths: report)

    def test_failed_verification_exit_code(self, tmp_path, monkeypatch):
        self._fake(monkeypatch, "fail")
        assert main(["verify", "--seed", "7", "--out", str(tmp_path / "r.json")]) == 1

    def test_report_without_timings(self, tmp_path, monkeypatch, capsys):
        self._fake(monkeypatch, "pass")
        out = tmp_path / "r.json"
        assert main(["verify", "--seed", "7", "--out", str(out)]) == 0
        assert "runtime" not in out.read_text()
        assert main(["verify", "--seed", "7", "--timings", "--out", str(out)]) == 0
        assert '"runtime"' in out.read_text()
        assert "1/1 checks passed" in capsys.readouterr().out


class TestReachability:
    # every random-length bridge operation is reachable from some subcommand
    OPERATIONS = {
        "phi": ["phi", "--t", "0.5", "--x", "0"],
        "tau_posterior_single": ["posterior", "--obs", "0.5:0.1"],
        "tau_posterior_multi": ["posterior", "--obs", "0.5:0.1,1.5:z"],
        "transition": ["kernel", "--t", "0.5", "--x", "0.1", "--u", "1.5"],
        "conditional_expectation": ["expect", "--t", "0.5", "--x", "0.1", "--u", "1.5", "--g", "tanh"],
        "joint_conditional": ["expect", "--t", "0.5", "--x", "0.1", "--u", "1.5", "--g", "tau_times_y", "--joint"],
        "sample_path": ["rlb-sample", "--t-max", "2", "--steps", "4", "--n-paths", "5"],
    }

    @pytest.mark.parametrize("op", sorted(OPERATIONS))
    def test_reachable(self, op, tmp_path, atoms_file, monkeypatch):
        from levybridge import bridge_random as br

        calls = []
        original = getattr(br, op if op != "sample_path" else "sample_paths")

        def spy(*a, **k):
            calls.append(op)
            return original(*a, **k)

        monkeypatch.setattr(br, op if op != "sample_path" else "sample_paths", spy)
        cmd, *rest = self.OPERATIONS[op]
        assert main(_rb_args(cmd, atoms_file, *rest, "--out", str(tmp_path / "o"))) == 0
        assert calls
