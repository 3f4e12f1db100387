"""End-to-end runs of the command-line front end."""

import json
from pathlib import Path

import numpy as np
import pytest

from rdmc.cli import main, parse_invocation


def run(*argv):
    return main([str(a) for a in argv])


def read_table(path):
    """Parse a '#'-prefixed header stamp plus csv body."""
    lines = Path(path).read_text().splitlines()
    stamps = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    header = body[0].split(",")
    rows = [ln.split(",") for ln in body[1:]]
    return stamps, header, rows


def table_stamp(path):
    stamps, _, _ = read_table(path)
    for ln in stamps:
        if ln.startswith("# manifest_sha256:"):
            return ln.split(":", 1)[1].strip()
    raise AssertionError("no manifest stamp in table header")


@pytest.fixture(scope="module")
def sim_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "sim.csv"
    assert run("simulate", "--n", 400, "--seed", 5, "--out", out) == 0
    return out


def data_args(path):
    return ["--data", path, "--c0", 2.0, "--c1", 6.0]


class TestSimulate:
    def test_reruns_are_byte_identical(self, tmp_path):
        out = tmp_path / "a.csv"
        assert run("simulate", "--n", 200, "--seed", 11, "--out", out) == 0
        first = out.read_bytes()
        assert run("simulate", "--n", 200, "--seed", 11, "--out", out) == 0
        assert out.read_bytes() == first
        assert (tmp_path / "a.csv.manifest.json").exists()

    def test_manifest_sidecar_matches_the_stamped_hash(self, sim_file):
        sidecar = json.loads(Path(str(sim_file) + ".manifest.json").read_text())
        header = sim_file.read_text().splitlines()[:3]
        stamp = [ln for ln in header if "manifest_sha256" in ln][0].split(":", 1)[1].strip()
        assert sidecar["manifest_sha256"] == stamp
        assert sidecar["command"] == "simulate"
        assert "created_at" in sidecar and "results" in sidecar


class TestFit:
    def test_fixed_bandwidth_fit_writes_both_curves(self, sim_file, tmp_path):
        out = tmp_path / "fit.csv"
        code = run("fit", *data_args(sim_file), "--h", 1.2, "--grid", 41, "--out", out)
        assert code == 0
        stamps, header, rows = read_table(out)
        assert header == ["x", "g0hat", "slope0", "g1hat", "slope1"]
        assert len(rows) == 41
        xs = np.array([float(r[0]) for r in rows])
        assert xs[0] == 2.0 and xs[-1] == 6.0
        sidecar = json.loads((tmp_path / "fit.csv.manifest.json").read_text())
        assert sidecar["manifest_sha256"] == table_stamp(out)
        assert sidecar["results"]["bandwidths"] == {"g0": 1.2, "g1": 1.2}

    def test_reruns_are_byte_identical(self, sim_file, tmp_path):
        out = tmp_path / "a.csv"
        args = ["fit", *data_args(sim_file), "--h", 1.5, "--grid", 21, "--target", "0"]
        assert run(*args, "--out", out) == 0
        first = out.read_bytes()
        assert run(*args, "--out", out) == 0
        assert out.read_bytes() == first

    def test_hash_covers_the_input_data(self, tmp_path):
        d1, d2 = tmp_path / "d1.csv", tmp_path / "d2.csv"
        run("simulate", "--n", 200, "--seed", 1, "--out", d1)
        run("simulate", "--n", 200, "--seed", 2, "--out", d2)
        f1, f2 = tmp_path / "f1.csv", tmp_path / "f2.csv"
        run("fit", *data_args(d1), "--h", 1.5, "--grid", 11, "--target", "0", "--out", f1)
        run("fit", *data_args(d2), "--h", 1.5, "--grid", 11, "--target", "0", "--out", f2)
        assert table_stamp(f1) != table_stamp(f2)

    def test_variance_column_needs_the_dr_method(self, sim_file, tmp_path, capsys):
        out = tmp_path / "fit.csv"
        ok = run(
            "fit", *data_args(sim_file), "--h", 1.2, "--grid", 11, "--target", "0",
            "--with-variance", "--out", out,
        )
        assert ok == 0
        _, header, _ = read_table(out)
        assert header == ["x", "g0hat", "slope0", "variance0"]
        code = run(
            "fit", *data_args(sim_file), "--h", 1.2, "--method", "naive",
            "--with-variance", "--out", tmp_path / "bad.csv",
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_derives_treatment_status_when_the_column_is_absent(self, sim_file, tmp_path):
        # Strip the z column; 'auto' should fall back to deriving it and
        # reproduce the fit from the full file.
        lines = [ln for ln in sim_file.read_text().splitlines() if not ln.startswith("#")]
        header = lines[0].split(",")
        zk = header.index("z")
        stripped = tmp_path / "noz.csv"
        stripped.write_text(
            "\n".join(",".join(v for i, v in enumerate(ln.split(",")) if i != zk) for ln in lines)
            + "\n"
        )
        full, noz = tmp_path / "full.csv", tmp_path / "derived.csv"
        args = ["--h", 1.5, "--grid", 11, "--target", "0"]
        assert run("fit", *data_args(sim_file), *args, "--out", full) == 0
        assert run("fit", *data_args(stripped), *args, "--out", noz) == 0
        _, _, rows_full = read_table(full)
        _, _, rows_noz = read_table(noz)
        assert rows_full == rows_noz


class TestBandwidth:
    def test_prints_the_selected_bandwidth_and_writes_the_score_table(
        self, sim_file, tmp_path, capsys
    ):
        out = tmp_path / "scores.csv"
        code = run(
            "bandwidth", *data_args(sim_file), "--target", "0", "--method", "naive",
            "--h-grid", "0.8,1.2,2.0", "--out", out,
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "selected_h=" in printed
        _, header, rows = read_table(out)
        assert header == ["h", "score", "n_used", "n_excluded"]
        assert [float(r[0]) for r in rows] == [0.8, 1.2, 2.0]
        best = min(rows, key=lambda r: float(r[1]))
        assert f"selected_h={float(best[0])!r}" in printed


class TestEffect:
    def test_effect_table_has_ordered_confidence_limits(self, sim_file, tmp_path):
        out = tmp_path / "eff.csv"
        code = run("effect", *data_args(sim_file), "--h", 1.5, "--grid", 21, "--out", out)
        assert code == 0
        _, header, rows = read_table(out)
        assert header == ["x", "tau", "se", "lower", "upper"]
        assert len(rows) == 21
        vals = np.array([[float(v) for v in r] for r in rows])
        x, tau, se, lo, hi = vals.T
        assert np.all(x > 2.0) and np.all(x < 6.0)
        assert np.all(np.isfinite(vals))
        assert np.all(se > 0.0)
        assert np.all(lo < tau) and np.all(tau < hi)


class TestThreshold:
    def test_prohibitive_constant_cost_reports_the_lower_cutoff(
        self, sim_file, tmp_path, capsys
    ):
        out = tmp_path / "profile.csv"
        code = run(
            "threshold", *data_args(sim_file), "--h", 1.2, "--grid", 41,
            "--mc", 10_000.0, "--resolution", 101, "--out", out,
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "c_opt=2.0" in printed and "boundary=at_c0" in printed
        _, header, rows = read_table(out)
        assert header == ["c", "net_benefit"]
        assert len(rows) == 101
        sidecar = json.loads((tmp_path / "profile.csv.manifest.json").read_text())
        assert sidecar["results"]["boundary"] == "at_c0"

    def test_flat_cost_table_matches_the_constant(self, sim_file, tmp_path, capsys):
        table = tmp_path / "mc.csv"
        table.write_text("x,mc\n0.0,25.0\n10.0,25.0\n")
        args = ["threshold", *data_args(sim_file), "--h", 1.2, "--grid", 41,
                "--resolution", 51]
        assert run(*args, "--mc", 25.0) == 0
        with_const = capsys.readouterr().out
        assert run(*args, "--mc-table", table) == 0
        with_table = capsys.readouterr().out
        assert with_const == with_table

    def test_cost_options_are_mutually_exclusive(self, sim_file, tmp_path):
        table = tmp_path / "mc.csv"
        table.write_text("x,mc\n0.0,5.0\n10.0,5.0\n")
        code = run(
            "threshold", *data_args(sim_file), "--h", 1.2,
            "--mc", 5.0, "--mc-table", table,
        )
        assert code == 2
        assert run("threshold", *data_args(sim_file), "--h", 1.2) == 2  # cost required


class TestBench:
    def test_tiny_benchmark_writes_one_row_per_cell(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RDMC_THREADS", "1")
        out = tmp_path / "bench.csv"
        code = run(
            "bench", "--reps", 2, "--n", 250, "--seed", 90, "--cells", "table2",
            "--grid", 31, "--out", out,
        )
        assert code == 0
        _, header, rows = read_table(out)
        assert header == [
            "label", "estimator", "nuisance", "target", "mise", "n_reps", "n_failed", "base_seed"
        ]
        labels = [r[0] for r in rows]
        assert labels == [
            "ipw:g0:pi-wrong", "dr:g0:pi-wrong", "dr:g0:delta-wrong", "dr:g0:both-wrong"
        ]
        for r in rows:
            assert int(r[5]) + int(r[6]) == 2
        sidecar = json.loads((tmp_path / "bench.csv.manifest.json").read_text())
        assert set(sidecar["results"]["cells"]) == set(labels)


class TestExitCodes:
    def test_missing_input_file_fails_cleanly(self, tmp_path, capsys):
        code = run(
            "fit", "--data", tmp_path / "absent.csv", "--c0", 2.0, "--c1", 6.0,
            "--h", 1.0, "--out", tmp_path / "out.csv",
        )
        assert code == 1
        assert "not found" in capsys.readouterr().err

    def test_unknown_flags_are_usage_errors(self):
        assert run("fit", "--no-such-flag") == 2
        assert run("frobnicate") == 2

    def test_version_exits_cleanly(self, capsys):
        assert run("--version") == 0
        assert "rdmc" in capsys.readouterr().out


def test_parse_invocation_records_inputs_and_output(tmp_path):
    mc = tmp_path / "mc.csv"
    m = parse_invocation(
        [
            "threshold", "--data", "d.csv", "--c0", "2", "--c1", "6",
            "--mc-table", str(mc), "--out", "profile.csv",
        ]
    )
    assert m.command == "threshold"
    assert m.inputs == ("d.csv", str(mc))
    assert m.out == "profile.csv"
    assert m.parameters["data"] == "d.csv"
