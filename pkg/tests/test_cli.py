import json

import numpy as np
import pytest
from click.testing import CliRunner

from lgpc.cli import main
from lgpc.transform import to_pseudo_normal


@pytest.fixture
def runner():
    return CliRunner()


def _write_csv(path, data, names):
    lines = [",".join(names)]
    for row in np.atleast_2d(data):
        lines.append(",".join(f"{v:.15g}" for v in row))
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def triples_csv(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((120, 3))
    p = tmp_path / "triples.csv"
    _write_csv(p, data, ["a", "b", "c"])
    return p, data


class TestTransform:
    def test_matches_library(self, runner, triples_csv, tmp_path):
        path, data = triples_csv
        out = tmp_path / "z.csv"
        res = runner.invoke(main, ["transform", "--input", str(path),
                                   "--output", str(out)])
        assert res.exit_code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "a,b,c"
        got = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        np.testing.assert_allclose(got, to_pseudo_normal(data).z, atol=1e-12)

    def test_deterministic(self, runner, triples_csv):
        path, _ = triples_csv
        r1 = runner.invoke(main, ["transform", "--input", str(path)])
        r2 = runner.invoke(main, ["transform", "--input", str(path)])
        assert r1.output == r2.output

    def test_missing_file_exit_code(self, runner):
        res = runner.invoke(main, ["transform", "--input", "/nonexistent.csv"])
        assert res.exit_code == 2

    def test_bad_field_reports_line(self, runner, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1.0,2.0\n3.0,oops\n")
        res = runner.invoke(main, ["transform", "--input", str(p)])
        assert res.exit_code == 2
        assert ":3:" in res.output


class TestTestCommand:
    def test_json_output_stable(self, runner, triples_csv, tmp_path):
        path, _ = triples_csv
        args = ["test", "--input", str(path), "--B", "19", "--seed", "5"]
        out1 = tmp_path / "r1.json"
        out2 = tmp_path / "r2.json"
        assert runner.invoke(main, args + ["--output", str(out1)]).exit_code == 0
        assert runner.invoke(main, args + ["--output", str(out2)]).exit_code == 0
        assert out1.read_text() == out2.read_text()
        doc = json.loads(out1.read_text())
        assert doc["B"] == 19
        assert 0.05 <= doc["p_value"] <= 1.0

    def test_column_reorder_matches_default(self, runner, tmp_path):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((100, 3))
        p = tmp_path / "d.csv"
        _write_csv(p, data, ["a", "b", "c"])
        p_swapped = tmp_path / "d2.csv"
        _write_csv(p_swapped, data[:, [2, 0, 1]], ["c", "a", "b"])
        base = ["--B", "9", "--seed", "3"]
        r1 = runner.invoke(main, ["test", "--input", str(p)] + base)
        r2 = runner.invoke(main, ["test", "--input", str(p_swapped),
                                  "--x1", "a", "--x2", "b"] + base)
        assert json.loads(r1.output)["t_observed"] == json.loads(r2.output)["t_observed"]

    def test_unknown_column_exit_code(self, runner, triples_csv):
        path, _ = triples_csv
        res = runner.invoke(main, ["test", "--input", str(path),
                                   "--x1", "a", "--x2", "zz", "--B", "5"])
        assert res.exit_code == 2
        assert "zz" in res.output

    def test_half_specified_pair_rejected(self, runner, triples_csv):
        path, _ = triples_csv
        res = runner.invoke(main, ["test", "--input", str(path), "--x1", "a"])
        assert res.exit_code == 2


class TestGrangerCommand:
    def test_both_directions_reported(self, runner, tmp_path):
        rng = np.random.default_rng(2)
        n = 150
        x = rng.standard_normal(n)
        y = np.zeros(n)
        for t in range(1, n):
            y[t] = 0.7 * x[t - 1] + 0.4 * rng.standard_normal()
        p = tmp_path / "series.csv"
        _write_csv(p, np.column_stack([x, y]), ["x", "y"])
        res = runner.invoke(main, ["granger", "--input", str(p),
                                   "--x1", "x", "--x2", "y",
                                   "--B", "19", "--seed", "4"])
        assert res.exit_code == 0
        doc = json.loads(res.output)
        assert set(doc) == {"x->y", "y->x"}
        assert doc["x->y"]["p_value"] <= 0.10


class TestSimulate:
    def test_shape_and_header(self, runner, tmp_path):
        out = tmp_path / "sim.csv"
        res = runner.invoke(main, ["simulate", "--dgp", "5", "--n", "80",
                                   "--seed", "1", "--output", str(out)])
        assert res.exit_code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0].startswith("# config:")
        assert lines[1] == "x1,x2,x3_1"
        assert len(lines) == 2 + 80

    def test_primed_spelling_variants(self, runner):
        r1 = runner.invoke(main, ["simulate", "--dgp", "5p", "--n", "20"])
        r2 = runner.invoke(main, ["simulate", "--dgp", "5prime", "--n", "20"])
        assert r1.exit_code == 0
        assert r1.output == r2.output
        assert "x3_2" in r1.output

    def test_unknown_process_exit_code(self, runner):
        res = runner.invoke(main, ["simulate", "--dgp", "17", "--n", "50"])
        assert res.exit_code == 2


class TestMap:
    def test_independent_gaussian_alpha_small(self, runner, tmp_path):
        rng = np.random.default_rng(3)
        data = rng.standard_normal((600, 3))
        p = tmp_path / "g.csv"
        _write_csv(p, data, ["u", "v", "w"])
        out = tmp_path / "map.csv"
        res = runner.invoke(main, ["map", "--input", str(p),
                                   "--x1", "u", "--x2", "v", "--cond", "w=0.0",
                                   "--grid", "5", "--output", str(out)])
        assert res.exit_code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0].startswith("# config:")
        header = lines[1].split(",")
        assert len(lines) == 2 + 25
        alpha_col = header.index("alpha")
        alphas = np.array([float(ln.split(",")[alpha_col]) for ln in lines[2:]])
        assert np.max(np.abs(alphas)) <= 0.15

    def test_structural_sign_regions(self, runner, tmp_path):
        rng = np.random.default_rng(4)
        n = 1500
        x1 = rng.standard_normal(n)
        x3 = rng.standard_normal(n)
        x2 = x1 ** 2 + x3
        p = tmp_path / "s.csv"
        _write_csv(p, np.column_stack([x1, x2, x3]), ["x1", "x2", "x3"])
        out = tmp_path / "map.csv"
        res = runner.invoke(main, ["map", "--input", str(p),
                                   "--x1", "x1", "--x2", "x2", "--cond", "x3=0.0",
                                   "--grid", "7", "--c", "2.0",
                                   "--output", str(out)])
        assert res.exit_code == 0
        lines = out.read_text().strip().split("\n")
        header = lines[1].split(",")
        xcol, acol = header.index("x_x1"), header.index("alpha")
        rows = [ln.split(",") for ln in lines[2:]]
        left = [float(r[acol]) for r in rows if float(r[xcol]) < -0.7]
        right = [float(r[acol]) for r in rows if float(r[xcol]) > 0.7]
        assert np.mean(left) < 0 < np.mean(right)

    def test_missing_cond_value_rejected(self, runner, triples_csv):
        path, _ = triples_csv
        res = runner.invoke(main, ["map", "--input", str(path),
                                   "--x1", "a", "--x2", "b"])
        assert res.exit_code == 2
        assert "c" in res.output


class TestBenchmark:
    def test_smoke_table_and_sidecar(self, runner, tmp_path):
        out = tmp_path / "bench.csv"
        res = runner.invoke(main, ["benchmark", "--dgp", "1,5", "--n", "100",
                                   "--reps", "2", "--B", "9", "--seed", "0",
                                   "--output", str(out)])
        assert res.exit_code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "dgp,family,n,c,B,reps,failed,rejection_rate"
        assert len(lines) == 3
        sidecar = json.loads((tmp_path / "bench.csv.json").read_text())
        assert [e["dgp"] for e in sidecar["entries"]] == [1, 5]

    def test_mixed_families_rejected(self, runner):
        res = runner.invoke(main, ["benchmark", "--dgp", "1,5p", "--n", "100",
                                   "--reps", "1"])
        assert res.exit_code == 2
