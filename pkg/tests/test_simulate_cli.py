import json
import math
import time

import numpy as np
import pytest

from dncbayes import cli
from dncbayes.engine import read_combined, read_run
from dncbayes.errors import EmptyFile, ParseError
from dncbayes.simulate import (
    SIM1_COV,
    SIM1_MEANS,
    Sim1Config,
    Sim2Config,
    gen_sim1,
    gen_sim2,
    ingest_gwas,
    read_csv_columns,
    simulate_sim1,
    simulate_sim2,
)


class TestSim1:
    def test_component_count(self):
        x = simulate_sim1(Sim1Config(10_000, seed=2))
        # the components sit far apart along the first axis; classify by the closer mean under Sigma
        prec = np.linalg.inv(SIM1_COV)
        d = [np.einsum("ij,jk,ik->i", x - m, prec, x - m) for m in SIM1_MEANS]
        n1 = int(np.sum(d[0] < d[1]))
        assert abs(n1 - 3000) <= 4 * math.sqrt(10_000 * 0.21)

    def test_single_row(self, tmp_path):
        x = gen_sim1(Sim1Config(1, seed=0), tmp_path / "one.csv")
        cols = read_csv_columns(tmp_path / "one.csv", ["x1", "x2"])
        assert x.shape == (1, 2) and cols["x1"].size == 1
        assert (tmp_path / "one.csv").read_text().splitlines()[0] == "x1,x2"

    def test_mixture_mean(self):
        x = simulate_sim1(Sim1Config(1_000_000, seed=3))
        se = x.std(axis=0, ddof=1) / 1000
        assert np.all(np.abs(x.mean(axis=0) - [5.2, 6.2]) <= 4 * se)

    def test_deterministic(self):
        assert np.array_equal(simulate_sim1(Sim1Config(50, 9)), simulate_sim1(Sim1Config(50, 9)))
        with pytest.raises(ValueError):
            simulate_sim1(Sim1Config(0))


@pytest.fixture(scope="module")
def big():
    return simulate_sim2(Sim2Config(1_000_000, seed=4))


class TestSim2:
    def test_symmetric_mean(self, big):
        x = big[2]
        assert abs(x.mean()) <= 4 * x.std(ddof=1) / 1000

    def test_variance(self, big):
        x = big[2]
        target = 0.8 * 0.04 + 0.2 * 5 / 3
        assert target == pytest.approx(0.3653, abs=1e-4)
        dev = x**2 - x.mean() ** 2
        assert abs(x.var(ddof=1) - target) <= 4 * dev.std(ddof=1) / 1000

    def test_noise_exceeds_signal(self, big):
        _, sigma, x = big
        assert np.mean(sigma**2) > x.var()
        assert np.allclose(sigma, np.maximum(np.abs(0.75 + x / 4), 1e-6))

    def test_file_header(self, tmp_path):
        gen_sim2(Sim2Config(5, seed=1), tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "w,sigma,x_true"


class TestIngest:
    def test_three_rows(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("SIGMA,id,W,extra\n0.1,rs1,0.02,a\n0.2,rs2,-0.01,b\n0.05,rs3,0.3,c\n")
        recs = ingest_gwas(p)
        assert [r.id for r in recs] == ["rs1", "rs2", "rs3"]
        assert recs[1].w == -0.01 and recs[2].sigma == 0.05

    def test_zero_sigma_names_line(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("id,w,sigma\nrs1,0.1,0.2\nrs2,0.3,0\n")
        with pytest.raises(ParseError, match="line 3") as info:
            ingest_gwas(p)
        assert info.value.line == 3

    def test_bad_value(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("id,w,sigma\nrs1,abc,0.2\n")
        with pytest.raises(ParseError) as info:
            ingest_gwas(p)
        assert info.value.line == 2 and info.value.column == 2

    def test_missing_column(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("id,w\nrs1,0.1\n")
        with pytest.raises(ParseError):
            ingest_gwas(p)

    @pytest.mark.parametrize("text", ["", "id,w,sigma\n", "id,w,sigma\n\n"])
    def test_empty(self, tmp_path, text):
        p = tmp_path / "g.csv"
        p.write_text(text)
        with pytest.raises(EmptyFile):
            ingest_gwas(p)

    def test_throughput(self, tmp_path):
        n = 941_389
        rng = np.random.default_rng(0)
        p = tmp_path / "big.csv"
        w = rng.normal(scale=0.02, size=n)
        s = rng.uniform(0.005, 0.05, size=n)
        with open(p, "w") as fh:
            fh.write("id,w,sigma\n")
            fh.writelines(f"rs{i},{a:.6g},{b:.6g}\n" for i, a, b in zip(range(n), w, s))
        start = time.perf_counter()
        recs = ingest_gwas(p)
        assert time.perf_counter() - start < 10.0
        assert len(recs) == n


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim1_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "sim1.csv"
    assert run_cli("gen-sim1", "--n", 300, "--seed", 4, "--out", path) == 0
    return path


@pytest.fixture(scope="module")
def sim2_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "sim2.csv"
    assert run_cli("gen-sim2", "--n", 300, "--seed", 4, "--out", path) == 0
    return path


FIT_SMALL = ("--iters", 20, "--burnin", 5, "--thin", 5, "--grid-points", 21)


class TestCli:
    def test_usage_errors_exit_two(self, sim1_file, tmp_path, capsys):
        assert run_cli() == 2
        assert run_cli("fit", "--out", tmp_path / "r") == 2
        assert run_cli("fit", "--data", sim1_file, "--mode", "full", "--shards", 2, "--out", tmp_path / "r") == 2
        assert run_cli("fit", "--data", sim1_file, "--model", "bogus", "--out", tmp_path / "r") == 2
        capsys.readouterr()

    def test_data_errors_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("id,w,sigma\nrs1,0.1,-2\n")
        assert run_cli("ingest-check", bad) == 1
        assert "line 2" in capsys.readouterr().err
        assert run_cli("fit", "--data", tmp_path / "missing.csv", "--out", tmp_path / "r") == 1

    def test_ingest_check(self, tmp_path, capsys):
        good = tmp_path / "g.csv"
        good.write_text("id,w,sigma\nrs1,0.1,0.2\nrs2,0.2,0.3\n")
        assert run_cli("ingest-check", good) == 0
        assert "2 records" in capsys.readouterr().out

    def test_single_shard_fraction_equals_full(self, sim1_file, tmp_path):
        for mode in ("fraction", "full"):
            assert run_cli("fit", "--data", sim1_file, "--mode", mode, "--shards", 1, *FIT_SMALL, "--out", tmp_path / mode) == 0
        assert (tmp_path / "fraction" / "draws-0.csv").read_bytes() == (tmp_path / "full" / "draws-0.csv").read_bytes()

    def test_fit_combine_table(self, sim1_file, tmp_path, capsys):
        runs = []
        for seed in (1, 2):
            out = tmp_path / f"run{seed}"
            assert run_cli("fit", "--data", sim1_file, "--shards", 2, "--seed", seed, *FIT_SMALL, "--out", out) == 0
            assert run_cli("combine", out) == 0
            runs.append(out)
        manifest, shards = read_run(runs[0])
        assert manifest.config.J == 2 and len(shards) == 2
        assert sum(manifest.shard_sizes) == 300
        params = json.loads((runs[0] / "combined-params.json").read_text())
        assert set(params) == {"weights", "means", "covs"}
        assert run_cli("table", *runs, "--out", tmp_path / "table.csv") == 0
        lines = (tmp_path / "table.csv").read_text().splitlines()
        assert lines[0] == "parameter,bias_x1e3,se_x1e3" and len(lines) == 4
        assert run_cli("metrics", "--metric", "hellinger", "--a", runs[0] / "combined.csv", "--truth", "sim1") == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec["metric"] == "hellinger" and 0 <= rec["value"] <= math.sqrt(2)

    def test_manifest_rerun_is_bitwise(self, sim1_file, tmp_path):
        first = tmp_path / "first"
        assert run_cli("fit", "--data", sim1_file, "--shards", 3, "--seed", 8, *FIT_SMALL, "--out", first) == 0
        again = tmp_path / "again"
        assert run_cli("fit", "--manifest", first / "manifest", "--workers", 2, "--out", again) == 0
        for name in sorted(p.name for p in first.iterdir()):
            assert (first / name).read_bytes() == (again / name).read_bytes()

    def test_manifest_data_hash_checked(self, sim1_file, tmp_path):
        first = tmp_path / "first"
        assert run_cli("fit", "--data", sim1_file, *FIT_SMALL, "--out", first) == 0
        other = tmp_path / "other.csv"
        assert run_cli("gen-sim1", "--n", 300, "--seed", 5, "--out", other) == 0
        assert run_cli("fit", "--manifest", first / "manifest", "--data", other, "--out", tmp_path / "x") == 1

    def test_deconv_iad_regions(self, sim2_file, tmp_path):
        out = tmp_path / "dec"
        args = ("--model", "deconv", "--K", 6, "--shards", 2, "--iters", 12, "--burnin", 4, "--thin", 4, "--grid-points", 101)
        assert run_cli("fit", "--data", sim2_file, *args, "--out", out) == 0
        assert run_cli("combine", out) == 0
        combined = read_combined(out / "combined.csv")
        assert np.array_equal(combined.values, combined.values[::-1])
        assert run_cli("metrics", "--metric", "iad", "--cutoff", 0.003, "--a", out / "combined.csv", "--truth", "sim2", "--out", tmp_path / "m.jsonl") == 0
        recs = [json.loads(line) for line in (tmp_path / "m.jsonl").read_text().splitlines()]
        assert [r["region"] for r in recs] == ["abs_above(0.003)", "abs_below(0.003)", "all"]
        assert recs[0]["value"] + recs[1]["value"] == pytest.approx(recs[2]["value"], abs=1e-9)
        assert run_cli("metrics", "--metric", "w2", "--run", out, "--truth", "sim2", "--out", tmp_path / "w.jsonl") == 0
        assert json.loads((tmp_path / "w.jsonl").read_text())["metric"] == "w2"

    def test_dpmn_fit(self, sim2_file, tmp_path):
        data = tmp_path / "x.csv"
        data.write_text("x\n" + "\n".join(f"{v:.17g}" for v in np.random.default_rng(1).normal(size=200)) + "\n")
        out = tmp_path / "dp"
        assert run_cli("fit", "--data", data, "--model", "dpmn", "--trunc-H", 10, *FIT_SMALL, "--out", out) == 0
        manifest, shards = read_run(out)
        assert manifest.config.trunc == 10 and shards[0].grid.size == 21
