import json
import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from polyatree.errors import ConfigError
from polyatree.harness import (
    KINDS,
    OUTPUT_ENV,
    ZOO,
    ExperimentConfig,
    ReportRow,
    get_density,
    run_beta_moments,
    run_entropy_convergence,
    run_experiment,
    summarize,
    write_report,
)
from polyatree.harness.cli import main
from polyatree.harness.densities import piecewise_constant
from polyatree.harness.experiments import central_moment_bound, symmetric_beta_central_moment
from polyatree.harness.report import read_rows, rows_to_csv, svg_chart
from polyatree.partition import PartitionSpec, decode_array

NODES, WEIGHTS = leggauss(8)


def grid_integral_1d(pdf, depth=14):
    lo = np.arange(1 << depth) / float(1 << depth)
    h = 2.0 ** -depth
    x = lo[:, None] + 0.5 * h * (NODES[None, :] + 1)
    total = float(np.sum(pdf(x.ravel()).reshape(x.shape) * WEIGHTS) * 0.5 * h)
    return total


class TestDensityZoo:
    @pytest.mark.parametrize("name", sorted(ZOO))
    def test_pdf_integrates_to_one_on_depth_14_grid(self, name):
        oracle = get_density(name)
        spec = PartitionSpec(oracle.dimension)
        if oracle.dimension == 1:
            with np.errstate(divide="ignore"):
                edge = np.isinf(oracle.pdf(np.array([0.0, 1.0])))
            if np.any(edge):
                # integrable edge singularities: adaptive quadrature per cell
                h = 2.0 ** -14
                cells = [integrate.quad(lambda t: oracle.pdf(np.array([t]))[0], k * h, (k + 1) * h)[0]
                         for k in range(1 << 14)]
                total = math.fsum(cells)
            else:
                total = grid_integral_1d(oracle.pdf)
        else:
            lo, hi = decode_array(np.arange(1 << 14, dtype=np.uint64), 14, spec)
            w2 = np.outer(WEIGHTS, WEIGHTS).ravel()
            g = np.stack(np.meshgrid(NODES, NODES, indexing="ij"), axis=-1).reshape(-1, 2)
            pts = lo[:, None, :] + 0.5 * (hi - lo)[:, None, :] * (g[None] + 1)
            vals = oracle.pdf(pts.reshape(-1, 2)).reshape(pts.shape[:2])
            total = float(np.sum(vals * w2 * np.prod(0.5 * (hi - lo), axis=1)[:, None]))
        assert abs(total - 1.0) <= 1e-8

    @pytest.mark.parametrize("name", sorted(ZOO))
    def test_entropy_matches_quadrature(self, name):
        oracle = get_density(name)

        def integrand(*t):
            v = oracle.pdf(np.array([t]))[0]
            return -v * math.log(v) if v > 0 else 0.0

        if oracle.dimension == 1:
            value = integrate.quad(integrand, 0, 1, limit=200, epsabs=1e-12)[0]
        else:
            value = integrate.dblquad(lambda y, x: integrand(x, y), 0, 1, 0, 1, epsabs=1e-11)[0]
        assert abs(value - oracle.entropy) <= 1e-6

    def test_entropy_values(self):
        assert get_density("beta22").entropy == pytest.approx(-0.12509, abs=1e-5)
        assert get_density("beta-half").entropy == pytest.approx(math.log(math.pi / 4))

    @pytest.mark.parametrize("name", sorted(ZOO))
    def test_sampler_and_cdf(self, name, rng):
        oracle = get_density(name)
        x = oracle.sample(rng, 20_000)
        assert x.shape == (20_000, oracle.dimension)
        assert np.all((x >= 0) & (x < 1))
        if oracle.cdf is not None:
            for q in (0.1, 0.37, 0.5, 0.9):
                assert abs(np.mean(x[:, 0] < q) - oracle.cdf(np.array([q]))[0]) < 0.015

    @pytest.mark.parametrize("name", ["uniform", "beta22", "beta-half", "truncnorm"])
    def test_split_ratio_bound(self, name):
        from polyatree.divergence import cell_probabilities

        oracle = get_density(name)
        t = cell_probabilities(oracle, PartitionSpec(1), 18)
        lowest = min(float(np.nanmin(np.minimum(t.split_ratios(l), 1 - t.split_ratios(l)))) for l in range(1, 19))
        assert lowest >= oracle.split_ratio_bound - 1e-12
        assert lowest - oracle.split_ratio_bound < 1e-3  # the bound is (nearly) attained

    def test_assumption_flags(self):
        assert get_density("truncnorm").bounded_away
        assert not get_density("beta-half").bounded_away
        assert not get_density("beta-half").square_integrable
        assert get_density("beta22").square_integrable

    def test_piecewise_constant(self):
        f = piecewise_constant([0.5, 0.25, 0.125, 0.125])
        assert f.cdf(np.array([0.25, 0.5, 0.875]))[0] == 0.5
        assert f.entropy == pytest.approx(-(0.5 * math.log(2) + 0.25 * 0 + 0.25 * math.log(0.5)))
        with pytest.raises(ValueError):
            piecewise_constant([0.5, 0.6])

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown density"):
            get_density("cauchy")


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig("tv-convergence", density="beta22", seeds=(1, 2), sample_sizes=(10, 20))
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert ExperimentConfig.load(path) == cfg
        assert ExperimentConfig.load(path, kind="tv-convergence") == cfg

    @pytest.mark.parametrize("bad", [
        {"kind": "entropy-convergence", "sample_sizes": [100, 100]},
        {"kind": "entropy-convergence", "sample_sizes": [1000, 100]},
        {"kind": "entropy-convergence", "seeds": []},
        {"kind": "bogus"},
        {"kind": "entropy-convergence", "prior": "exp:c=1"},
        {"kind": "entropy-convergence", "colour": "red"},
        {"kind": "entropy-convergence", "schema_version": 99},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"schema_version": 1, **bad})

    def test_schema_version_required(self):
        with pytest.raises(ConfigError, match="schema_version"):
            ExperimentConfig.from_dict({"kind": "spacing-law"})

    def test_kind_mismatch(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"schema_version": 1, "kind": "spacing-law"}))
        with pytest.raises(ConfigError):
            ExperimentConfig.load(path, kind="impact-level")

    def test_env_override(self, monkeypatch, tmp_path):
        cfg = ExperimentConfig("spacing-law")
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
        assert cfg.output_dir() == tmp_path

    def test_report_row_finiteness(self):
        with pytest.raises(ValueError):
            ReportRow("k", "d", 1, 0, "tv", float("nan"))
        with pytest.raises(ValueError):
            ReportRow("k", "d", 1, 0, "tv", float("inf"))
        assert ReportRow("k", "d", 1, 0, "kl", float("inf")).value == math.inf


def small(kind, **kw):
    base = dict(kind=kind, density="beta22", sample_sizes=(50, 400), seeds=(0, 1, 2))
    base.update(kw)
    return ExperimentConfig(**base)


class TestExperiments:
    @pytest.mark.parametrize("kind", [k for k in KINDS if k != "beta-moments"])
    def test_rows_cover_grid(self, kind):
        cfg = small(kind)
        rows = run_experiment(cfg)
        assert {(r.n, r.seed) for r in rows} == {(n, s) for n in cfg.sample_sizes for s in cfg.seeds}
        assert rows == sorted(rows, key=lambda r: r.sort_key)
        assert all(r.runtime_ms >= 0 for r in rows)
        summary = summarize(cfg, rows)
        assert summary["checks"]

    def test_deterministic_and_parallel(self, tmp_path):
        cfg = small("tv-convergence")
        a = rows_to_csv(run_experiment(cfg))
        b = rows_to_csv(run_experiment(cfg))
        c = rows_to_csv(run_experiment(small("tv-convergence", workers=2)))
        assert a == b == c

    def test_seed_changes_rows(self):
        a = rows_to_csv(run_experiment(small("entropy-convergence", seeds=(0,))))
        b = rows_to_csv(run_experiment(small("entropy-convergence", seeds=(1,))))
        assert a.splitlines()[1:] != b.splitlines()[1:]

    def test_entropy_rows(self):
        rows = run_entropy_convergence(small("entropy-convergence", density="uniform-2d", sample_sizes=(2000,)))
        est = [r.value for r in rows if r.statistic == "estimate"]
        assert np.median(np.abs(est)) < 0.1

    def test_impact_level_needs_1d(self):
        with pytest.raises(ConfigError):
            run_experiment(small("impact-level", density="uniform-2d"))

    def test_spacing_needs_l2(self):
        with pytest.raises(ConfigError):
            run_experiment(small("spacing-law", density="beta-half"))

    def test_wrong_runner(self):
        with pytest.raises(ConfigError):
            run_entropy_convergence(small("spacing-law"))

    def test_beta_moment_formulas(self):
        assert symmetric_beta_central_moment(1.0, 1) == pytest.approx(1 / 12)
        assert symmetric_beta_central_moment(1.0, 2) == pytest.approx(1 / 80)
        # Beta(2,2): variance 1/20
        assert symmetric_beta_central_moment(2.0, 1) == pytest.approx(1 / 20)
        for a in (1, 2, 5, 50):
            for j in (1, 2, 3, 6):
                assert symmetric_beta_central_moment(a, j) <= central_moment_bound(a, j)

    def test_beta_moments_small(self):
        cfg = ExperimentConfig("beta-moments", sample_sizes=(50_000,), seeds=(0,),
                               options={"a_values": [1, 3], "orders": [1, 2]})
        rows = run_beta_moments(cfg)
        summary = summarize(cfg, rows)
        assert summary["checks"]["bound_violations"] == 0
        assert summary["checks"]["max_abs_z"] < 4


class TestReport:
    def test_write_and_read(self, tmp_path):
        cfg = small("entropy-convergence", plot=True)
        rows = run_experiment(cfg)
        paths = write_report(cfg, rows, summarize(cfg, rows), tmp_path)
        assert read_rows(paths["rows"]) == [ReportRow(r.kind, r.density, r.n, r.seed, r.statistic, r.value)
                                            for r in rows]
        assert paths["plot"].read_text().startswith("<svg")
        assert "runtime_ms" in paths["runtime"].read_text().splitlines()[0]
        assert "runtime" not in paths["rows"].read_text()
        json.loads(paths["summary"].read_text())

    def test_svg_handles_empty(self):
        assert svg_chart([], ["x"], "t").strip().endswith("</svg>")


class TestCLI:
    def test_partition(self, capsys):
        assert main(["partition", "--point", "0.6", "--depth", "3"]) == 0
        assert capsys.readouterr().out.split() == ["100", "[0.5,0.625)"]

    def test_partition_2d(self, capsys):
        assert main(["partition", "--point", "0.75,0.25", "--depth", "2"]) == 0
        assert capsys.readouterr().out.split()[0] == "10"

    def test_entropy_json(self, tmp_path, capsys):
        data = tmp_path / "u.csv"
        np.savetxt(data, np.random.default_rng(0).random(500), delimiter=",")
        assert main(["entropy", "--input", str(data), "--prior", "exp:c=1,beta=3", "--policy", "auto"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert {"value", "variance", "level"} <= set(out)
        assert abs(out["value"]) < 0.2
        assert main(["entropy", "--input", str(data), "--bits"]) == 0
        bits = json.loads(capsys.readouterr().out)
        assert bits["value"] == pytest.approx(out["value"] / math.log(2))

    def test_fit_and_sample(self, tmp_path, capsys):
        data = tmp_path / "b.csv"
        np.savetxt(data, np.random.default_rng(1).beta(2, 2, 300), delimiter=",")
        out = tmp_path / "fit.csv"
        assert main(["fit", "--input", str(data), "--depth", "6", "--output", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "path,lower_0,upper_0,density"
        dens = np.array([float(l.split(",")[-1]) for l in lines[1:]])
        assert dens.size == 64 and abs(dens.sum() / 64 - 1) < 1e-12
        s1, s2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
        for s in (s1, s2):
            assert main(["sample", "--input", str(data), "--depth", "4", "--draws", "3", "--seed", "9",
                         "--output", str(s)]) == 0
        assert s1.read_bytes() == s2.read_bytes()

    def test_simulate(self, tmp_path, monkeypatch, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"schema_version": 1, "density": "uniform", "sample_sizes": [20, 40],
                                   "seeds": [0, 1]}))
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
        assert main(["simulate", "entropy-convergence", "--config", str(cfg)]) == 0
        rows = (tmp_path / "env" / "entropy-convergence-uniform.csv").read_text().splitlines()
        pairs = {tuple(r.split(",")[2:4]) for r in rows[1:]}
        assert pairs == {("20", "0"), ("20", "1"), ("40", "0"), ("40", "1")}
        assert main(["simulate", "entropy-convergence", "--config", str(cfg), "--output-dir",
                     str(tmp_path / "flag")]) == 0
        assert (tmp_path / "flag" / "entropy-convergence-uniform.csv").read_bytes() == \
            (tmp_path / "env" / "entropy-convergence-uniform.csv").read_bytes()

    @pytest.mark.parametrize("argv", [
        ["partition", "--point", "1.5", "--depth", "3"],
        ["partition", "--point", "x", "--depth", "3"],
        ["nonsense"],
        ["entropy", "--input", "/nonexistent.csv"],
        ["simulate", "spacing-law", "--config", "/nonexistent.json"],
    ])
    def test_usage_errors(self, argv, capsys):
        assert main(argv) == 1
        err = capsys.readouterr().err.strip()
        assert err.startswith("polyatree:") and "\n" not in err

    def test_numerical_failure(self, tmp_path, capsys):
        data = tmp_path / "u.csv"
        data.write_text("0.1\n0.6\n")
        assert main(["entropy", "--input", str(data), "--prior", "poly:c=1,rho=0.5"]) == 2

    def test_empty_sample(self, tmp_path, capsys):
        data = tmp_path / "e.csv"
        data.write_text("")
        assert main(["entropy", "--input", str(data)]) == 1


def test_acceptance_runner_script(tmp_path, capsys):
    import importlib.util
    from pathlib import Path

    path = Path(__file__).resolve().parent.parent / "scripts" / "run_acceptance_experiments.py"
    spec = importlib.util.spec_from_file_location("runner", path)
    runner = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(runner)
    assert runner.main(["--output-dir", str(tmp_path), "beta-moments"]) == 0
    assert (tmp_path / "beta-moments.csv").exists()
    assert "bound_violations" in capsys.readouterr().out
