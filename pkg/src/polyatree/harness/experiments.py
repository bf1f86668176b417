"""Seeded experiments checking the estimator's consistency claims at desk scale.

Every ``(n, seed)`` pair draws from its own generator,
``SeedSequence(seed, spawn_key=(n,))``, so pairs can run in any order or in
parallel and the merged report is the same.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from functools import partial
from statistics import median

import numpy as np
from scipy import stats

from ..divergence import TABLE_DENSE_LIMIT, CellProbabilityTable, expected_posterior_kl, total_variation
from ..entropy import TruncationPolicy, entropy_estimate, impact_level
from ..errors import ConfigError
from ..partition import PartitionSpec
from ..tree import PosteriorTree, beta_via_gamma, build_count_tree
from .config import ExperimentConfig, ReportRow
from .densities import DensityOracle, get_density

#: additive slack on 2 log2 n when checking the impact-level bound
IMPACT_SLACK = 10
PINSKER_SLACK = 1e-6
TRUNCATION_SLACK = 1e-9


def rng_for(seed: int, n: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))


def _rows(cfg: ExperimentConfig, density: str, n: int, seed: int, values: dict, runtime_ms: float) -> list[ReportRow]:
    return [ReportRow(cfg.kind, density, n, seed, k, v, runtime_ms) for k, v in values.items()]


def _sample(cfg: ExperimentConfig, oracle: DensityOracle, n: int, seed: int):
    spec = PartitionSpec(oracle.dimension)
    x = oracle.sample(rng_for(seed, n), n)
    return x, build_count_tree(x, spec)


# ---------------------------------------------------------------------------
# tasks, one per (n, seed)
# ---------------------------------------------------------------------------

def _entropy_task(cfg: ExperimentConfig, n: int, seed: int) -> dict:
    oracle = get_density(cfg.density)
    _, counts = _sample(cfg, oracle, n, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = entropy_estimate(counts, cfg.prior_schedule, cfg.truncation_policy)
    return {
        "estimate": est.value,
        "posterior_variance": est.posterior_variance,
        "impact_level": est.impact_level,
        "truncation_level": est.truncation_level,
        "abs_error": abs(est.value - oracle.entropy),
    }


_TABLES: dict[str, CellProbabilityTable] = {}


def _table(oracle: DensityOracle) -> CellProbabilityTable:
    # one table per density per process; tables are immutable
    if oracle.name not in _TABLES:
        spec = PartitionSpec(oracle.dimension)
        _TABLES[oracle.name] = CellProbabilityTable(oracle, spec, spec.max_depth)
    return _TABLES[oracle.name]


def _tv_task(cfg: ExperimentConfig, n: int, seed: int) -> dict:
    oracle = get_density(cfg.density)
    _, counts = _sample(cfg, oracle, n, seed)
    post = PosteriorTree(cfg.prior_schedule, counts)
    table = _table(oracle)
    depth = min(cfg.truncation_policy.resolve(counts), counts.max_depth)
    grid = depth
    if oracle.dimension > 1 or oracle.monotone_breaks is None:
        # dense grid; TV can only grow with depth, so Pinsker still holds
        grid = min(depth, TABLE_DENSE_LIMIT)
    tv = total_variation(post, table, grid)
    kl = expected_posterior_kl(table, post, depth, oracle.entropy)
    return {
        "tv": tv,
        "expected_kl": kl,
        "kl_depth": depth,
        "tv_grid_depth": grid,
        "pinsker_margin": kl / 2.0 - tv * tv,
    }


def _exact_spacing_level(x: np.ndarray) -> tuple[float, int]:
    """Minimum spacing ``d`` of a 1D sample and ``ceil(-log2 d)``, exactly."""
    xs = np.sort(x)
    diffs = np.diff(xs)
    d = float(diffs.min())
    if d == 0.0:
        return 0.0, -1
    idx = np.flatnonzero(diffs == d)
    exact = min(Fraction(float(xs[i + 1])) - Fraction(float(xs[i])) for i in idx)
    k = 0
    while Fraction(1, 1 << k) > exact:
        k += 1
    return d, k


def _impact_task(cfg: ExperimentConfig, n: int, seed: int) -> dict:
    oracle = get_density(cfg.density)
    if oracle.dimension != 1:
        raise ConfigError("impact-level experiments need a 1D density")
    x, counts = _sample(cfg, oracle, n, seed)
    level, capped = impact_level(counts)
    lower = n.bit_length()  # floor(log2 n) + 1
    d, k = _exact_spacing_level(x[:, 0])
    upper = k + 1 if d > 0 else counts.max_depth
    prior = cfg.prior_schedule
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        h_at = entropy_estimate(counts, prior, TruncationPolicy("fixed", level)).value
        h_below = entropy_estimate(counts, prior, TruncationPolicy("fixed", level + 5)).value
    gap = abs(h_at - h_below)
    gap_bound = prior.inverse_power_tail(level + 1) + TRUNCATION_SLACK
    return {
        "impact_level": level,
        "lower_bound": lower,
        "spacing_bound": upper,
        "lower_ok": float(lower <= level),
        "upper_ok": float(level <= upper),
        "prop3_ok": float(level <= 2.0 * math.log2(n) + IMPACT_SLACK),
        "capped": float(capped),
        "truncation_gap": gap,
        "truncation_gap_bound": gap_bound,
        "truncation_gap_ok": float(gap <= gap_bound),
    }


def _spacing_task(cfg: ExperimentConfig, n: int, seed: int) -> dict:
    oracle = get_density(cfg.density)
    if oracle.dimension != 1 or not oracle.square_integrable:
        raise ConfigError("spacing-law experiments need a 1D square-integrable density")
    if n < 2:
        raise ConfigError("spacing-law experiments need n >= 2")
    x = np.sort(oracle.sample(rng_for(seed, n), n)[:, 0])
    return {"n2_min_spacing": float(n) ** 2 * float(np.diff(x).min())}


def symmetric_beta_central_moment(a: float, j: int) -> float:
    """``E[(Y - 1/2)^(2j)]`` for ``Y ~ Beta(a, a)``: ``(2j)! (a)_j / (2^(2j) j! (2a)_(2j))``."""
    rising = lambda x, k: math.prod(x + i for i in range(k))
    return math.factorial(2 * j) * rising(a, j) / (4 ** j * math.factorial(j) * rising(2 * a, 2 * j))


def central_moment_bound(a: float, j: int) -> float:
    """``2 j^(j+1) e^(-j) / (2a + 1)^j``, an upper bound on the moment above for ``a >= 1``."""
    return 2.0 * j ** (j + 1) * math.exp(-j) / (2.0 * a + 1.0) ** j


def _beta_moment_task(cfg: ExperimentConfig, n: int, seed: int) -> dict:
    out = {}
    rng = rng_for(seed, n)
    for a in cfg.options.get("a_values", (1, 2, 5)):
        y = beta_via_gamma(rng, float(a), float(a), size=n) - 0.5
        for j in cfg.options.get("orders", (1, 2, 3)):
            v = y ** (2 * j)
            mean = float(v.mean())
            se = float(v.std(ddof=1) / math.sqrt(n))
            exact = symmetric_beta_central_moment(float(a), int(j))
            tag = f"a={a},j={j}"
            out[f"mc_mean[{tag}]"] = mean
            out[f"mc_se[{tag}]"] = se
            out[f"closed_form[{tag}]"] = exact
            out[f"z[{tag}]"] = (mean - exact) / se
            out[f"bound[{tag}]"] = central_moment_bound(float(a), int(j))
    return out


_TASKS = {
    "entropy-convergence": _entropy_task,
    "tv-convergence": _tv_task,
    "impact-level": _impact_task,
    "spacing-law": _spacing_task,
    "beta-moments": _beta_moment_task,
}


def _density_label(cfg: ExperimentConfig) -> str:
    return "beta(a,a)" if cfg.kind == "beta-moments" else cfg.density


def _timed(cfg: ExperimentConfig, pair: tuple[int, int]) -> list[ReportRow]:
    n, seed = pair
    start = time.perf_counter()
    values = _TASKS[cfg.kind](cfg, n, seed)
    ms = (time.perf_counter() - start) * 1e3
    return _rows(cfg, _density_label(cfg), n, seed, values, ms)


def _check(cfg: ExperimentConfig) -> None:
    if cfg.kind == "beta-moments":
        return
    oracle = get_density(cfg.density)
    if cfg.kind == "entropy-convergence" and oracle.entropy is None:
        raise ConfigError(f"density {cfg.density!r} has no analytic entropy")
    if cfg.kind == "tv-convergence" and oracle.entropy is None:
        raise ConfigError(f"density {cfg.density!r} has no analytic entropy for the KL bound")
    if cfg.kind in ("impact-level", "spacing-law") and oracle.dimension != 1:
        raise ConfigError(f"{cfg.kind} needs a 1D density")
    if cfg.kind == "spacing-law" and not oracle.square_integrable:
        raise ConfigError(f"density {cfg.density!r} is not square integrable")


def run_experiment(cfg: ExperimentConfig) -> list[ReportRow]:
    """All rows of ``cfg``, merged in ``(kind, density, n, seed)`` order."""
    _check(cfg)
    pairs = [(n, s) for n in cfg.sample_sizes for s in cfg.seeds]
    job = partial(_timed, cfg)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(job, pairs))
    else:
        chunks = [job(p) for p in pairs]
    rows = [r for chunk in chunks for r in chunk]
    return sorted(rows, key=lambda r: r.sort_key)


def _require(cfg: ExperimentConfig, kind: str) -> None:
    if cfg.kind != kind:
        raise ConfigError(f"expected a {kind} config, got {cfg.kind!r}")


def run_entropy_convergence(cfg: ExperimentConfig) -> list[ReportRow]:
    _require(cfg, "entropy-convergence")
    return run_experiment(cfg)


def run_tv_convergence(cfg: ExperimentConfig) -> list[ReportRow]:
    _require(cfg, "tv-convergence")
    return run_experiment(cfg)


def run_impact_level(cfg: ExperimentConfig) -> list[ReportRow]:
    _require(cfg, "impact-level")
    return run_experiment(cfg)


def run_spacing_law(cfg: ExperimentConfig) -> list[ReportRow]:
    _require(cfg, "spacing-law")
    return run_experiment(cfg)


def run_beta_moments(cfg: ExperimentConfig) -> list[ReportRow]:
    _require(cfg, "beta-moments")
    return run_experiment(cfg)


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def _by_stat_and_n(rows: list[ReportRow]) -> dict[str, dict[int, list[float]]]:
    out: dict[str, dict[int, list[float]]] = {}
    for r in rows:
        out.setdefault(r.statistic, {}).setdefault(r.n, []).append(r.value)
    return out


def _strictly_decreasing(values: list[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def summarize(cfg: ExperimentConfig, rows: list[ReportRow]) -> dict:
    """Medians over seeds per ``(statistic, n)`` plus the checks each kind supports."""
    grouped = _by_stat_and_n(rows)
    medians = {s: {str(n): median(v) for n, v in sorted(per.items())} for s, per in sorted(grouped.items())}
    checks: dict = {}
    sizes = list(cfg.sample_sizes)

    def med(stat):
        return [median(grouped[stat][n]) for n in sizes]

    def frac(stat):
        vals = [v for per in grouped[stat].values() for v in per]
        return sum(vals) / len(vals)

    if cfg.kind == "entropy-convergence":
        checks["abs_error_strictly_decreasing"] = _strictly_decreasing(med("abs_error"))
        checks["final_median_abs_error"] = med("abs_error")[-1]
    elif cfg.kind == "tv-convergence":
        checks["tv_strictly_decreasing"] = _strictly_decreasing(med("tv"))
        checks["expected_kl_strictly_decreasing"] = _strictly_decreasing(med("expected_kl"))
        margins = [v for per in grouped["pinsker_margin"].values() for v in per]
        checks["pinsker_violations"] = sum(m < -PINSKER_SLACK for m in margins)
    elif cfg.kind == "impact-level":
        for stat in ("lower_ok", "upper_ok", "prop3_ok", "truncation_gap_ok", "capped"):
            checks[f"fraction_{stat}"] = frac(stat)
    elif cfg.kind == "spacing-law":
        oracle = get_density(cfg.density)
        rate = oracle.l2_norm_sq
        ks_half, ks_full = {}, {}
        for n in sizes:
            sample = grouped["n2_min_spacing"][n]
            ks_half[str(n)] = float(stats.kstest(sample, "expon", args=(0.0, 2.0 / rate)).statistic)
            ks_full[str(n)] = float(stats.kstest(sample, "expon", args=(0.0, 1.0 / rate)).statistic)
        checks["ks_vs_exp_rate_half_l2"] = ks_half
        checks["ks_vs_exp_rate_l2"] = ks_full
        checks["ks_between_consecutive_n"] = {
            f"{a}-{b}": float(stats.ks_2samp(grouped["n2_min_spacing"][a], grouped["n2_min_spacing"][b]).statistic)
            for a, b in zip(sizes, sizes[1:])
        }
    elif cfg.kind == "beta-moments":
        z = [abs(v) for s, per in grouped.items() if s.startswith("z[") for vals in per.values() for v in vals]
        checks["max_abs_z"] = max(z)
        violations = 0
        for s in grouped:
            if s.startswith("mc_mean["):
                tag = s[len("mc_mean"):]
                for n, vals in grouped[s].items():
                    bounds = grouped["bound" + tag][n]
                    exact = grouped["closed_form" + tag][n]
                    violations += sum(v > b for v, b in zip(vals, bounds))
                    violations += sum(e > b for e, b in zip(exact, bounds))
        checks["bound_violations"] = violations
    return {"config": cfg.to_dict(), "medians": medians, "checks": checks}
