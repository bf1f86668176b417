import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from polyatree.entropy import (
    TruncationPolicy,
    deterministic_truncation,
    entropy_estimate,
    estimator_sum,
    impact_level,
    max_impact_level,
    posterior_variance,
    tail_correction,
    variance_tail,
)
from polyatree.errors import ConvergenceError, DepthCapWarning, EstimateUndefinedError, PriorConditionWarning
from polyatree.partition import PartitionSpec, encode_array
from polyatree.specfun import trigamma
from polyatree.tree import LOG2, PosteriorTree, PriorSchedule, build_count_tree, sample_split_matrix

EXP3 = PriorSchedule.exponential(3.0)


def term(a):
    return LOG2 + float(mpmath.digamma(a + 1) - mpmath.digamma(2 * a + 1))


class TestTruncation:
    @pytest.mark.parametrize("n,level", [(1, 2), (2, 3), (1024, 30), (1000, 30), (1025, 31)])
    def test_deterministic(self, n, level):
        assert deterministic_truncation(n) == level
        if n > 1:
            assert level == max(2, math.ceil(3 * math.log2(n) - 1e-12))

    def test_policy_parse(self):
        assert TruncationPolicy.parse("fixed:7") == TruncationPolicy("fixed", 7)
        assert TruncationPolicy.parse("max-impact").kind == "max_impact"
        assert str(TruncationPolicy.parse("fixed:7")) == "fixed:7"
        for bad in ("fixed", "sometimes", "fixed:0"):
            with pytest.raises(ValueError):
                TruncationPolicy.parse(bad)

    def test_policy_resolve(self, rng):
        counts = build_count_tree(rng.random(1000))
        lx = max_impact_level(counts)
        assert TruncationPolicy("max_impact").resolve(counts) == lx
        assert TruncationPolicy("deterministic").resolve(counts) == 30
        assert TruncationPolicy("auto").resolve(counts) == min(lx, 30)
        assert TruncationPolicy("fixed", 5).resolve(counts) == 5


class TestImpactLevel:
    def test_examples(self):
        assert max_impact_level(build_count_tree([0.1, 0.6])) == 2
        assert max_impact_level(build_count_tree([0.37])) == 2

    def test_ties_cap_with_warning(self):
        counts = build_count_tree([0.25, 0.25, 0.5])
        with pytest.warns(DepthCapWarning):
            assert max_impact_level(counts) == counts.max_depth
        assert impact_level(counts) == (counts.max_depth, True)

    def test_empty(self):
        with pytest.raises(EstimateUndefinedError):
            max_impact_level(build_count_tree(np.zeros((0, 1))))

    @given(st.lists(st.floats(min_value=0, max_value=1, exclude_max=True), min_size=2, max_size=60, unique=True))
    def test_pigeonhole_and_spacing_bounds(self, xs):
        x = np.array(xs)
        # distinct points closer than 2**-53 share a cell at the deepest level
        assume(np.min(np.diff(np.sort(x))) >= 2.0 ** -52)
        lx = max_impact_level(build_count_tree(x))
        assert len(xs).bit_length() <= lx  # floor(log2 n) + 1
        d = float(np.min(np.diff(np.sort(x))))
        assert lx <= math.ceil(-math.log2(d)) + 1

    def test_five_points(self, rng):
        for _ in range(200):
            assert max_impact_level(build_count_tree(rng.random(5))) >= 3


class TestTail:
    def test_exponential_far_tail(self):
        assert 0 < tail_correction(EXP3, 10, 1e-12) < 2.0 ** -29

    def test_first_term(self):
        assert math.isclose(tail_correction(PriorSchedule.polynomial(0.0 + 2), 1, 1e-14) - tail_correction(
            PriorSchedule.polynomial(2), 2, 1e-14), LOG2 - 0.5, rel_tol=1e-12)

    @pytest.mark.parametrize("prior", [PriorSchedule.polynomial(2), PriorSchedule.polynomial(1.5),
                                       PriorSchedule.polynomial(3, c=0.5), EXP3, PriorSchedule.exponential(1.0)])
    def test_terms_bounded_by_inverse_a(self, prior):
        for l in range(1, 41):
            a = prior.a(l)
            t = tail_correction(prior, l, 1e-15) - tail_correction(prior, l + 1, 1e-15)
            assert -1e-14 < t * a <= 1.0 + 1e-9

    @staticmethod
    def reference_tail(prior, start, cutoff=3000):
        """Explicit 30-digit sum to ``cutoff`` plus a remainder expansion to order a^-4."""
        with mpmath.workdps(30):
            a = lambda l: prior.c * (mpmath.mpf(l) ** prior.rate if prior.family == "polynomial"
                                     else mpmath.power(2, prior.rate * l))
            head = mpmath.fsum(mpmath.log(2) + mpmath.digamma(a(l) + 1) - mpmath.digamma(2 * a(l) + 1)
                               for l in range(start, cutoff))
            if prior.family == "polynomial":
                z = lambda k: prior.c ** -k * mpmath.zeta(k * prior.rate, cutoff)
                rest = z(1) / 4 - z(2) / 16 + z(4) / 128
            else:
                rest = mpmath.fsum(1 / (4 * a(l)) for l in range(cutoff, cutoff + 5))
            return float(head + rest)

    @pytest.mark.parametrize("prior", [PriorSchedule.polynomial(2), PriorSchedule.polynomial(1.5), EXP3,
                                       PriorSchedule.exponential(0.5, c=2)])
    def test_against_high_precision_sum(self, prior):
        assert abs(tail_correction(prior, 3, 1e-12) - self.reference_tail(prior, 3)) < 1e-10

    def test_variance_tail_against_sum(self):
        prior = PriorSchedule.polynomial(2)
        direct = sum(trigamma(1 + prior.a(l)) - trigamma(1 + 2 * prior.a(l)) for l in range(2, 200_000))
        # remainder beyond 2e5 is about sum 1/(2 l^2)
        assert abs(variance_tail(prior, 2, 1e-13) - direct - 0.5 / 200_000) < 1e-9

    def test_divergent_schedule(self):
        with pytest.raises(ConvergenceError):
            tail_correction(PriorSchedule.polynomial(1.0), 1)


def random_counts(rng, n, p=1):
    return build_count_tree(rng.beta(0.7, 1.3, (n, p)), PartitionSpec(p))


class TestEstimator:
    def test_single_point_closed_form(self):
        est = entropy_estimate(build_count_tree([0.41]), EXP3, TruncationPolicy("max_impact"))
        generic = LOG2 + float(mpmath.digamma(9) - mpmath.digamma(17))
        assert est.impact_level == 2
        assert math.isclose(est.value, -(generic + tail_correction(EXP3, 2)), rel_tol=1e-12)
        assert math.isclose(est.value, -tail_correction(EXP3, 1), rel_tol=1e-12)

    @given(st.integers(min_value=1, max_value=400), st.integers(min_value=1, max_value=3),
           st.integers(min_value=0, max_value=2 ** 31))
    def test_form_equivalence(self, n, p, seed):
        rng = np.random.default_rng(seed)
        counts = random_counts(rng, n, p)
        for prior in (EXP3, PriorSchedule.polynomial(2)):
            depth = min(max_impact_level(counts), counts.max_depth)
            a = estimator_sum(counts, prior, depth, "child")
            b = estimator_sum(counts, prior, depth, "parent")
            assert abs(a - b) / n <= 1e-10

    def test_truncation_insensitivity(self, rng):
        for _ in range(20):
            counts = random_counts(rng, 300)
            lx = max_impact_level(counts)
            for prior in (EXP3, PriorSchedule.polynomial(3)):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", PriorConditionWarning)
                    h = [entropy_estimate(counts, prior, TruncationPolicy("fixed", lx + k)).value
                         for k in range(6)]
                bound = sum(1 / prior.a(l) for l in range(lx, lx + 6)) + 1e-12
                assert max(h) - min(h) <= bound

    def test_matches_posterior_monte_carlo(self, rng):
        # -E[sum log theta(X_i) / n | X] at the materialised depth, by sampling theta
        x = rng.beta(2, 2, 40)
        counts = build_count_tree(x)
        prior = PriorSchedule.polynomial(2)
        depth = max_impact_level(counts)
        closed = -estimator_sum(counts, prior, depth) / counts.n
        draws = 1000
        mats = sample_split_matrix(PosteriorTree(prior, counts), depth, seed=5, draws=draws)
        codes = encode_array(x, depth, PartitionSpec(1))
        logs = np.zeros(draws)
        for l in range(1, depth + 1):
            c = (codes >> np.uint64(depth - l)).astype(np.int64)
            y = mats[l - 1][:, c >> 1]
            logs += np.sum(np.log(2 * np.where(c & 1, 1 - y, y)), axis=1)
        mc = -logs / counts.n
        assert abs(mc.mean() - closed) <= 3 * mc.std(ddof=1) / math.sqrt(draws)
        # and the posterior variance of the same quantity
        var = posterior_variance(counts, prior, depth) - variance_tail(prior, depth + 1) / counts.n
        se_var = var * math.sqrt(2 / (draws - 1))
        assert abs(mc.var(ddof=1) - var) <= 4 * se_var

    def test_variance_single_level(self):
        counts = build_count_tree([0.2])
        prior = PriorSchedule.polynomial(2)
        body = posterior_variance(counts, prior, 1) - variance_tail(prior, 2)
        assert math.isclose(body, 0.25, rel_tol=1e-12)

    def test_parcel_variance(self, rng):
        n0, n1, a = 3, 5, 4.0
        y = rng.beta(a + n0, a + n1, 100_000)
        parcel = n0 * np.log(y) + n1 * np.log1p(-y)
        exact = n0 ** 2 * trigamma(a + n0) + n1 ** 2 * trigamma(a + n1) - (n0 + n1) ** 2 * trigamma(2 * a + n0 + n1)
        se = exact * math.sqrt(2 / (y.size - 1))
        assert abs(parcel.var(ddof=1) - exact) <= 3 * se * 1.5

    def test_variance_shrinks_with_n(self):
        x = np.random.default_rng(3).random(10_000)
        v = [entropy_estimate(build_count_tree(x[:n]), EXP3).posterior_variance for n in (100, 1000, 10_000)]
        assert v[0] > v[1] > v[2] > 0

    def test_uniform_accuracy(self):
        errs = [abs(entropy_estimate(build_count_tree(np.random.default_rng(s).random(10_000)), EXP3).value)
                for s in range(20)]
        assert np.median(errs) < 0.05

    def test_prior_condition_warning(self):
        counts = build_count_tree([0.1, 0.5, 0.9])
        with pytest.warns(PriorConditionWarning):
            est = entropy_estimate(counts, PriorSchedule.polynomial(3))
        assert "prior-below-entropy-rate" in est.warnings
        assert math.isfinite(est.value)

    def test_units_and_dict(self):
        est = entropy_estimate(build_count_tree([0.1, 0.5, 0.9]), EXP3)
        bits = est.in_bits()
        assert math.isclose(bits.value, est.value / LOG2)
        assert math.isclose(bits.posterior_variance, est.posterior_variance / LOG2 ** 2)
        d = est.to_dict()
        assert set(d) >= {"value", "posterior_variance", "truncation_level", "tail_correction", "tail_terms_used"}
        assert est.posterior_variance >= 0

    def test_ties_flagged(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = entropy_estimate(build_count_tree([0.3, 0.3, 0.6]), EXP3, TruncationPolicy("max_impact"))
        assert "impact-level-capped" in est.warnings
        assert math.isfinite(est.value)

    def test_empty_sample(self):
        with pytest.raises(EstimateUndefinedError):
            entropy_estimate(build_count_tree(np.zeros((0, 1))), EXP3)

    def test_two_dimensional_uniform(self):
        rng = np.random.default_rng(8)
        errs = [abs(entropy_estimate(build_count_tree(rng.random((5000, 2)), PartitionSpec(2)), EXP3).value)
                for _ in range(10)]
        assert np.median(errs) < 0.05
