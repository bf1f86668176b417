"""Polya tree estimator of differential entropy.

For counts ``N_eps`` of an i.i.d. sample of size ``n``,

    H_hat = -(1/n) * sum_eps N_eps * (log 2 + psi(N_eps + a_l) - psi(N_parent + 2 a_l)),

which is ``-E[sum_i log theta(X_i) / n | X]`` under the posterior.  Below the
maximum impact level every non-empty cell holds one point whose parent also
holds one point, so each level contributes the same closed-form term
``log 2 + psi(a_l + 1) - psi(2 a_l + 1)``; those levels are summed as a
series instead of being materialised.  Values are in nats.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConvergenceError, DepthCapWarning, EstimateUndefinedError, PriorConditionWarning
from .specfun import digamma, trigamma
from .tree import LOG2, CountTree, PriorSchedule, expected_log_split

DEFAULT_TAIL_TOLERANCE = 1e-12
_MAX_TAIL_TERMS = 10_000_000

# asymptotic expansions in 1/a of the per-level singleton terms; the
# remainder after these is bounded by a**-residual_power
_ENTROPY_EXPANSION = ((1, 0.25), (2, -1.0 / 16.0))
_ENTROPY_RESIDUAL_POWER = 4
_VARIANCE_EXPANSION = ((1, 0.5), (2, -3.0 / 8.0), (3, 7.0 / 48.0))
_VARIANCE_RESIDUAL_POWER = 5


def deterministic_truncation(n: int) -> int:
    """``ceil(3 log2 n)``, at least 2; exact integer arithmetic."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return max(2, (n ** 3 - 1).bit_length())


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncationPolicy:
    """Where to stop materialising the tree.

    ``max_impact`` uses the maximum impact level, ``deterministic`` uses
    ``ceil(3 log2 n)``, ``fixed`` uses ``level``, and ``auto`` takes the
    smaller of the first two.
    """

    kind: str = "auto"
    level: int | None = None
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE

    def __post_init__(self):
        if self.kind not in ("auto", "max_impact", "deterministic", "fixed"):
            raise ValueError(f"unknown truncation policy {self.kind!r}")
        if self.kind == "fixed" and (self.level is None or self.level < 1):
            raise ValueError("fixed policy needs a level >= 1")
        if not self.tail_tolerance > 0:
            raise ValueError("tail_tolerance must be positive")

    @classmethod
    def parse(cls, text: str, tail_tolerance: float = DEFAULT_TAIL_TOLERANCE) -> "TruncationPolicy":
        """``auto``, ``max-impact``, ``deterministic`` or ``fixed:<level>``."""
        t = text.strip().lower().replace("-", "_")
        m = re.fullmatch(r"fixed[:=](\d+)", t)
        if m:
            return cls("fixed", int(m.group(1)), tail_tolerance)
        return cls(t, None, tail_tolerance)

    def __str__(self) -> str:
        return f"fixed:{self.level}" if self.kind == "fixed" else self.kind.replace("_", "-")

    def resolve(self, counts: CountTree) -> int:
        if self.kind == "fixed":
            return int(self.level)
        det = deterministic_truncation(counts.n)
        if self.kind == "deterministic":
            return det
        impact, _ = impact_level(counts)
        return impact if self.kind == "max_impact" else min(impact, det)


def impact_level(counts: CountTree) -> tuple[int, bool]:
    """``(L_X, capped)``; ``capped`` is set when ties keep counts above 1 at max_depth."""
    if counts.n < 1:
        raise EstimateUndefinedError("the maximum impact level needs n >= 1")
    j = counts.singleton_level
    if j is None:
        return counts.max_depth, True
    return j + 1, False


def max_impact_level(counts: CountTree) -> int:
    """``min{j >= 1 : max_eps N_eps = 1 at depth j} + 1``.

    With tied points the minimum does not exist; the tree depth is returned
    and a :class:`DepthCapWarning` is issued.
    """
    level, capped = impact_level(counts)
    if capped:
        warnings.warn(
            f"counts exceed 1 at max_depth={counts.max_depth} (tied points?); "
            "maximum impact level capped",
            DepthCapWarning,
            stacklevel=2,
        )
    return level


# ---------------------------------------------------------------------------
# tails
# ---------------------------------------------------------------------------

def _entropy_term(a):
    return expected_log_split(1.0, 1.0, a)


def _variance_term(a):
    return trigamma(1.0 + np.asarray(a)) - trigamma(1.0 + 2.0 * np.asarray(a))


def _series_tail(prior: PriorSchedule, from_level: int, tol: float, term, expansion, residual_power):
    """``sum_{l >= from_level} term(a_l)`` and the number of explicit terms.

    Exponential schedules stop once ``sum_{l > M} 1/a_l <= tol``, which bounds
    the rest because each term lies in ``(0, 1/a_l)``.  Polynomial schedules
    sum explicitly until the expansion remainder is below ``tol`` and add the
    expansion's tail through Hurwitz zeta sums.
    """
    if from_level < 1:
        raise ValueError("from_level must be >= 1")
    if not prior.satisfies_abs_continuity:
        raise ConvergenceError(f"sum 1/a_l diverges for prior {prior}; the tail does not converge")
    last = from_level - 1
    if prior.family == "exponential":
        while prior.inverse_power_tail(last + 1) > tol:
            last += 1
            if last - from_level > _MAX_TAIL_TERMS:
                raise ConvergenceError("tail needs too many terms")
        rest = 0.0
    else:
        while prior.inverse_power_tail(last + 1, residual_power) > tol:
            last = max(last + 1, int(last * 1.5))
            if last - from_level > _MAX_TAIL_TERMS:
                raise ConvergenceError("tail needs too many terms")
        rest = sum(coef * prior.inverse_power_tail(last + 1, power) for power, coef in expansion)
    if last < from_level:
        return rest, 0
    levels = np.arange(from_level, last + 1, dtype=np.float64)
    body = float(np.sum(term(prior.a(levels))))
    return body + rest, last - from_level + 1


def tail_correction(prior: PriorSchedule, from_level: int, tol: float = DEFAULT_TAIL_TOLERANCE) -> float:
    """``sum_{l >= from_level} (log 2 + psi(a_l + 1) - psi(2 a_l + 1))``."""
    value, _ = _series_tail(prior, from_level, tol, _entropy_term, _ENTROPY_EXPANSION, _ENTROPY_RESIDUAL_POWER)
    return value


def variance_tail(prior: PriorSchedule, from_level: int, tol: float = DEFAULT_TAIL_TOLERANCE) -> float:
    """``sum_{l >= from_level} (psi_1(a_l + 1) - psi_1(2 a_l + 1))``."""
    value, _ = _series_tail(prior, from_level, tol, _variance_term, _VARIANCE_EXPANSION, _VARIANCE_RESIDUAL_POWER)
    return value


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------

def _parent_child_counts(counts: CountTree, l: int):
    """Non-empty depth-``(l-1)`` cells and the counts of their two children."""
    pk, pc = counts.level(l - 1)
    left = counts.counts_at(l, pk << np.uint64(1))
    right = pc - left
    return pc, left, right


def estimator_sum(counts: CountTree, prior: PriorSchedule, depth: int, form: str = "child") -> float:
    """``sum_{1 <= l(eps) <= depth} N_eps E[log 2Y_eps | X]`` (not yet scaled by ``-1/n``).

    ``form="child"`` sums over cells, one term per child; ``form="parent"``
    groups the two children of each parent and uses plain digammas.  The two
    agree algebraically and are kept side by side as a check.
    """
    total = 0.0
    for l in range(1, depth + 1):
        a = prior.a(l)
        if form == "child":
            keys, cnt = counts.level(l)
            if cnt.size == 0:
                continue
            parent = counts.counts_at(l - 1, keys >> np.uint64(1))
            total += float(np.sum(cnt * expected_log_split(cnt, parent, a)))
        elif form == "parent":
            n_par, n0, n1 = _parent_child_counts(counts, l)
            if n_par.size == 0:
                continue
            n_par = n_par.astype(np.float64)
            n0 = n0.astype(np.float64)
            n1 = n1.astype(np.float64)
            total += float(np.sum(
                n_par * LOG2 + n0 * digamma(n0 + a) + n1 * digamma(n1 + a) - n_par * digamma(n_par + 2 * a)
            ))
        else:
            raise ValueError(f"unknown form {form!r}")
    return total


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    posterior_variance: float
    truncation_level: int
    tail_correction: float
    tail_terms_used: int
    impact_level: int
    n: int
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def posterior_sd(self) -> float:
        return math.sqrt(self.posterior_variance)

    def in_bits(self) -> "EntropyEstimate":
        s = 1.0 / LOG2
        return EntropyEstimate(
            self.value * s, self.posterior_variance * s * s, self.truncation_level,
            self.tail_correction * s, self.tail_terms_used, self.impact_level, self.n, self.warnings,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["warnings"] = list(self.warnings)
        return d


def posterior_variance(counts: CountTree, prior: PriorSchedule, level: int,
                       tol: float = DEFAULT_TAIL_TOLERANCE) -> float:
    """Posterior variance of ``sum_i log theta(X_i) / n``.

    Splits introduced at levels ``1..level`` are summed from the counts;
    deeper levels are treated as singleton branches.
    """
    n = counts.n
    if n < 1:
        raise EstimateUndefinedError("posterior variance needs n >= 1")
    depth = min(level, counts.max_depth)
    total = 0.0
    for l in range(1, depth + 1):
        a = prior.a(l)
        n_par, n0, n1 = _parent_child_counts(counts, l)
        if n_par.size == 0:
            continue
        n_par = n_par.astype(np.float64)
        n0 = n0.astype(np.float64)
        n1 = n1.astype(np.float64)
        total += float(np.sum(
            n0 ** 2 * trigamma(n0 + a) + n1 ** 2 * trigamma(n1 + a) - n_par ** 2 * trigamma(n_par + 2 * a)
        ))
    total /= float(n) ** 2
    total += variance_tail(prior, depth + 1, tol) / n
    return max(total, 0.0)


def entropy_estimate(counts: CountTree, prior: PriorSchedule,
                     policy: TruncationPolicy = TruncationPolicy()) -> EntropyEstimate:
    """Closed-form posterior entropy estimate with tail correction and variance."""
    n = counts.n
    if n < 1:
        raise EstimateUndefinedError("the entropy estimate is undefined for an empty sample")
    notes = []
    if not prior.satisfies_entropy_rate:
        notes.append("prior-below-entropy-rate")
        warnings.warn(
            f"prior {prior} is not of the form 2**(beta l) with beta > 2; consistency is not guaranteed",
            PriorConditionWarning,
            stacklevel=2,
        )
    impact, capped = impact_level(counts)
    if capped:
        notes.append("impact-level-capped")
        warnings.warn(
            f"counts exceed 1 at max_depth={counts.max_depth}; tail assumes singleton branches",
            DepthCapWarning,
            stacklevel=2,
        )
    level = policy.resolve(counts)
    depth = min(level, counts.max_depth)
    if not capped and depth < impact - 1:
        notes.append("truncated-above-impact-level")
    body = estimator_sum(counts, prior, depth)
    tail, terms = _series_tail(
        prior, depth + 1, policy.tail_tolerance, _entropy_term, _ENTROPY_EXPANSION, _ENTROPY_RESIDUAL_POWER
    )
    value = -body / n - tail
    var = posterior_variance(counts, prior, depth, policy.tail_tolerance)
    return EntropyEstimate(value, var, level, tail, terms, impact, n, tuple(notes))
