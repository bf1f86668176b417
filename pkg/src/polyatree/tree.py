"""Polya tree priors on the canonical partition and their conjugate posteriors.

The prior draws an independent split ``Y_eps0 ~ Beta(a_l, a_l)`` at every cell
``eps`` of depth ``l - 1``; the density of the random measure on a depth-``j``
cell is ``2**j`` times the product of the splits along its path.  Given data,
the split at ``eps`` becomes ``Beta(a_l + N_eps0, a_l + N_eps1)``.

Counts are kept sparse: a :class:`CountTree` stores the sorted packed codes
of the sample at its maximum depth and derives each level on demand, so
memory is ``O(n)`` and a level costs ``O(n)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator

import numpy as np
from scipy.special import zeta

from .errors import DomainError
from .partition import BinaryPath, PartitionSpec, check_points, encode_array
from .specfun import digamma_remainder

LOG2 = math.log(2.0)
#: deepest level for which dense (2**depth sized) arrays are built
DENSE_DEPTH_LIMIT = 24


# ---------------------------------------------------------------------------
# prior schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriorSchedule:
    """Level parameters ``a_l`` of a Polya tree, ``l >= 1``.

    ``polynomial``: ``a_l = c * l**rate``; ``exponential``: ``a_l = c * 2**(rate*l)``.
    """

    family: str
    rate: float
    c: float = 1.0

    def __post_init__(self):
        if self.family not in ("polynomial", "exponential"):
            raise ValueError(f"unknown prior family {self.family!r}")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not math.isfinite(self.rate):
            raise ValueError("rate must be finite")

    @classmethod
    def polynomial(cls, rho: float, c: float = 1.0) -> "PriorSchedule":
        return cls("polynomial", float(rho), float(c))

    @classmethod
    def exponential(cls, beta: float, c: float = 1.0) -> "PriorSchedule":
        return cls("exponential", float(beta), float(c))

    @classmethod
    def parse(cls, text: str) -> "PriorSchedule":
        """Parse ``exp:c=1,beta=3`` or ``poly:c=1,rho=3`` (``c`` optional)."""
        m = re.fullmatch(r"\s*(exp|exponential|poly|polynomial)\s*:\s*(.*)", text)
        if not m:
            raise ValueError(f"cannot parse prior {text!r}; expected e.g. 'exp:c=1,beta=3'")
        kind, rest = m.groups()
        params = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"bad prior parameter {item!r}")
            params[key.strip()] = float(value)
        c = params.pop("c", 1.0)
        rate_key = "beta" if kind.startswith("exp") else "rho"
        if rate_key not in params:
            raise ValueError(f"prior {text!r} is missing {rate_key}=")
        rate = params.pop(rate_key)
        if params:
            raise ValueError(f"unexpected prior parameters {sorted(params)}")
        family = "exponential" if kind.startswith("exp") else "polynomial"
        return cls(family, rate, c)

    def __str__(self) -> str:
        if self.family == "exponential":
            return f"exp:c={self.c:g},beta={self.rate:g}"
        return f"poly:c={self.c:g},rho={self.rate:g}"

    def a(self, level):
        """``a_l`` for a level or an array of levels (all ``>= 1``)."""
        lv = np.asarray(level, dtype=np.float64)
        if np.any(lv < 1):
            raise ValueError("prior levels start at 1")
        if self.family == "exponential":
            out = self.c * np.exp2(self.rate * lv)
        else:
            out = self.c * lv ** self.rate
        return float(out) if np.ndim(level) == 0 else out

    @property
    def satisfies_abs_continuity(self) -> bool:
        """``sum 1/a_l < inf``."""
        return self.rate > 0 if self.family == "exponential" else self.rate > 1

    @property
    def satisfies_regularity(self) -> bool:
        """``sum l/a_l < inf``."""
        return self.rate > 0 if self.family == "exponential" else self.rate > 2

    @property
    def satisfies_entropy_rate(self) -> bool:
        """``a_l = 2**(beta l)`` with ``beta > 2``."""
        return self.family == "exponential" and self.rate > 2

    def inverse_power_tail(self, from_level: int, power: int = 1) -> float:
        """``sum_{l >= from_level} a_l**-power`` in closed form."""
        if from_level < 1:
            raise ValueError("from_level must be >= 1")
        if self.family == "exponential":
            if self.rate <= 0:
                return math.inf
            q = 2.0 ** (-self.rate * power)
            return self.c ** -power * q ** from_level / (1.0 - q)
        s = self.rate * power
        if s <= 1:
            return math.inf
        return self.c ** -power * float(zeta(s, from_level))


# ---------------------------------------------------------------------------
# Beta split expectations, written to stay accurate when a_l is huge
# ---------------------------------------------------------------------------

def expected_log_split(n_child, n_parent, a):
    """``E[log 2Y]`` for ``Y ~ Beta(a + n_child, a + n_parent - n_child)``.

    Equals ``log 2 + psi(a + n_child) - psi(2a + n_parent)``, evaluated as
    ``log1p((2 n_child - n_parent) / (2a + n_parent)) - r(a + n_child) + r(2a + n_parent)``
    with ``r(z) = log z - psi(z)`` so no digits are lost for large ``a``.
    """
    nc = np.asarray(n_child, dtype=np.float64)
    npar = np.asarray(n_parent, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    x = a + nc
    y = 2.0 * a + npar
    out = np.log1p((2.0 * nc - npar) / y) - digamma_remainder(x) + digamma_remainder(y)
    return float(out) if np.ndim(out) == 0 else out


def log_mean_split(n_child, n_parent, a):
    """``log E[2Y] = log(2(a + n_child) / (2a + n_parent))``."""
    nc = np.asarray(n_child, dtype=np.float64)
    npar = np.asarray(n_parent, dtype=np.float64)
    out = np.log1p((2.0 * nc - npar) / (2.0 * np.asarray(a, dtype=np.float64) + npar))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# counts
# ---------------------------------------------------------------------------

def _lookup(keys: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    """``values`` at ``query`` positions of sorted ``keys``; zero where absent."""
    query = np.asarray(query, dtype=np.uint64)
    if keys.size == 0:
        return np.zeros(query.shape, dtype=values.dtype)
    pos = np.searchsorted(keys, query)
    pos_c = np.minimum(pos, keys.size - 1)
    hit = keys[pos_c] == query
    return np.where(hit, values[pos_c], 0)


class CountTree:
    """Sparse counts ``N_eps`` of a sample along the partition tree.

    Levels ``0..max_depth`` are available.  ``level(l)`` returns the sorted
    codes of non-empty depth-``l`` cells and their counts; missing cells have
    count zero.
    """

    def __init__(self, codes: np.ndarray, max_depth: int, spec: PartitionSpec):
        self.spec = spec
        self.max_depth = int(max_depth)
        self.codes = np.sort(np.asarray(codes, dtype=np.uint64))
        self.n = int(self.codes.size)
        self._levels: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @classmethod
    def empty(cls, spec: PartitionSpec = PartitionSpec(), max_depth: int | None = None) -> "CountTree":
        return cls(np.zeros(0, dtype=np.uint64), spec.max_depth if max_depth is None else max_depth, spec)

    def __repr__(self) -> str:
        return f"CountTree(n={self.n}, max_depth={self.max_depth}, p={self.spec.dimension})"

    def level(self, l: int) -> tuple[np.ndarray, np.ndarray]:
        if not 0 <= l <= self.max_depth:
            raise ValueError(f"level {l} outside [0, {self.max_depth}]")
        cached = self._levels.get(l)
        if cached is not None:
            return cached
        if self.n == 0:
            out = (np.zeros(0, dtype=np.uint64), np.zeros(0, dtype=np.int64))
        else:
            shift = self.max_depth - l
            keys = self.codes >> np.uint64(shift) if shift < 64 else np.zeros_like(self.codes)
            starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
            counts = np.diff(np.r_[starts, keys.size]).astype(np.int64)
            out = (keys[starts], counts)
        self._levels[l] = out
        return out

    def counts_at(self, l: int, keys) -> np.ndarray:
        """Counts of the depth-``l`` cells with packed codes ``keys``."""
        lk, lc = self.level(l)
        return _lookup(lk, lc, keys)

    def count(self, path: BinaryPath) -> int:
        l = len(path)
        if l > self.max_depth:
            raise ValueError(f"path of length {l} is deeper than max_depth={self.max_depth}")
        return int(self.counts_at(l, np.array([path.bits], dtype=np.uint64))[0])

    __getitem__ = count

    def max_count(self, l: int) -> int:
        _, c = self.level(l)
        return int(c.max()) if c.size else 0

    @cached_property
    def singleton_level(self) -> int | None:
        """Smallest ``j >= 1`` with every depth-``j`` count ``<= 1``; None if past max_depth."""
        if self.n == 0:
            return None
        lo, hi = 1, self.max_depth
        if self.max_count(hi) > 1:
            return None
        # max count is non-increasing in depth: bisect
        while lo < hi:
            mid = (lo + hi) // 2
            if self.max_count(mid) <= 1:
                hi = mid
            else:
                lo = mid + 1
        return lo

    @property
    def counts(self) -> dict[BinaryPath, int]:
        """All non-zero ``N_eps`` for ``1 <= l(eps) <= max_depth`` as a dict."""
        out = {}
        for l in range(1, self.max_depth + 1):
            keys, cnt = self.level(l)
            for k, c in zip(keys.tolist(), cnt.tolist()):
                out[BinaryPath(l, k)] = c
        return out

    def items(self, l: int) -> Iterator[tuple[BinaryPath, int]]:
        keys, cnt = self.level(l)
        for k, c in zip(keys.tolist(), cnt.tolist()):
            yield BinaryPath(l, k), c

    def dense_level(self, l: int) -> np.ndarray:
        """Counts of all ``2**l`` depth-``l`` cells, in path order."""
        if l > DENSE_DEPTH_LIMIT:
            raise ValueError(f"dense level {l} exceeds limit {DENSE_DEPTH_LIMIT}")
        out = np.zeros(1 << l, dtype=np.int64)
        keys, cnt = self.level(l)
        out[keys.astype(np.int64)] = cnt
        return out

    def update(self, sample) -> "CountTree":
        """Counts of this sample plus ``sample`` (conjugate update)."""
        extra = encode_array(sample, self.max_depth, self.spec)
        return CountTree(np.concatenate([self.codes, extra]), self.max_depth, self.spec)


def build_count_tree(sample, spec: PartitionSpec = PartitionSpec(), max_depth: int | None = None) -> CountTree:
    """Count the sample in every cell down to ``max_depth`` (default: deepest supported)."""
    if max_depth is None:
        max_depth = spec.max_depth
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    x = check_points(sample, spec)
    return CountTree(encode_array(x, max_depth, spec), max_depth, spec)


# ---------------------------------------------------------------------------
# posterior
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PosteriorTree:
    prior: PriorSchedule
    counts: CountTree = field(default_factory=CountTree.empty)

    @property
    def spec(self) -> PartitionSpec:
        return self.counts.spec

    @property
    def n(self) -> int:
        return self.counts.n

    def dense_split_params(self, l: int) -> tuple[np.ndarray, np.ndarray]:
        """Beta parameters of every split introduced at level ``l``, by parent index."""
        a = self.prior.a(l)
        child = self.counts.dense_level(l).astype(np.float64)
        return a + child[0::2], a + child[1::2]


def posterior_split_params(post: PosteriorTree, path: BinaryPath) -> tuple[float, float]:
    """``(a_{l+1} + N_path0, a_{l+1} + N_path1)`` with ``l = len(path)``."""
    a = post.prior.a(len(path) + 1)
    return a + post.counts[path.child(0)], a + post.counts[path.child(1)]


def _default_depth(post: PosteriorTree) -> int:
    from .entropy import deterministic_truncation

    return min(deterministic_truncation(max(post.n, 1)), post.counts.max_depth)


def predictive_log_density_array(points, post: PosteriorTree, depth: int | None = None) -> np.ndarray:
    """``log E[theta^depth(t) | X]`` at each row of ``points``."""
    if depth is None:
        depth = _default_depth(post)
    if depth > post.counts.max_depth:
        raise ValueError(f"depth {depth} exceeds the count tree's max_depth {post.counts.max_depth}")
    x = check_points(points, post.spec)
    codes = encode_array(x, depth, post.spec)
    out = np.zeros(x.shape[0])
    if post.n == 0:
        return out
    n_parent = np.full(x.shape[0], post.n, dtype=np.int64)
    for l in range(1, depth + 1):
        live = n_parent > 0
        if not np.any(live):
            break  # remaining factors are exactly 2 * 1/2
        n_child = post.counts.counts_at(l, codes >> np.uint64(depth - l))
        a = post.prior.a(l)
        out[live] += log_mean_split(n_child[live], n_parent[live], a)
        n_parent = n_child
    return out


def predictive_log_density(point, post: PosteriorTree, depth: int | None = None) -> float:
    """Log of the posterior-mean density ``E[theta(t) | X]`` truncated at ``depth``."""
    x = np.atleast_1d(np.asarray(point, dtype=np.float64)).reshape(1, -1)
    return float(predictive_log_density_array(x, post, depth)[0])


def predictive_masses(post: PosteriorTree, depth: int) -> np.ndarray:
    """Posterior-mean mass of every depth-``depth`` cell, in path order."""
    if depth > DENSE_DEPTH_LIMIT:
        raise ValueError(f"dense depth {depth} exceeds limit {DENSE_DEPTH_LIMIT}")
    masses = np.ones(1)
    parent = np.array([post.n], dtype=np.float64)
    for l in range(1, depth + 1):
        a = post.prior.a(l)
        child = post.counts.dense_level(l).astype(np.float64) if post.n else np.zeros(1 << l)
        denom = np.repeat(2.0 * a + parent, 2)
        masses = np.repeat(masses, 2) * (a + child) / denom
        parent = child
    return masses


# ---------------------------------------------------------------------------
# sampled densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampledDensity:
    """A draw of a Polya tree truncated at ``depth``.

    ``splits[l-1][i]`` is ``Y`` of the left child of the depth-``(l-1)`` cell
    with index ``i``; the right child has ``1 - Y``.
    """

    depth: int
    splits: tuple[np.ndarray, ...]
    spec: PartitionSpec = PartitionSpec()

    def split_value(self, path: BinaryPath) -> float:
        if not 1 <= len(path) <= self.depth:
            raise ValueError("path length must be within 1..depth")
        y = float(self.splits[len(path) - 1][path.bits >> 1])
        return y if path.bits & 1 == 0 else 1.0 - y

    def cell_masses(self, level: int | None = None) -> np.ndarray:
        level = self.depth if level is None else level
        masses = np.ones(1)
        for l in range(1, level + 1):
            y = self.splits[l - 1]
            masses = np.column_stack([masses * y, masses * (1.0 - y)]).ravel()
        return masses

    def densities(self, level: int | None = None) -> np.ndarray:
        level = self.depth if level is None else level
        return np.ldexp(self.cell_masses(level), level)

    def density(self, points) -> np.ndarray:
        codes = encode_array(points, self.depth, self.spec)
        return self.densities()[codes.astype(np.int64)]


def _level_rng(seed: int, level: int) -> np.random.Generator:
    # one stream per level so deeper draws extend shallower ones
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(level,)))


def beta_via_gamma(rng: np.random.Generator, alpha, beta, size=None) -> np.ndarray:
    g1 = rng.standard_gamma(alpha, size=size)
    g2 = rng.standard_gamma(beta, size=size)
    return g1 / (g1 + g2)


def sample_density(post: PosteriorTree, depth: int | None = None, seed: int = 0) -> SampledDensity:
    """Draw ``theta^depth`` from the posterior (the prior if ``post`` has no data)."""
    if depth is None:
        depth = _default_depth(post)
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if depth > DENSE_DEPTH_LIMIT:
        raise ValueError(f"dense depth {depth} exceeds limit {DENSE_DEPTH_LIMIT}")
    splits = []
    for l in range(1, depth + 1):
        alpha, beta = post.dense_split_params(l) if post.n else (
            np.full(1 << (l - 1), post.prior.a(l)), np.full(1 << (l - 1), post.prior.a(l)))
        splits.append(beta_via_gamma(_level_rng(seed, l), alpha, beta))
    return SampledDensity(depth, tuple(splits), post.spec)


def sample_split_matrix(post: PosteriorTree, depth: int, seed: int, draws: int) -> list[np.ndarray]:
    """``draws`` independent posterior draws at once: entry ``l-1`` has shape ``(draws, 2**(l-1))``."""
    if depth > DENSE_DEPTH_LIMIT:
        raise ValueError(f"dense depth {depth} exceeds limit {DENSE_DEPTH_LIMIT}")
    out = []
    for l in range(1, depth + 1):
        if post.n:
            alpha, beta = post.dense_split_params(l)
        else:
            alpha = beta = np.full(1 << (l - 1), post.prior.a(l))
        size = (draws, alpha.size)
        out.append(beta_via_gamma(_level_rng(seed, l), np.broadcast_to(alpha, size), np.broadcast_to(beta, size)))
    return out


def density_envelope(dens: SampledDensity) -> tuple[float, float]:
    """``(prod_l min 2Y, prod_l max 2Y)`` over the split values of each level."""
    lo = hi = 1.0
    for y in dens.splits:
        two_y = 2.0 * np.concatenate([y, 1.0 - y])
        lo *= float(two_y.min())
        hi *= float(two_y.max())
    return lo, hi


__all__ = [
    "CountTree",
    "DENSE_DEPTH_LIMIT",
    "PosteriorTree",
    "PriorSchedule",
    "SampledDensity",
    "beta_via_gamma",
    "build_count_tree",
    "density_envelope",
    "expected_log_split",
    "log_mean_split",
    "posterior_split_params",
    "predictive_log_density",
    "predictive_log_density_array",
    "predictive_masses",
    "sample_density",
    "sample_split_matrix",
]
