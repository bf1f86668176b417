"""Known densities on the unit cube with analytic entropies.

Each :class:`DensityOracle` bundles a pdf, a cell-mass function, a sampler and
the metadata that the consistency results depend on: finite entropy,
the split-ratio bound ``m`` (every ``F0(B_eps0)/F0(B_eps)`` lies in
``(m, 1 - m)``) and whether the density is bounded away from 0 and infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

# largest float below 1; samplers clip here so draws stay in [0, 1)
_BELOW_ONE = np.nextafter(1.0, 0.0)


def _first(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, 0] if x.ndim == 2 else x


@dataclass(frozen=True)
class DensityOracle:
    name: str
    dimension: int
    pdf: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray] | None = None
    box_mass: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    entropy: float | None = None
    l2_norm_sq: float | None = None
    monotone_breaks: tuple[float, ...] | None = None
    finite_entropy: bool = True
    split_ratio_bound: float | None = None
    bounded_away: bool = False
    bounds: tuple[float, float] | None = None
    description: str = field(default="", compare=False)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``(n, p)`` draws in ``[0, 1)^p``."""
        x = np.asarray(self.sampler(rng, n), dtype=np.float64).reshape(n, self.dimension)
        return np.clip(x, 0.0, _BELOW_ONE)

    @property
    def square_integrable(self) -> bool:
        return self.l2_norm_sq is not None and math.isfinite(self.l2_norm_sq)


# ---------------------------------------------------------------------------
# zoo
# ---------------------------------------------------------------------------

def uniform() -> DensityOracle:
    return DensityOracle(
        name="uniform", dimension=1,
        pdf=lambda x: np.ones_like(_first(x)),
        sampler=lambda rng, n: rng.random(n),
        cdf=lambda x: np.clip(_first(x), 0.0, 1.0),
        entropy=0.0, l2_norm_sq=1.0, monotone_breaks=(),
        split_ratio_bound=0.5, bounded_away=True, bounds=(1.0, 1.0),
        description="Uniform(0, 1)",
    )


def beta22() -> DensityOracle:
    # H = log B(2,2) - psi(2) - psi(2) + 2 psi(4) = 5/3 - log 6;
    # split ratios approach 1/4 in the edge cells where f0 ~ 6t
    return DensityOracle(
        name="beta22", dimension=1,
        pdf=lambda x: 6.0 * _first(x) * (1.0 - _first(x)),
        sampler=lambda rng, n: rng.beta(2.0, 2.0, n),
        cdf=lambda x: (lambda t: t * t * (3.0 - 2.0 * t))(np.clip(_first(x), 0.0, 1.0)),
        entropy=5.0 / 3.0 - math.log(6.0), l2_norm_sq=1.2, monotone_breaks=(0.5,),
        split_ratio_bound=0.25, bounded_away=False, bounds=(0.0, 1.5),
        description="Beta(2, 2)",
    )


def beta_half() -> DensityOracle:
    # arcsine law; near an edge F0 ~ sqrt(t), so edge split ratios tend to 1 - 1/sqrt 2
    def pdf(x):
        t = _first(x)
        with np.errstate(divide="ignore"):
            return 1.0 / (math.pi * np.sqrt(t * (1.0 - t)))

    return DensityOracle(
        name="beta-half", dimension=1,
        pdf=pdf,
        sampler=lambda rng, n: rng.beta(0.5, 0.5, n),
        cdf=lambda x: 2.0 / math.pi * np.arcsin(np.sqrt(np.clip(_first(x), 0.0, 1.0))),
        entropy=math.log(math.pi / 4.0), l2_norm_sq=math.inf, monotone_breaks=(0.5,),
        split_ratio_bound=1.0 - 1.0 / math.sqrt(2.0), bounded_away=False, bounds=None,
        description="Beta(1/2, 1/2)",
    )


def truncated_normal(mu: float = 0.5, sigma: float = 0.25) -> DensityOracle:
    alpha, beta = -mu / sigma, (1.0 - mu) / sigma
    z = special.ndtr(beta) - special.ndtr(alpha)
    phi = lambda u: np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
    entropy = (math.log(math.sqrt(2.0 * math.pi * math.e) * sigma * z)
               + (alpha * phi(alpha) - beta * phi(beta)) / (2.0 * z))
    l2 = (special.ndtr(math.sqrt(2.0) * beta) - special.ndtr(math.sqrt(2.0) * alpha)) / (
        2.0 * math.sqrt(math.pi) * sigma * z * z)
    pdf = lambda x: phi((_first(x) - mu) / sigma) / (sigma * z)
    cdf = lambda x: (special.ndtr((np.clip(_first(x), 0.0, 1.0) - mu) / sigma) - special.ndtr(alpha)) / z

    def sampler(rng, n):
        u = rng.random(n)
        return mu + sigma * special.ndtri(special.ndtr(alpha) + u * z)

    f_edges = float(min(pdf(np.array([0.0, 1.0]))))
    f_peak = float(pdf(np.array([min(max(mu, 0.0), 1.0)]))[0])
    return DensityOracle(
        name="truncnorm", dimension=1, pdf=pdf, sampler=sampler, cdf=cdf,
        entropy=float(entropy), l2_norm_sq=float(l2), monotone_breaks=(min(max(mu, 0.0), 1.0),),
        split_ratio_bound=_scan_split_ratio(cdf), bounded_away=True, bounds=(f_edges, f_peak),
        description=f"Normal({mu}, {sigma}^2) truncated to [0, 1]",
    )


def _scan_split_ratio(cdf, depth: int = 16) -> float:
    """Smallest ``F0(B_eps0)/F0(B_eps)`` (or its complement) over levels ``<= depth``."""
    grid = cdf(np.linspace(0.0, 1.0, (1 << depth) + 1))
    finest = np.diff(grid)
    lowest = 0.5
    level = finest
    while level.size > 1:
        parent = level[0::2] + level[1::2]
        y = level[0::2] / parent
        lowest = min(lowest, float(y.min()), float((1.0 - y).min()))
        level = parent
    return lowest


def beta22_uniform_2d() -> DensityOracle:
    b = beta22()

    def box_mass(lower, upper):
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        return (b.cdf(upper[:, 0]) - b.cdf(lower[:, 0])) * (np.clip(upper[:, 1], 0, 1) - np.clip(lower[:, 1], 0, 1))

    return DensityOracle(
        name="beta22-uniform-2d", dimension=2,
        pdf=lambda x: b.pdf(np.asarray(x)[:, 0]),
        sampler=lambda rng, n: np.column_stack([rng.beta(2.0, 2.0, n), rng.random(n)]),
        box_mass=box_mass,
        entropy=b.entropy, l2_norm_sq=b.l2_norm_sq, monotone_breaks=None,
        split_ratio_bound=0.25, bounded_away=False, bounds=(0.0, 1.5),
        description="Beta(2, 2) x Uniform(0, 1)",
    )


def uniform_2d() -> DensityOracle:
    def box_mass(lower, upper):
        return np.prod(np.clip(np.asarray(upper), 0, 1) - np.clip(np.asarray(lower), 0, 1), axis=1)

    return DensityOracle(
        name="uniform-2d", dimension=2,
        pdf=lambda x: np.ones(np.asarray(x).shape[0]),
        sampler=lambda rng, n: rng.random((n, 2)),
        box_mass=box_mass, entropy=0.0, l2_norm_sq=1.0, monotone_breaks=None,
        split_ratio_bound=0.5, bounded_away=True, bounds=(1.0, 1.0),
        description="Uniform on the unit square",
    )


def piecewise_constant(masses) -> DensityOracle:
    """1D density that is constant on each of the ``2**k`` dyadic cells."""
    masses = np.asarray(masses, dtype=np.float64)
    k = int(masses.size).bit_length() - 1
    if masses.size != 1 << k or np.any(masses < 0) or not math.isclose(masses.sum(), 1.0, abs_tol=1e-12):
        raise ValueError("need 2**k non-negative masses summing to 1")
    cum = np.concatenate([[0.0], np.cumsum(masses)])
    heights = np.ldexp(masses, k)

    def cdf(x):
        t = np.clip(_first(x), 0.0, 1.0)
        scaled = np.ldexp(t, k)
        i = np.minimum(np.floor(scaled).astype(np.int64), masses.size - 1)
        return cum[i] + (scaled - i) * masses[i]

    def pdf(x):
        t = _first(x)
        i = np.clip(np.floor(np.ldexp(t, k)).astype(np.int64), 0, masses.size - 1)
        return heights[i]

    def sampler(rng, n):
        cell = rng.choice(masses.size, size=n, p=masses / masses.sum())
        return np.ldexp(cell + rng.random(n), -k)

    with np.errstate(divide="ignore", invalid="ignore"):
        h = float(-np.sum(np.where(masses > 0, masses * np.log(heights), 0.0)))
    return DensityOracle(
        name=f"piecewise-{k}", dimension=1, pdf=pdf, sampler=sampler, cdf=cdf,
        entropy=h, l2_norm_sq=float(np.sum(masses * heights)), monotone_breaks=None,
        bounded_away=bool(masses.min() > 0), bounds=(float(heights.min()), float(heights.max())),
        description=f"piecewise constant on {masses.size} dyadic cells",
    )


ZOO: dict[str, Callable[[], DensityOracle]] = {
    "uniform": uniform,
    "beta22": beta22,
    "beta-half": beta_half,
    "truncnorm": truncated_normal,
    "beta22-uniform-2d": beta22_uniform_2d,
    "uniform-2d": uniform_2d,
}


def get_density(name: str) -> DensityOracle:
    try:
        return ZOO[name]()
    except KeyError:
        raise ValueError(f"unknown density {name!r}; choose from {sorted(ZOO)}") from None
