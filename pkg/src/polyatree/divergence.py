"""KL, entropy and total-variation functionals against a known density f0.

Everything here works at a matched finite depth.  ``F0(B_eps)`` comes from a
:class:`CellProbabilityTable`, which reads a closed-form CDF (or box mass)
when the density oracle has one and falls back to adaptive quadrature.

Density oracles are duck-typed: they need ``dimension`` and ``pdf`` (taking
``(n, p)`` points), and optionally ``box_mass(lower, upper)`` or, in 1D,
``cdf``.  ``monotone_breaks`` (1D) lists the points where the pdf changes
monotonicity; it lets :func:`total_variation` work at grid depths far beyond
what a dense array could hold.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ConvergenceError, DepthCapWarning
from .partition import BinaryPath, PartitionSpec, decode_array
from .quadrature import adaptive_simpson, integrate_box
from .tree import PosteriorTree, SampledDensity, expected_log_split

QUADRATURE_TOLERANCE = 1e-10
#: depth up to which tables hold every cell; deeper cells are computed on request
TABLE_DENSE_LIMIT = 20


def _interval_mass_fn(f0):
    """Vectorised ``(lower, upper) -> mass`` for boxes, and the source label."""
    box = getattr(f0, "box_mass", None)
    if box is not None:
        return box, "analytic-CDF"
    cdf = getattr(f0, "cdf", None)
    if cdf is not None and f0.dimension == 1:
        return (lambda lo, hi: cdf(hi[:, 0]) - cdf(lo[:, 0])), "analytic-CDF"

    def quad(lo, hi):
        if f0.dimension == 1:
            g = lambda t: f0.pdf(t.reshape(-1, 1))
            return adaptive_simpson(g, lo[:, 0], hi[:, 0], QUADRATURE_TOLERANCE)
        out = np.empty(lo.shape[0])
        for i, (l, h) in enumerate(zip(lo, hi)):
            try:
                out[i] = integrate_box(f0.pdf, l, h, QUADRATURE_TOLERANCE)
            except ConvergenceError as exc:
                exc.index = i
                raise
        return out

    return quad, "quadrature"


class CellProbabilityTable:
    """``F0(B_eps)`` for every cell down to ``depth``.

    Levels up to ``min(depth, TABLE_DENSE_LIMIT)`` are computed once at the
    deepest of them and summed upward, so siblings add to their parent
    exactly in floating point.  Deeper cells are computed on request.
    """

    def __init__(self, f0, spec: PartitionSpec, depth: int):
        if depth < 0:
            raise ValueError("depth must be non-negative")
        if f0.dimension != spec.dimension:
            raise ValueError(f"density has dimension {f0.dimension}, partition has {spec.dimension}")
        self.f0 = f0
        self.spec = spec
        self.depth = depth
        self._mass, self.source = _interval_mass_fn(f0)
        self._dense_depth = min(depth, TABLE_DENSE_LIMIT)
        self._levels = self._build_dense()

    def _build_dense(self) -> list[np.ndarray]:
        d = self._dense_depth
        codes = np.arange(1 << d, dtype=np.uint64)
        lo, hi = decode_array(codes, d, self.spec)
        finest = self._checked_mass(lo, hi, d, codes)
        levels = [finest]
        for _ in range(d):
            levels.append(levels[-1][0::2] + levels[-1][1::2])
        return levels[::-1]

    def _checked_mass(self, lo, hi, level, codes) -> np.ndarray:
        try:
            m = np.asarray(self._mass(lo, hi), dtype=np.float64)
        except ConvergenceError as exc:
            i = getattr(exc, "index", None)
            if i is None:
                raise
            cell = BinaryPath(level, int(codes[i]))
            raise ConvergenceError(f"cell probability for cell {cell or '(root)'} failed: {exc}") from None
        if not np.all(np.isfinite(m)):
            i = int(np.flatnonzero(~np.isfinite(m))[0])
            raise ValueError(f"non-finite mass on cell {BinaryPath(level, int(codes[i]))}")
        return np.maximum(m, 0.0)

    def level(self, l: int) -> np.ndarray:
        """All ``2**l`` masses at depth ``l`` (dense levels only)."""
        if l > self._dense_depth:
            raise ValueError(f"level {l} is beyond the dense part of the table ({self._dense_depth})")
        return self._levels[l]

    def masses(self, l: int, keys) -> np.ndarray:
        """Masses of the depth-``l`` cells with packed codes ``keys``."""
        if l > self.depth:
            raise ValueError(f"level {l} exceeds table depth {self.depth}")
        keys = np.asarray(keys, dtype=np.uint64)
        if l <= self._dense_depth:
            return self._levels[l][keys.astype(np.int64)]
        lo, hi = decode_array(keys, l, self.spec)
        return self._checked_mass(lo, hi, l, keys)

    def box_mass(self, lower, upper) -> np.ndarray:
        """Mass of arbitrary boxes ``[lower, upper)``, each ``(n, p)``."""
        lower = np.asarray(lower, dtype=np.float64).reshape(-1, self.spec.dimension)
        upper = np.asarray(upper, dtype=np.float64).reshape(-1, self.spec.dimension)
        return np.maximum(np.asarray(self._mass(lower, upper), dtype=np.float64), 0.0)

    def __getitem__(self, path: BinaryPath) -> float:
        return float(self.masses(len(path), [path.bits])[0])

    @property
    def values(self) -> dict[BinaryPath, float]:
        """All dense-level masses as a map (small tables only)."""
        if self._dense_depth > 16:
            raise ValueError("table too large to enumerate")
        return {BinaryPath(l, k): float(v) for l in range(self._dense_depth + 1)
                for k, v in enumerate(self._levels[l])}

    def split_ratios(self, l: int) -> np.ndarray:
        """``y_eps0(f0) = F0(B_eps0) / F0(B_eps)`` for every depth-``(l-1)`` parent (nan where empty)."""
        child = self.level(l)
        parent = child[0::2] + child[1::2]
        with np.errstate(invalid="ignore", divide="ignore"):
            return child[0::2] / parent

    def discretized_entropy(self, depth: int | None = None) -> float:
        """Entropy of the piecewise-constant density with the table's depth-``depth`` masses."""
        depth = self._dense_depth if depth is None else depth
        return cell_sum_entropy(self.level(depth), depth)


def cell_probabilities(f0, spec: PartitionSpec, depth: int) -> CellProbabilityTable:
    return CellProbabilityTable(f0, spec, depth)


def _xlogy(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros(np.broadcast(x, y).shape)
    pos = np.broadcast_to(x > 0, out.shape)
    xb, yb = np.broadcast_to(x, out.shape), np.broadcast_to(y, out.shape)
    with np.errstate(divide="ignore"):
        out[pos] = xb[pos] * np.log(yb[pos])
    return out


def cell_sum_entropy(masses, depth: int) -> float:
    """``-sum mass * log(mass * 2**depth)`` with ``0 log 0 = 0``."""
    masses = np.asarray(masses, dtype=np.float64)
    return float(-np.sum(_xlogy(masses, np.ldexp(masses, depth))))


def entropy_series(dens: SampledDensity) -> float:
    """``-sum_eps Q(B_eps) log 2Y_eps`` over the levels of ``dens``."""
    total = 0.0
    parent = np.ones(1)
    for y in dens.splits:
        left, right = parent * y, parent * (1.0 - y)
        total += float(np.sum(_xlogy(left, 2.0 * y)) + np.sum(_xlogy(right, 2.0 * (1.0 - y))))
        parent = np.column_stack([left, right]).ravel()
    return -total


def kl_series(table: CellProbabilityTable, dens: SampledDensity, h_f0: float) -> float:
    """``K(f0, theta) = -h_f0 - sum_eps F0(B_eps) log 2Y_eps`` with ``theta`` truncated at ``dens.depth``.

    Returns ``inf`` when a split is exactly 0 or 1 on a child of positive
    f0-mass.
    """
    if table.depth < dens.depth:
        raise ValueError(f"table depth {table.depth} is below density depth {dens.depth}")
    total = 0.0
    for l, y in enumerate(dens.splits, start=1):
        f = table.level(l)
        two_y = 2.0 * np.column_stack([y, 1.0 - y]).ravel()
        pos = f > 0
        if np.any(two_y[pos] <= 0.0):
            return float("inf")
        total += float(np.sum(f[pos] * np.log(two_y[pos])))
    return -h_f0 - total


def expected_posterior_kl(table: CellProbabilityTable, post: PosteriorTree, depth: int,
                          h_f0: float | None = None) -> float:
    """``E[K(f0, theta^depth) | X]`` in closed form.

    Equals ``-h_f0 - sum_{l(eps) <= depth} F0(B_eps) E[log 2Y_eps | X]``.
    Cells whose parent holds no data share the symmetric prior term, so only
    cells along the data are visited.  With ``h_f0=None`` the entropy of the
    depth-``depth`` discretisation of f0 is used, which gives
    ``sum_eps F0(B_eps) (log 2y_eps(f0) - E[log 2Y_eps | X])``.
    """
    if depth > table.depth:
        raise ValueError(f"depth {depth} exceeds table depth {table.depth}")
    if depth > post.counts.max_depth:
        raise ValueError(f"depth {depth} exceeds the count tree's max_depth {post.counts.max_depth}")
    if h_f0 is None:
        if depth > TABLE_DENSE_LIMIT:
            raise ValueError(f"h_f0=None needs the discretised entropy, available up to depth {TABLE_DENSE_LIMIT}")
        h_f0 = table.discretized_entropy(depth)
    counts = post.counts
    total = 0.0
    for l in range(1, depth + 1):
        a = post.prior.a(l)
        if counts.n:
            pk, pc = counts.level(l - 1)
        else:
            pk, pc = np.zeros(0, dtype=np.uint64), np.zeros(0, dtype=np.int64)
        data_mass = float(np.sum(table.masses(l - 1, pk))) if pk.size else 0.0
        if pk.size:
            left = pk << np.uint64(1)
            n0 = counts.counts_at(l, left)
            f_left = table.masses(l, left)
            f_right = table.masses(l, left | np.uint64(1))
            pcf = pc.astype(np.float64)
            total += float(np.sum(f_left * expected_log_split(n0, pcf, a)
                                  + f_right * expected_log_split(pc - n0, pcf, a)))
        free_mass = max(1.0 - data_mass, 0.0)
        if free_mass > 0.0:
            total += free_mass * float(expected_log_split(0.0, 0.0, a))
    return -h_f0 - total


# ---------------------------------------------------------------------------
# total variation
# ---------------------------------------------------------------------------

def _refine_masses(masses: np.ndarray, from_depth: int, to_depth: int) -> np.ndarray:
    # a depth-j piecewise-constant density splits its mass evenly below j
    k = to_depth - from_depth
    return np.repeat(masses / float(1 << k), 1 << k)


def _dense_tv(theta_masses: np.ndarray, table: CellProbabilityTable, grid_depth: int) -> float:
    f = table.level(grid_depth)
    return float(min(1.0, 0.5 * np.sum(np.abs(theta_masses - f))))


class _UniformBlockTV:
    """TV contribution of cells where theta-hat is constant, in 1D.

    On a block ``[lo, hi)`` with constant density ``h`` and monotone f0,
    ``h - f0`` changes sign at most once, so all depth-``J`` grid cells left
    of the crossing share one sign and so do all cells right of it.  The sum
    of absolute differences over the block is then three interval terms.
    """

    def __init__(self, table: CellProbabilityTable, grid_depth: int, breaks):
        self.table = table
        self.grid_depth = grid_depth
        self.breaks = np.asarray(sorted(breaks), dtype=np.float64)
        self.pdf = lambda t: table.f0.pdf(np.asarray(t, dtype=np.float64).reshape(-1, 1))

    def interval(self, lo, hi) -> np.ndarray:
        return self.table.box_mass(np.asarray(lo).reshape(-1, 1), np.asarray(hi).reshape(-1, 1))

    def __call__(self, level: int, keys: np.ndarray, masses: np.ndarray) -> float:
        if keys.size == 0:
            return 0.0
        J = self.grid_depth
        lo, hi = decode_array(keys, level, self.table.spec)
        lo, hi = lo[:, 0], hi[:, 0]
        if level == J:
            return float(np.sum(np.abs(masses - self.interval(lo, hi))))
        split = np.zeros(keys.size, dtype=bool)
        for b in self.breaks:
            split |= (lo < b) & (b < hi)
        total = 0.0
        if np.any(split):
            ck = keys[split] << np.uint64(1)
            cm = np.repeat(masses[split] / 2.0, 2)
            total += self(level + 1, np.column_stack([ck, ck | np.uint64(1)]).ravel(), cm)
        keep = ~split
        lo, hi, masses = lo[keep], hi[keep], masses[keep]
        if lo.size == 0:
            return total
        h = np.ldexp(masses, level)
        with np.errstate(divide="ignore", invalid="ignore"):
            f_lo, f_hi = self.pdf(lo), self.pdf(hi)
        crossing = (h > np.minimum(f_lo, f_hi)) & (h < np.maximum(f_lo, f_hi))
        plain = ~crossing
        total += float(np.sum(np.abs(masses[plain] - self.interval(lo[plain], hi[plain]))))
        if np.any(crossing):
            total += self._crossing(lo[crossing], hi[crossing], h[crossing], f_hi[crossing] > f_lo[crossing],
                                    J - level)
        return total

    def _crossing(self, lo, hi, h, increasing, steps) -> float:
        left, right = lo.copy(), hi.copy()
        for _ in range(steps):
            mid = 0.5 * (left + right)
            with np.errstate(divide="ignore", invalid="ignore"):
                fm = self.pdf(mid)
            go_right = np.where(increasing, fm < h, fm > h)
            left = np.where(go_right, mid, left)
            right = np.where(go_right, right, mid)
        parts = 0.0
        for a, b in ((lo, left), (left, right), (right, hi)):
            width = b - a
            parts += float(np.sum(np.abs(h * width - np.where(width > 0, self.interval(a, b), 0.0))))
        return parts


def _sparse_predictive_tv(post: PosteriorTree, table: CellProbabilityTable, grid_depth: int, breaks) -> float:
    counts = post.counts
    block = _UniformBlockTV(table, grid_depth, breaks)
    root = np.zeros(1, dtype=np.uint64)
    if counts.n == 0:
        return min(1.0, 0.5 * block(0, root, np.ones(1)))
    total = 0.0
    keys, mass, n_par = root, np.ones(1), np.array([float(counts.n)])
    for l in range(1, grid_depth + 1):
        a = post.prior.a(l)
        ck = np.column_stack([keys << np.uint64(1), (keys << np.uint64(1)) | np.uint64(1)]).ravel()
        cn = counts.counts_at(l, ck).astype(np.float64)
        cm = np.repeat(mass, 2) * (a + cn) / (2.0 * a + np.repeat(n_par, 2))
        empty = cn == 0
        if l == grid_depth:
            total += float(np.sum(np.abs(cm - table.masses(l, ck))))
            break
        total += block(l, ck[empty], cm[empty])
        keys, mass, n_par = ck[~empty], cm[~empty], cn[~empty]
    return min(1.0, 0.5 * total)


def total_variation(predictive, f0: CellProbabilityTable, grid_depth: int) -> float:
    """``1/2 sum |theta(B) - F0(B)|`` over the depth-``grid_depth`` cells.

    ``predictive`` is a :class:`PosteriorTree` (its predictive density is
    used), a :class:`SampledDensity`, or an array of ``2**k`` cell masses
    for some ``k <= grid_depth``.  For a posterior in 1D whose density
    oracle declares ``monotone_breaks`` the computation is exact at any grid
    depth the count tree supports; otherwise the grid is built densely.
    """
    table = f0
    if grid_depth < 1:
        raise ValueError("grid depth must be >= 1")
    if grid_depth > table.depth:
        raise ValueError(f"grid depth {grid_depth} exceeds table depth {table.depth}")
    if isinstance(predictive, PosteriorTree):
        if grid_depth > predictive.counts.max_depth:
            raise ValueError("grid depth exceeds the count tree's max_depth")
        breaks = getattr(table.f0, "monotone_breaks", None)
        if predictive.spec.dimension == 1 and breaks is not None:
            return _sparse_predictive_tv(predictive, table, grid_depth, breaks)
        from .tree import predictive_masses

        depth = grid_depth
        if depth > TABLE_DENSE_LIMIT:
            warnings.warn(f"grid depth {grid_depth} capped at {TABLE_DENSE_LIMIT} for a dense computation",
                          DepthCapWarning, stacklevel=2)
            depth = TABLE_DENSE_LIMIT
        return _dense_tv(predictive_masses(predictive, depth), table, depth)
    if isinstance(predictive, SampledDensity):
        if grid_depth <= predictive.depth:
            return _dense_tv(predictive.cell_masses(grid_depth), table, grid_depth)
        return _dense_tv(_refine_masses(predictive.cell_masses(), predictive.depth, grid_depth), table, grid_depth)
    masses = np.asarray(predictive, dtype=np.float64)
    k = int(masses.size).bit_length() - 1
    if masses.size != 1 << k or k > grid_depth:
        raise ValueError("mass arrays must have 2**k entries with k <= grid_depth")
    return _dense_tv(_refine_masses(masses, k, grid_depth), table, grid_depth)


__all__ = [
    "CellProbabilityTable",
    "QUADRATURE_TOLERANCE",
    "cell_probabilities",
    "cell_sum_entropy",
    "entropy_series",
    "expected_posterior_kl",
    "kl_series",
    "total_variation",
]
