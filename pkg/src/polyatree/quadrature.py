"""Adaptive Simpson quadrature over many intervals at once.

Used for cell probabilities when a density has no closed-form CDF.  The 1D
routine is vectorised across intervals; boxes in higher dimension are
integrated by nesting it one coordinate at a time.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError


def _fail(lower, upper, i, why):
    err = ConvergenceError(f"adaptive quadrature did not converge on [{lower[i]!r}, {upper[i]!r}]: {why}")
    err.index = int(i)
    return err


def adaptive_simpson(f, lower, upper, tol: float = 1e-10, max_level: int = 40,
                     budget_per_interval: int = 20_000) -> np.ndarray:
    """Integrate ``f`` (vectorised, 1D) over each ``[lower[i], upper[i]]``.

    ``tol`` is the absolute tolerance per interval.  Raises
    :class:`ConvergenceError` naming the first interval that still fails
    after ``max_level`` bisections, produces a non-finite estimate, or
    exhausts the evaluation budget.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
    upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    result = np.zeros(lower.shape)
    owner = np.arange(lower.size)
    a, b = lower.copy(), upper.copy()
    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    eps = np.full(a.shape, float(tol))
    budget = budget_per_interval * max(lower.size, 1)
    used = 3 * lower.size
    for _ in range(max_level):
        if owner.size == 0:
            return result
        used += 2 * owner.size
        if used > budget:
            raise _fail(lower, upper, owner[0], f"evaluation budget {budget} exhausted")
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        with np.errstate(invalid="ignore"):
            delta = left + right - whole
        bad = ~np.isfinite(delta)
        if np.any(bad):
            raise _fail(lower, upper, owner[np.flatnonzero(bad)[0]], "non-finite integrand")
        done = np.abs(delta) <= 15.0 * eps
        np.add.at(result, owner[done], (left + right + delta / 15.0)[done])
        keep = ~done
        owner = np.concatenate([owner[keep], owner[keep]])
        a, m, b = (np.concatenate([a[keep], m[keep]]), np.concatenate([lm[keep], rm[keep]]),
                   np.concatenate([m[keep], b[keep]]))
        fa, fm, fb = (np.concatenate([fa[keep], fm[keep]]), np.concatenate([flm[keep], frm[keep]]),
                      np.concatenate([fm[keep], fb[keep]]))
        whole = np.concatenate([left[keep], right[keep]])
        eps = np.concatenate([eps[keep], eps[keep]]) / 2.0
    if owner.size:
        raise _fail(lower, upper, owner[0], f"no convergence after {max_level} bisections")
    return result


def integrate_box(f, lower, upper, tol: float = 1e-10) -> float:
    """Integrate ``f`` taking ``(n, p)`` points over one box by nested 1D quadrature."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    p = lower.size
    if p == 1:
        g = lambda t: f(t.reshape(-1, 1))
        return float(adaptive_simpson(g, lower[:1], upper[:1], tol)[0])

    def outer(t):
        vals = np.empty(t.size)
        for i, ti in enumerate(t):
            inner = lambda rest, ti=ti: f(np.column_stack([np.full(rest.shape[0], ti), rest]))
            vals[i] = integrate_box(inner, lower[1:], upper[1:], tol)
        return vals

    return float(adaptive_simpson(outer, lower[:1], upper[:1], tol)[0])
