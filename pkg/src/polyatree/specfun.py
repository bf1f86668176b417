"""Digamma, trigamma and log-gamma for positive real arguments.

All functions accept scalars or array-likes and return a float for scalar
input, an ndarray otherwise.  Arguments are shifted upward with the
recurrences until they exceed ``_SHIFT``, then the Bernoulli asymptotic
series is used.  Only ``x > 0`` is supported; every call site in the package
evaluates at Beta parameters, which are positive.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

_SHIFT = 10.0

# B_{2k} / (2k) for k = 1..8, the coefficients of the digamma series
#   log x - psi(x) = 1/(2x) + sum_k B_{2k} / (2k x^{2k})
_DIGAMMA_COEFS = np.array([
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
])

# B_{2k} for k = 1..8, the coefficients of the trigamma series
#   psi_1(x) = 1/x + 1/(2x^2) + sum_k B_{2k} / x^{2k+1}
_TRIGAMMA_COEFS = np.array([
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
])


def _as_positive(x):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(arr > 0):  # also rejects nan
        bad = arr[~(arr > 0)]
        raise DomainError(f"argument must be > 0, got {bad.ravel()[0]!r}")
    return arr


def _wrap(result, like):
    if np.ndim(like) == 0:
        return float(result)
    return result


def _poly_even(coefs, inv2):
    # sum_k coefs[k] * inv2**(k+1) evaluated by Horner
    acc = np.zeros_like(inv2)
    for c in coefs[::-1]:
        acc = (acc + c) * inv2
    return acc


def _remainder_large(z):
    """log z - psi(z) for z >= _SHIFT."""
    inv = 1.0 / z
    return 0.5 * inv + _poly_even(_DIGAMMA_COEFS, inv * inv)


def digamma_remainder(x):
    """Return ``log(x) - digamma(x)``, accurate also when both terms are huge.

    This is the quantity needed to difference digammas at large arguments
    without cancellation: psi(x) - psi(y) = log(x/y) - r(x) + r(y).
    """
    arr = _as_positive(x)
    z = arr.copy()
    shift_sum = np.zeros_like(z)
    small = z < _SHIFT
    while np.any(small):
        shift_sum[small] += 1.0 / z[small]
        z[small] += 1.0
        small = z < _SHIFT
    # psi(x) = psi(z) - shift_sum, psi(z) = log z - r(z)
    out = np.log(arr) - np.log(z) + _remainder_large(z) + shift_sum
    return _wrap(out, x)


def digamma(x):
    """Digamma function psi(x) = d/dx log Gamma(x) for x > 0."""
    arr = _as_positive(x)
    z = arr.copy()
    shift_sum = np.zeros_like(z)
    small = z < _SHIFT
    while np.any(small):
        shift_sum[small] += 1.0 / z[small]
        z[small] += 1.0
        small = z < _SHIFT
    out = np.log(z) - _remainder_large(z) - shift_sum
    return _wrap(out, x)


def trigamma(x):
    """Trigamma function psi_1(x) = d^2/dx^2 log Gamma(x) for x > 0."""
    arr = _as_positive(x)
    z = arr.copy()
    shift_sum = np.zeros_like(z)
    small = z < _SHIFT
    while np.any(small):
        shift_sum[small] += 1.0 / (z[small] * z[small])
        z[small] += 1.0
        small = z < _SHIFT
    inv = 1.0 / z
    inv2 = inv * inv
    series = inv + 0.5 * inv2 + inv * _poly_even(_TRIGAMMA_COEFS, inv2)
    return _wrap(series + shift_sum, x)


def log_gamma(x):
    """log Gamma(x) for x > 0 (thin wrapper over :func:`math.lgamma`)."""
    arr = _as_positive(x)
    out = np.vectorize(math.lgamma, otypes=[np.float64])(arr)
    return _wrap(out, x)
