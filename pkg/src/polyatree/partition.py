"""Binary paths and the canonical dyadic partition of the unit cube.

Cell ``B_eps`` of depth ``l`` is the set of points whose interleaved binary
digits start with ``eps``: digit ``k`` of a path is binary digit
``ceil(k/p)`` of coordinate ``(k-1) mod p``.  Each depth-``l`` cell is an
axis-aligned half-open box of Lebesgue measure ``2**-l``.

Scalar helpers work on :class:`BinaryPath`; the ``*_array`` variants work on
packed ``uint64`` codes (the path digits read as an unsigned integer, most
significant digit first), which is what the count tree stores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, PrecisionError

#: binary digits per coordinate that a float64 in [0, 1) resolves
MANTISSA_DIGITS = 53
#: longest path that fits a packed uint64 code
PACKED_DEPTH = 64


@dataclass(frozen=True)
class BinaryPath:
    """A finite binary sequence, stored as ``(length, packed bits)``."""

    length: int
    bits: int = 0

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if self.bits < 0 or self.bits >> self.length:
            raise ValueError(f"bits {self.bits} do not fit in {self.length} digits")

    @classmethod
    def root(cls) -> "BinaryPath":
        return cls(0, 0)

    @classmethod
    def from_digits(cls, digits: Iterable[int]) -> "BinaryPath":
        bits = 0
        n = 0
        for d in digits:
            if d not in (0, 1):
                raise ValueError(f"binary digit expected, got {d!r}")
            bits = (bits << 1) | int(d)
            n += 1
        return cls(n, bits)

    @classmethod
    def from_string(cls, s: str) -> "BinaryPath":
        return cls.from_digits(int(c) for c in s.strip())

    @property
    def digits(self) -> tuple[int, ...]:
        return tuple((self.bits >> (self.length - 1 - i)) & 1 for i in range(self.length))

    def __len__(self) -> int:
        return self.length

    def __iter__(self):
        return iter(self.digits)

    def __str__(self) -> str:
        return "".join(str(d) for d in self.digits)

    def __repr__(self) -> str:
        return f"BinaryPath({str(self)!r})"

    def child(self, bit: int) -> "BinaryPath":
        if bit not in (0, 1):
            raise ValueError(f"binary digit expected, got {bit!r}")
        return BinaryPath(self.length + 1, (self.bits << 1) | bit)

    def parent(self) -> "BinaryPath":
        if self.length == 0:
            raise ValueError("the root has no parent")
        return BinaryPath(self.length - 1, self.bits >> 1)

    def prefix(self, length: int) -> "BinaryPath":
        if not 0 <= length <= self.length:
            raise ValueError(f"prefix length {length} outside [0, {self.length}]")
        return BinaryPath(length, self.bits >> (self.length - length))

    def is_prefix_of(self, other: "BinaryPath") -> bool:
        return self.length <= other.length and other.prefix(self.length) == self

    def is_ancestor_of(self, other: "BinaryPath") -> bool:
        """True iff ``self`` is a proper prefix of ``other``."""
        return self.length < other.length and self.is_prefix_of(other)


def children(path: BinaryPath) -> tuple[BinaryPath, BinaryPath]:
    return path.child(0), path.child(1)


def cell_measure(path: BinaryPath) -> float:
    """Lebesgue measure of the cell, exactly ``2**-len(path)``."""
    return math.ldexp(1.0, -len(path))


@dataclass(frozen=True)
class PartitionSpec:
    """Canonical partition of ``[0,1]^p`` splitting coordinates cyclically."""

    dimension: int = 1

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")

    @property
    def max_depth(self) -> int:
        """Deepest level that both float64 inputs and packed codes support."""
        return min(PACKED_DEPTH, MANTISSA_DIGITS * self.dimension)

    def digits_per_coordinate(self, depth: int) -> tuple[int, ...]:
        p = self.dimension
        return tuple((depth - c + p - 1) // p for c in range(p))

    def coordinate_of_digit(self, k: int) -> int:
        """0-based coordinate split by path digit ``k`` (1-based)."""
        return (k - 1) % self.dimension


@dataclass(frozen=True)
class CellBox:
    """Half-open box ``[lower, upper)`` realising a partition cell.

    ``index[c] / 2**digits[c]`` is the lower corner along coordinate ``c``;
    the integers keep the geometry exact.
    """

    index: tuple[int, ...]
    digits: tuple[int, ...]

    @property
    def lower(self) -> tuple[float, ...]:
        return tuple(math.ldexp(i, -m) for i, m in zip(self.index, self.digits))

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(math.ldexp(i + 1, -m) for i, m in zip(self.index, self.digits))

    @property
    def volume(self) -> float:
        return math.ldexp(1.0, -sum(self.digits))

    def exact_bounds(self) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
        lo = tuple(Fraction(i, 1 << m) for i, m in zip(self.index, self.digits))
        hi = tuple(Fraction(i + 1, 1 << m) for i, m in zip(self.index, self.digits))
        return lo, hi

    def contains(self, point: Sequence[float]) -> bool:
        return all(lo <= x < hi for x, lo, hi in zip(point, self.lower, self.upper))

    def __str__(self) -> str:
        return "x".join(f"[{lo!r},{hi!r})" for lo, hi in zip(self.lower, self.upper))


def _check_depth(depth: int, spec: PartitionSpec, packed: bool = False) -> tuple[int, ...]:
    if depth < 0:
        raise ValueError("depth must be non-negative")
    m = spec.digits_per_coordinate(depth)
    if m and max(m) > MANTISSA_DIGITS:
        raise PrecisionError(
            f"depth {depth} needs {max(m)} binary digits per coordinate; "
            f"float64 resolves {MANTISSA_DIGITS}"
        )
    if packed and depth > PACKED_DEPTH:
        raise PrecisionError(f"packed codes hold at most {PACKED_DEPTH} digits, got {depth}")
    return m


def check_points(points, spec: PartitionSpec) -> np.ndarray:
    """Return ``points`` as an ``(n, p)`` float array, or raise on bad input."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if spec.dimension == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or (arr.size and arr.shape[1] != spec.dimension):
        raise DomainError(f"expected points of dimension {spec.dimension}, got shape {arr.shape}")
    if arr.size == 0:
        return arr.reshape(0, spec.dimension)
    inside = np.all((arr >= 0.0) & (arr < 1.0), axis=1)
    if not np.all(inside):
        bad = np.flatnonzero(~inside)
        raise DomainError(
            f"{bad.size} point(s) outside [0,1)^{spec.dimension}; first offending index {bad[0]}: "
            f"{arr[bad[0]].tolist()}"
        )
    return arr


def encode(point, depth: int, spec: PartitionSpec = PartitionSpec()) -> BinaryPath:
    """Path of length ``depth`` whose cell contains ``point``."""
    x = check_points(np.atleast_1d(np.asarray(point, dtype=np.float64)).reshape(1, -1), spec)[0]
    if depth < 1:
        raise ValueError("depth must be >= 1")
    m = _check_depth(depth, spec)
    # x * 2**m is exact for m <= 53, so floor gives the true leading digits
    index = [int(math.floor(math.ldexp(float(xc), mc))) for xc, mc in zip(x, m)]
    bits = 0
    p = spec.dimension
    for k in range(1, depth + 1):
        c = (k - 1) % p
        digit_pos = (k - 1) // p  # 0-based digit of coordinate c
        bits = (bits << 1) | ((index[c] >> (m[c] - 1 - digit_pos)) & 1)
    return BinaryPath(depth, bits)


def cell_bounds(path: BinaryPath, spec: PartitionSpec = PartitionSpec()) -> CellBox:
    """Axis-aligned box of ``B_path``."""
    p = spec.dimension
    index = [0] * p
    m = [0] * p
    for k, d in enumerate(path.digits, start=1):
        c = (k - 1) % p
        index[c] = (index[c] << 1) | d
        m[c] += 1
    return CellBox(tuple(index), tuple(m))


def encode_array(points, depth: int, spec: PartitionSpec = PartitionSpec()) -> np.ndarray:
    """Packed ``uint64`` codes of the depth-``depth`` cells containing ``points``."""
    x = check_points(points, spec)
    m = _check_depth(depth, spec, packed=True)
    p = spec.dimension
    codes = np.zeros(x.shape[0], dtype=np.uint64)
    if depth == 0 or x.shape[0] == 0:
        return codes
    index = [np.floor(np.ldexp(x[:, c], m[c])).astype(np.uint64) for c in range(p)]
    one = np.uint64(1)
    for k in range(1, depth + 1):
        c = (k - 1) % p
        shift = np.uint64(m[c] - 1 - (k - 1) // p)
        codes = (codes << one) | ((index[c] >> shift) & one)
    return codes


def decode_array(codes, depth: int, spec: PartitionSpec = PartitionSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper corners, each ``(n, p)``, of the cells with packed ``codes``."""
    codes = np.asarray(codes, dtype=np.uint64)
    m = _check_depth(depth, spec, packed=True)
    p = spec.dimension
    index = [np.zeros(codes.shape, dtype=np.uint64) for _ in range(p)]
    one = np.uint64(1)
    for k in range(1, depth + 1):
        c = (k - 1) % p
        bit = (codes >> np.uint64(depth - k)) & one
        index[c] = (index[c] << one) | bit
    lower = np.stack([np.ldexp(index[c].astype(np.float64), -m[c]) for c in range(p)], axis=-1)
    upper = np.stack([np.ldexp(index[c].astype(np.float64) + 1.0, -m[c]) for c in range(p)], axis=-1)
    return lower, upper


def path_from_code(code: int, depth: int) -> BinaryPath:
    return BinaryPath(depth, int(code))
