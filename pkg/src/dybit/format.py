"""DyBit codes: run-length exponent, variable-length mantissa.

A magnitude field of width ``m`` is read from the MSB. A leading run of
``i`` ones selects the binade; a terminating zero (when there is room for
one) closes the run and the remaining ``k`` bits are the fraction::

    i == 0        value = x / 2**(m - 1)                (subnormal, in [0, 1))
    0 < i < m     value = 2**(i - 1) * (1 + x / 2**k),  k = m - i - 1
    i == m        value = 2**(m - 1)                    (all ones, max)

Signed formats prepend one sign bit to an ``(n - 1)``-bit magnitude.
Every decoded value is a binary rational that a float64 holds exactly.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import FormatError

MAX_TOTAL_BITS = 16


@dataclass(frozen=True)
class FormatSpec:
    total_bits: int
    signed: bool = False

    def __post_init__(self):
        if not isinstance(self.total_bits, (int, np.integer)) or isinstance(self.total_bits, bool):
            raise FormatError(f"total_bits must be an integer, got {self.total_bits!r}")
        # signed 2-bit is sign + 1-bit magnitude, i.e. the ternary set {-1, 0, 1}
        if self.total_bits < 2 or self.total_bits > MAX_TOTAL_BITS:
            raise FormatError(f"total_bits must be in [2, {MAX_TOTAL_BITS}], got {self.total_bits}")

    @property
    def magnitude_bits(self) -> int:
        return self.total_bits - 1 if self.signed else self.total_bits

    @property
    def n_codes(self) -> int:
        return 1 << self.total_bits

    def __str__(self):
        return f"dybit{self.total_bits}{'s' if self.signed else 'u'}"


@dataclass(frozen=True)
class DecodedFields:
    """Structural decomposition of one code. ``value`` is the unsigned magnitude."""

    sign: int
    run_length: int
    mantissa_bits: int
    mantissa_value: int
    value: float


def _check_code(code, spec: FormatSpec) -> int:
    if isinstance(code, bool) or not isinstance(code, (int, np.integer)):
        raise FormatError(f"code must be an integer bit pattern, got {code!r}")
    code = int(code)
    if code < 0 or code >= spec.n_codes:
        raise FormatError(f"code {code:#b} does not fit in {spec.total_bits} bits")
    return code


def leading_ones(bits: int, width: int) -> int:
    """Length of the run of 1s starting at the MSB of a ``width``-bit field."""
    run = 0
    for pos in range(width - 1, -1, -1):
        if not (bits >> pos) & 1:
            break
        run += 1
    return run


def _magnitude_fields(mag: int, m: int) -> tuple[int, int, int, float]:
    run = leading_ones(mag, m)
    if run == 0:
        k = m - 1
        x = mag & ((1 << k) - 1)
        return 0, k, x, math.ldexp(x, -k)
    if run == m:
        return run, 0, 0, math.ldexp(1.0, m - 1)
    k = m - run - 1
    x = mag & ((1 << k) - 1)
    return run, k, x, math.ldexp((1 << k) + x, run - 1 - k)


def decode_fields(code, spec: FormatSpec) -> DecodedFields:
    code = _check_code(code, spec)
    m = spec.magnitude_bits
    sign = (code >> m) & 1 if spec.signed else 0
    run, k, x, value = _magnitude_fields(code & ((1 << m) - 1), m)
    return DecodedFields(sign, run, k, x, value)


def decode(code, spec: FormatSpec) -> float:
    f = decode_fields(code, spec)
    if f.value == 0.0:
        return 0.0
    return -f.value if f.sign else f.value


def encode_fields(fields: DecodedFields, spec: FormatSpec) -> int:
    """Inverse of :func:`decode_fields`; ``fields.value`` is not consulted."""
    m = spec.magnitude_bits
    run, k, x = fields.run_length, fields.mantissa_bits, fields.mantissa_value
    if fields.sign not in (0, 1) or (fields.sign and not spec.signed):
        raise FormatError(f"sign {fields.sign} not representable in {spec}")
    if not 0 <= run <= m:
        raise FormatError(f"run_length {run} outside [0, {m}]")
    if run == 0:
        expected_k = m - 1
    elif run == m:
        expected_k = 0
    else:
        expected_k = m - run - 1
    if k != expected_k:
        raise FormatError(f"run_length {run} needs {expected_k} mantissa bits under {spec}, got {k}")
    if not 0 <= x < (1 << k):
        raise FormatError(f"mantissa_value {x} does not fit in {k} bits")
    ones = ((1 << run) - 1) << (m - run)
    mag = ones | x
    if fields.sign and mag == 0:
        return 0
    return (fields.sign << m) | mag if spec.signed else mag


@lru_cache(maxsize=None)
def _grid(m: int) -> tuple[float, ...]:
    return tuple(_magnitude_fields(c, m)[3] for c in range(1 << m))


def magnitude_grid(spec: FormatSpec) -> np.ndarray:
    """Decoded magnitudes indexed by magnitude code; strictly increasing."""
    return np.array(_grid(spec.magnitude_bits), dtype=np.float64)


def enumerate_values(spec: FormatSpec) -> list[tuple[int, float]]:
    """All canonical codes in code order with their decoded values.

    Signed formats omit the negative-zero pattern, so they list
    ``2**n - 1`` entries.
    """
    neg_zero = 1 << spec.magnitude_bits if spec.signed else None
    return [(c, decode(c, spec)) for c in range(spec.n_codes) if c != neg_zero]


def max_value(spec: FormatSpec) -> float:
    return math.ldexp(1.0, spec.magnitude_bits - 1)


def min_positive(spec: FormatSpec) -> float:
    return _grid(spec.magnitude_bits)[1]


def _nearest_magnitude_code(a: float, grid: tuple[float, ...]) -> int:
    hi = bisect.bisect_left(grid, a)
    if hi == 0:
        return 0
    if hi == len(grid):
        return len(grid) - 1
    lo = hi - 1
    # ties go to the smaller magnitude
    return hi if grid[hi] - a < a - grid[lo] else lo


def quantize_scalar(v: float, spec: FormatSpec) -> int:
    """Nearest code to ``v``; saturates at the max code, ties toward zero."""
    v = float(v)
    if not math.isfinite(v):
        raise FormatError(f"cannot quantize non-finite value {v}")
    m = spec.magnitude_bits
    if v < 0 and not spec.signed:
        return 0
    mag = _nearest_magnitude_code(abs(v), _grid(m))
    if v < 0 and mag:
        return (1 << m) | mag
    return mag


def quantize_array(values: np.ndarray, spec: FormatSpec) -> np.ndarray:
    """Vectorised :func:`quantize_scalar` over an array of finite reals."""
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise FormatError("cannot quantize non-finite values")
    grid = magnitude_grid(spec)
    mids = (grid[1:] + grid[:-1]) / 2.0
    if spec.signed:
        mag = np.searchsorted(mids, np.abs(v), side="left").astype(np.uint32)
        neg = (v < 0) & (mag != 0)
        codes = np.where(neg, mag | np.uint32(1 << spec.magnitude_bits), mag)
    else:
        codes = np.searchsorted(mids, np.maximum(v, 0.0), side="left")
    dtype = np.uint8 if spec.total_bits <= 8 else np.uint16
    return codes.astype(dtype)


def decode_array(codes: np.ndarray, spec: FormatSpec) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.size and (codes.min() < 0 or codes.max() >= spec.n_codes):
        raise FormatError(f"codes out of range for {spec}")
    m = spec.magnitude_bits
    mag = magnitude_grid(spec)[codes.astype(np.int64) & ((1 << m) - 1)]
    if spec.signed:
        neg = (codes.astype(np.int64) >> m) & 1
        mag = np.where(neg == 1, -mag, mag)
        mag[mag == 0] = 0.0
    return mag
