"""Functional model of the mixed-precision datapath.

Decoders sit on the array edges and hand PEs a (sign, exponent, mantissa)
triple with the hidden 1 already in the mantissa MSB. Inside the PE the
mantissa product comes from 2-bit x 2-bit partial products (BitFusion
style) and exponents go through a chain of narrow adders. Everything here
is integer arithmetic; ``mac`` only touches floats to accumulate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import FormatError, ModeError

SUPPORTED_WIDTHS = (2, 4, 8)
SLICE_BITS = 2


@dataclass(frozen=True, order=True)
class PrecisionMode:
    a_bits: int
    w_bits: int

    def __post_init__(self):
        if self.a_bits not in SUPPORTED_WIDTHS or self.w_bits not in SUPPORTED_WIDTHS:
            raise ModeError(f"precision mode {self.a_bits}x{self.w_bits} not in {SUPPORTED_WIDTHS}")

    def __str__(self):
        return f"A{self.a_bits}W{self.w_bits}"


@dataclass(frozen=True)
class HwDecoded:
    """Decoder output. ``width`` is the mantissa field width."""

    sign: int
    exponent: int
    mantissa: int
    width: int
    is_zero: bool
    is_subnormal: bool

    @property
    def value(self) -> float:
        if self.is_zero:
            return 0.0
        v = math.ldexp(self.mantissa, self.exponent - (self.width - 1))
        return -v if self.sign else v


def _check_width(width: int):
    if width not in SUPPORTED_WIDTHS:
        raise ModeError(f"datapath width {width} not in {SUPPORTED_WIDTHS}")


def lod4(nibble: int) -> int:
    """Leading-ones count of a 4-bit field."""
    if nibble & 0b1000 == 0:
        return 0
    if nibble & 0b0100 == 0:
        return 1
    if nibble & 0b0010 == 0:
        return 2
    return 3 if nibble & 0b0001 == 0 else 4


def leading_ones_lod4(bits: int, width: int) -> int:
    """Leading-ones count built from cascaded LOD-4 units.

    The field is left-aligned into whole nibbles; padding is zeros so the
    count never runs past ``width``.
    """
    nibbles = -(-width // 4)
    padded = bits << (4 * nibbles - width)
    run = 0
    for i in range(nibbles - 1, -1, -1):
        r = lod4((padded >> (4 * i)) & 0xF)
        run += r
        if r < 4:
            break
    return run


def decode_hw(code: int, width: int, signed: bool = False) -> HwDecoded:
    _check_width(width)
    if isinstance(code, bool) or not 0 <= int(code) < (1 << width):
        raise FormatError(f"code {code!r} does not fit a {width}-bit datapath")
    code = int(code)
    m = width - 1 if signed else width
    sign = (code >> m) & 1 if signed else 0
    mag = code & ((1 << m) - 1)
    if mag == 0:
        return HwDecoded(0, 0, 0, m, True, False)
    run = leading_ones_lod4(mag, m)
    if run == 0:
        return HwDecoded(sign, 0, mag, m, False, True)
    # drop the run and its terminating zero, then put the hidden 1 on top
    frac = (mag << (run + 1)) & ((1 << m) - 1)
    mantissa = (1 << (m - 1)) | (frac >> 1)
    return HwDecoded(sign, run - 1, mantissa, m, False, False)


def encode_hw(d: HwDecoded, width: int, signed: bool = False) -> int:
    """Inverse of :func:`decode_hw`.

    Mantissas wider than the target are truncated toward zero; exponents
    past the top binade saturate to the max code.
    """
    _check_width(width)
    m = width - 1 if signed else width
    if d.is_zero or d.mantissa == 0:
        return 0
    if d.sign and not signed:
        raise FormatError("negative value cannot be encoded in an unsigned datapath")
    top = 1 << (d.width - 1)
    if d.is_subnormal:
        if d.exponent != 0 or d.mantissa >= top:
            raise FormatError("subnormal operand must have exponent 0 and no hidden 1")
        shift = d.width - m
        mag = d.mantissa >> shift if shift >= 0 else d.mantissa << -shift
    else:
        if not d.mantissa & top or d.mantissa >= top << 1:
            raise FormatError("normal operand needs its hidden 1 in the mantissa MSB")
        run = d.exponent + 1
        if run >= m:
            mag = (1 << m) - 1
        else:
            k = m - run - 1
            frac = d.mantissa & (top - 1)
            shift = (d.width - 1) - k
            frac = frac >> shift if shift >= 0 else frac << -shift
            mag = (((1 << run) - 1) << (m - run)) | frac
    if mag == 0:
        return 0
    return (d.sign << m) | mag if signed else mag


def _slices(v: int, bits: int) -> list[int]:
    return [(v >> s) & ((1 << SLICE_BITS) - 1) for s in range(0, bits, SLICE_BITS)]


def fused_mul(a_mant: int, w_mant: int, mode: PrecisionMode) -> int:
    """Mantissa product from shifted 2-bit x 2-bit partial products."""
    if not 0 <= a_mant < (1 << mode.a_bits):
        raise ValueError(f"activation mantissa {a_mant} exceeds {mode.a_bits} bits")
    if not 0 <= w_mant < (1 << mode.w_bits):
        raise ValueError(f"weight mantissa {w_mant} exceeds {mode.w_bits} bits")
    total = 0
    for i, pa in enumerate(_slices(a_mant, mode.a_bits)):
        for j, pw in enumerate(_slices(w_mant, mode.w_bits)):
            total += (pa * pw) << (SLICE_BITS * (i + j))
    assert total == a_mant * w_mant
    return total


def exp_add(e_a: int, e_w: int, mode: PrecisionMode) -> int:
    """Exponent sum through a ripple of 2-bit adders."""
    if e_a < 0 or e_w < 0:
        raise ValueError("exponents are unsigned")
    mask = (1 << SLICE_BITS) - 1
    width = max(e_a.bit_length(), e_w.bit_length(), 1)
    total, carry = 0, 0
    for s in range(0, width + SLICE_BITS, SLICE_BITS):
        part = ((e_a >> s) & mask) + ((e_w >> s) & mask) + carry
        total |= (part & mask) << s
        carry = part >> SLICE_BITS
    return total


def mac(acc: float, a_code: int, w_code: int, mode: PrecisionMode,
        a_signed: bool = False, w_signed: bool = True) -> float:
    da = decode_hw(a_code, mode.a_bits, a_signed)
    dw = decode_hw(w_code, mode.w_bits, w_signed)
    if da.is_zero or dw.is_zero:
        return acc
    prod = fused_mul(da.mantissa, dw.mantissa, mode)
    exp = exp_add(da.exponent, dw.exponent, mode)
    v = math.ldexp(prod, exp - (da.width - 1) - (dw.width - 1))
    return acc - v if da.sign ^ dw.sign else acc + v


def pe_throughput(mode: PrecisionMode) -> int:
    """Products per PE per cycle."""
    return (8 // mode.a_bits) * (8 // mode.w_bits)


def write_back(value: float, width: int, signed: bool = False) -> int:
    """Re-encode an accumulator value: truncate toward zero, saturate at max."""
    if not math.isfinite(value):
        raise FormatError(f"cannot write back {value}")
    m = width - 1 if signed else width
    sign = 1 if value < 0 else 0
    if sign and not signed:
        return 0
    a = abs(value)
    if a == 0.0:
        return 0
    if a < 1.0:
        mant = math.floor(math.ldexp(a, m - 1))
        d = HwDecoded(sign, 0, mant, m, mant == 0, True)
    else:
        frac, exp = math.frexp(a)  # a = frac * 2**exp, frac in [0.5, 1)
        d = HwDecoded(sign, exp - 1, int(math.ldexp(frac, 53)), 53, False, False)
    return encode_hw(d, width, signed)

