import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dybit.errors import FormatError
from dybit.format import (
    DecodedFields,
    FormatSpec,
    decode,
    decode_array,
    decode_fields,
    encode_fields,
    enumerate_values,
    max_value,
    min_positive,
    quantize_array,
    quantize_scalar,
)

U4 = FormatSpec(4)

# 4-bit unsigned value table, transcribed column by column
U4_VALUES = {
    0b0000: 0, 0b0001: 0.125, 0b0010: 0.25, 0b0011: 0.375,
    0b0100: 0.5, 0b0101: 0.625, 0b0110: 0.75, 0b0111: 0.875,
    0b1000: 1.0, 0b1001: 1.25, 0b1010: 1.5, 0b1011: 1.75,
    0b1100: 2, 0b1101: 3, 0b1110: 4, 0b1111: 8,
}


def string_decode(code, n, signed):
    """Reference decoder working on the literal bit string."""
    bits = format(code, f"0{n}b")
    sign = 1
    if signed:
        sign = -1 if bits[0] == "1" else 1
        bits = bits[1:]
    m = len(bits)
    ones = len(bits) - len(bits.lstrip("1"))
    if ones == 0:
        frac = bits[1:]
        mag = int(frac, 2) / 2 ** len(frac) if frac else 0.0
    elif ones == m:
        mag = 2.0 ** (m - 1)
    else:
        frac = bits[ones + 1:]
        mag = 2.0 ** (ones - 1) * (1 + (int(frac, 2) / 2 ** len(frac) if frac else 0))
    return sign * mag if mag else 0.0


def test_unsigned_4bit_values():
    for code, value in U4_VALUES.items():
        assert decode(code, U4) == value


@pytest.mark.parametrize("code,value", [(0b1001, 1.25), (0b0000, 0), (0b1111, 8)])
def test_decode_examples(code, value):
    assert decode(code, U4) == value


def test_three_bit_values():
    values = [decode(c, FormatSpec(3)) for c in range(8)]
    assert values == [0, 0.25, 0.5, 0.75, 1, 1.5, 2, 4]


@pytest.mark.parametrize("n", range(2, 11))
@pytest.mark.parametrize("signed", [False, True])
def test_decode_matches_string_oracle(n, signed):
    spec = FormatSpec(n, signed)
    for c in range(spec.n_codes):
        assert decode(c, spec) == string_decode(c, n, signed)


def test_decode_fields_examples():
    f = decode_fields(0b1100, U4)
    assert (f.run_length, f.mantissa_bits, f.mantissa_value, f.value) == (2, 1, 0, 2)
    f = decode_fields(0b0001, U4)
    assert (f.run_length, f.mantissa_bits, f.mantissa_value, f.value) == (0, 3, 1, 0.125)
    f = decode_fields(0b11001010, FormatSpec(8))
    assert f.run_length == 2 and f.value == 2.625
    assert (f.mantissa_bits, f.mantissa_value) == (5, 0b01010)


@pytest.mark.parametrize("n", [2, 3, 4, 7, 8])
def test_field_widths_add_up(n):
    spec = FormatSpec(n)
    for c in range(spec.n_codes):
        f = decode_fields(c, spec)
        terminator = 1 if f.run_length < n else 0
        assert f.run_length + terminator + f.mantissa_bits == n


def test_encode_fields_examples():
    assert encode_fields(DecodedFields(0, 1, 2, 1, 1.25), U4) == 0b1001
    assert encode_fields(DecodedFields(0, 0, 3, 0, 0.0), U4) == 0b0000


@pytest.mark.parametrize("n", [2, 3, 4, 7, 8])
@pytest.mark.parametrize("signed", [False, True])
def test_round_trip_exhaustive(n, signed):
    spec = FormatSpec(n, signed)
    neg_zero = 1 << spec.magnitude_bits if signed else None
    for c in range(spec.n_codes):
        f = decode_fields(c, spec)
        if c == neg_zero:
            assert encode_fields(f, spec) == 0
        else:
            assert encode_fields(f, spec) == c


def test_encode_fields_rejects_bad_widths():
    with pytest.raises(FormatError):
        encode_fields(DecodedFields(0, 1, 3, 0, 1.0), U4)
    with pytest.raises(FormatError):
        encode_fields(DecodedFields(0, 1, 2, 4, 1.0), U4)
    with pytest.raises(FormatError):
        encode_fields(DecodedFields(1, 1, 2, 0, 1.0), U4)


def test_bad_codes_rejected():
    with pytest.raises(FormatError):
        decode(16, U4)
    with pytest.raises(FormatError):
        decode(-1, U4)
    with pytest.raises(FormatError):
        decode(1.5, U4)
    with pytest.raises(FormatError):
        FormatSpec(1)


def test_enumerate_values():
    assert enumerate_values(U4) == sorted(U4_VALUES.items())
    assert enumerate_values(FormatSpec(2)) == [(0, 0), (1, 0.5), (2, 1), (3, 2)]


def test_enumerate_signed_three_bit():
    rows = enumerate_values(FormatSpec(3, signed=True))
    assert 0b100 not in dict(rows)
    assert decode(0b100, FormatSpec(3, signed=True)) == 0
    # 2-bit magnitude {0, 0.5, 1, 2} mirrored
    assert sorted(v for _, v in rows) == [-2, -1, -0.5, 0, 0.5, 1, 2]


def test_signed_two_bit_is_ternary():
    assert sorted(v for _, v in enumerate_values(FormatSpec(2, signed=True))) == [-1, 0, 1]


@pytest.mark.parametrize("n", [2, 3, 4, 5, 8, 12])
def test_monotone_and_tapered(n):
    values = [v for _, v in enumerate_values(FormatSpec(n))]
    gaps = np.diff(values)
    assert np.all(gaps > 0)
    assert np.all(np.diff(gaps) >= 0)


def test_extremes():
    assert max_value(U4) == 8
    assert min_positive(U4) == 0.125
    assert max_value(FormatSpec(8)) == 128
    assert max_value(FormatSpec(4, signed=True)) == 4
    for n in range(2, 10):
        values = [v for _, v in enumerate_values(FormatSpec(n))]
        assert max_value(FormatSpec(n)) == values[-1]
        assert min_positive(FormatSpec(n)) == values[1]


def linear_scan(v, spec):
    best = None
    for c, value in enumerate_values(spec):
        err = abs(value - v)
        if best is None or err < best[0] or (err == best[0] and abs(value) < best[2]):
            best = (err, c, abs(value))
    return best[1]


def test_quantize_scalar_examples():
    assert quantize_scalar(1.3, U4) == 0b1001
    assert quantize_scalar(8.0, U4) == 0b1111
    assert quantize_scalar(100.0, U4) == 0b1111
    assert quantize_scalar(0.4375, U4) == 0b0011
    assert quantize_scalar(-3.0, U4) == 0
    assert quantize_scalar(-0.01, FormatSpec(4, signed=True)) == 0
    with pytest.raises(FormatError):
        quantize_scalar(float("nan"), U4)


@pytest.mark.parametrize("spec", [FormatSpec(2), FormatSpec(3), U4, FormatSpec(8), FormatSpec(3, True), FormatSpec(8, True)])
def test_quantize_scalar_nearest(spec):
    rng = np.random.default_rng(spec.total_bits * 2 + spec.signed)
    top = max_value(spec)
    for v in rng.uniform(-1.2 * top, 1.2 * top, 2000):
        assert quantize_scalar(v, spec) == linear_scan(v, spec)


@given(
    st.integers(2, 9),
    st.booleans(),
    st.lists(st.floats(-300, 300, allow_nan=False), min_size=1, max_size=40),
)
def test_quantize_array_agrees_with_scalar(n, signed, values):
    spec = FormatSpec(n, signed)
    codes = quantize_array(np.array(values), spec)
    assert list(codes) == [quantize_scalar(v, spec) for v in values]


@given(st.integers(2, 9), st.booleans())
def test_midpoints_round_down(n, signed):
    spec = FormatSpec(n, signed)
    values = sorted(v for _, v in enumerate_values(spec) if v >= 0)
    for lo, hi in zip(values, values[1:]):
        assert decode(quantize_scalar((lo + hi) / 2, spec), spec) == lo


@given(st.integers(2, 10), st.booleans())
@settings(max_examples=30)
def test_decode_array_agrees(n, signed):
    spec = FormatSpec(n, signed)
    codes = np.arange(spec.n_codes)
    assert list(decode_array(codes, spec)) == [decode(c, spec) for c in codes]
