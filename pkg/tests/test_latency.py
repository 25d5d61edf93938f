import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dybit.errors import CapacityError
from dybit.latency import (
    HwConfig,
    Tiling,
    effective_array,
    enumerate_tilings,
    layer_latency,
    model_latency,
    tile_fits,
    tile_latency,
)
from dybit.model import LayerShape, QuantAssignment
from dybit.pe import PrecisionMode

INF = float("inf")
BIG = 1 << 30
MODES = [PrecisionMode(a, w) for a in (8, 4, 2) for w in (8, 4, 2)]


def hw(n=16, if_b=BIG, w_b=BIG, of_b=BIG, bw=INF):
    return HwConfig(n, if_b, w_b, of_b, bw, 200.0)


def reference_tile(tm, tn, tk, writes, hwc, mode):
    """Scalar cycle count for one tile, written out longhand."""
    rows = hwc.array_dim * 8 // mode.a_bits
    cols = hwc.array_dim * 8 // mode.w_bits
    compute = math.ceil(tm / rows) * math.ceil(tn / cols) * (tk + 2 * hwc.array_dim - 1)
    bits = tm * tk * mode.a_bits + tk * tn * mode.w_bits + (tm * tn * mode.a_bits if writes else 0)
    transfer = 0 if hwc.dram_bandwidth_bytes_per_cycle == INF else math.ceil(math.ceil(bits / 8) / hwc.dram_bandwidth_bytes_per_cycle)
    return max(compute, transfer)


def simulate_tiling(layer, t, hwc, mode):
    """Walk every tile of the layer in loop order."""
    m, n, k = layer.dims
    total = 0
    for m0 in range(0, m, t.tile_m):
        for n0 in range(0, n, t.tile_n):
            for k0 in range(0, k, t.tile_k):
                tm, tn, tk = min(t.tile_m, m - m0), min(t.tile_n, n - n0), min(t.tile_k, k - k0)
                total += reference_tile(tm, tn, tk, k0 + t.tile_k >= k, hwc, mode)
    return total


def fits(tm, tn, tk, hwc, mode):
    return (tm * tk * mode.a_bits <= 8 * hwc.if_buffer_bytes
            and tk * tn * mode.w_bits <= 8 * hwc.w_buffer_bytes
            and tm * tn * 32 <= 8 * hwc.of_buffer_bytes)


def test_effective_array():
    h = hw()
    assert effective_array(h, PrecisionMode(8, 8)) == (16, 16)
    assert effective_array(h, PrecisionMode(4, 4)) == (32, 32)
    assert effective_array(h, PrecisionMode(2, 8)) == (64, 16)


def test_monolithic_tile_present():
    tilings = enumerate_tilings(LayerShape("l", 64, 64, 64), hw(), PrecisionMode(8, 8))
    assert Tiling(64, 64, 64) in tilings
    assert layer_latency(LayerShape("l", 64, 64, 64), PrecisionMode(8, 8), hw())[1] == Tiling(64, 64, 64)


def test_tight_buffers_respected():
    h = hw(if_b=64, w_b=64, of_b=4096)
    layer = LayerShape("l", 32, 32, 48)
    for mode in MODES:
        tilings = enumerate_tilings(layer, h, mode)
        assert tilings
        assert all(tile_fits(t, h, mode) and fits(t.tile_m, t.tile_n, t.tile_k, h, mode) for t in tilings)
        assert any(t.tile_k < 48 for t in tilings)


def test_capacity_error():
    h = hw(of_b=2)
    with pytest.raises(CapacityError):
        enumerate_tilings(LayerShape("l", 8, 8, 8), h, PrecisionMode(8, 8))
    with pytest.raises(CapacityError) as exc:
        layer_latency(LayerShape("conv9", 8, 8, 8), PrecisionMode(8, 8), h)
    assert exc.value.layer == "conv9"


def test_tile_latency_examples():
    h = hw()
    assert tile_latency(Tiling(16, 16, 1), h, PrecisionMode(8, 8)) == 32
    base = tile_latency(Tiling(16, 16, 40), h, PrecisionMode(8, 8))
    assert tile_latency(Tiling(16, 16, 80), h, PrecisionMode(8, 8)) == base + 40
    slow = hw(bw=0.5)
    assert tile_latency(Tiling(16, 16, 40), slow, PrecisionMode(8, 8)) > base
    assert tile_latency(Tiling(16, 16, 40), hw(bw=1e12), PrecisionMode(8, 8)) == base
    with pytest.raises(ValueError):
        tile_latency(Tiling(16, 16, 40), hw(if_b=8), PrecisionMode(8, 8))


def test_tile_latency_matches_reference():
    h = hw(bw=3.0)
    for mode in MODES:
        for t in [(16, 16, 1), (33, 7, 19), (64, 128, 5)]:
            assert tile_latency(Tiling(*t), h, mode) == reference_tile(*t, True, h, mode)
            assert tile_latency(Tiling(*t), h, mode, writes_output=False) == reference_tile(*t, False, h, mode)


def test_degenerate_layer():
    cycles, t = layer_latency(LayerShape("one", 1, 1, 1), PrecisionMode(8, 8), hw())
    assert t == Tiling(1, 1, 1)
    assert cycles == 1 + 2 * 16 - 1


def test_compute_bound_scaling():
    h = hw()
    layer = LayerShape("l", 256, 256, 300)
    base = layer_latency(layer, PrecisionMode(8, 8), h)[0]
    assert layer_latency(layer, PrecisionMode(4, 4), h)[0] / base == 0.25
    ragged = LayerShape("r", 250, 270, 300)
    base = layer_latency(ragged, PrecisionMode(8, 8), h)[0]
    ratio = layer_latency(ragged, PrecisionMode(4, 4), h)[0] / base
    # ceil(250/32) * ceil(270/32) vs ceil(250/16) * ceil(270/16)
    assert ratio == (8 * 9) / (16 * 17)
    assert 0.25 <= ratio


small_layers = st.builds(
    lambda m, n, k: LayerShape("s", m, n, k),
    st.integers(1, 36), st.integers(1, 36), st.integers(1, 20),
)


@given(small_layers, st.sampled_from(MODES), st.sampled_from([4, 8]),
       st.integers(4, 200), st.integers(4, 200), st.integers(64, 4000), st.sampled_from([INF, 0.5, 2.0, 7.0]))
@settings(max_examples=60, deadline=None)
def test_grid_minimum_matches_tile_walk(layer, mode, n, if_b, w_b, of_b, bw):
    h = hw(n, if_b, w_b, of_b, bw)
    try:
        tilings = enumerate_tilings(layer, h, mode)
    except CapacityError:
        return
    walked = min(simulate_tiling(layer, t, h, mode) for t in tilings)
    assert layer_latency(layer, mode, h)[0] == walked


@given(small_layers, st.sampled_from(MODES), st.sampled_from([4, 8]),
       st.integers(4, 200), st.integers(4, 200), st.integers(64, 4000))
@settings(max_examples=40, deadline=None)
def test_grid_contains_integer_optimum_when_compute_bound(layer, mode, n, if_b, w_b, of_b):
    h = hw(n, if_b, w_b, of_b, INF)
    m_, n_, k_ = layer.dims
    best = None
    for tm, tn, tk in itertools.product(range(1, m_ + 1), range(1, n_ + 1), range(1, k_ + 1)):
        if fits(tm, tn, tk, h, mode):
            c = simulate_tiling(layer, Tiling(tm, tn, tk), h, mode)
            best = c if best is None else min(best, c)
    if best is None:
        with pytest.raises(CapacityError):
            layer_latency(layer, mode, h)
    else:
        assert layer_latency(layer, mode, h)[0] == best


def test_brute_force_grid_small_layer():
    h = hw(8, 256, 256, 2048, 4.0)
    layer = LayerShape("s", 24, 20, 30)
    mode = PrecisionMode(4, 8)
    cycles, t = layer_latency(layer, mode, h)
    assert simulate_tiling(layer, t, h, mode) == cycles


gemms = st.builds(lambda m, n, k: LayerShape("g", m, n, k),
                  st.integers(1, 3000), st.integers(1, 1200), st.integers(1, 3000))


@given(gemms, st.sampled_from([0.5, 4.0, 64.0, INF]), st.integers(1 << 10, 1 << 20), st.integers(1 << 12, 1 << 22))
@settings(max_examples=60, deadline=None)
def test_lower_bits_never_slower(layer, bw, buf, of_b):
    h = hw(16, buf, buf, of_b, bw)
    for a, w in itertools.product((8, 4, 2), repeat=2):
        here = layer_latency(layer, PrecisionMode(a, w), h)[0]
        for a2, w2 in ((a // 2, w), (a, w // 2)):
            if a2 >= 2 and w2 >= 2:
                assert layer_latency(layer, PrecisionMode(a2, w2), h)[0] <= here


@given(gemms, st.sampled_from([0.5, 4.0, 64.0, INF]))
@settings(max_examples=25, deadline=None)
def test_compute_ceiling_with_ample_buffers(layer, bw):
    h = hw(16, BIG, BIG, BIG, bw)
    base = layer_latency(layer, PrecisionMode(8, 8), h)[0]
    for mode in MODES:
        ceiling = (8 // mode.a_bits) * (8 // mode.w_bits)
        assert base <= ceiling * layer_latency(layer, mode, h)[0]


def test_model_latency():
    h = hw()
    layers = [LayerShape(f"l{i}", 512, 512, 512) for i in range(3)]
    base = model_latency(layers, QuantAssignment.uniform(3, 8, 8), h)
    fast = model_latency(layers, QuantAssignment.uniform(3, 2, 2), h)
    assert 8 < base.total_cycles / fast.total_cycles <= 16
    assert base.total_cycles == sum(base.per_layer_cycles.values())
    one = model_latency(layers[:1], QuantAssignment.uniform(1, 4, 2), h)
    assert one.total_cycles == layer_latency(layers[0], PrecisionMode(2, 4), h)[0]
    assert one.mode_per_layer["l0"] == PrecisionMode(a_bits=2, w_bits=4)


def test_deterministic_report():
    h = hw(16, 1 << 14, 1 << 14, 1 << 15, 8.0)
    layers = [LayerShape("a", 300, 70, 500), LayerShape("b", 49, 512, 4608)]
    assign = QuantAssignment(((4, 8), (2, 2)))
    assert model_latency(layers, assign, h) == model_latency(layers, assign, h)
