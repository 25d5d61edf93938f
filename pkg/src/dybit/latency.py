"""Tile-level latency model of the output-stationary systolic array.

An ``N x N`` array in mode (a_bits, w_bits) behaves like an
``(8/a_bits)N x (8/w_bits)N`` array: rows take output rows (GEMM M),
columns take output columns (GEMM N), and K is streamed through. A tile
costs::

    compute  = ceil(tm/rows) * ceil(tn/cols) * (tk + 2N - 1)
    transfer = ceil(bytes_moved / dram_bandwidth)
    cycles   = max(compute, transfer)            # double buffered

Fill/drain is paid on the physical array, so it is ``2N - 1`` whatever the
mode. Each tile loads its IF and weight slices; the output slice is written
back (at the layer's activation width) after its last K step. Partial sums
live in the OF buffer as FP32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import CapacityError, SchemaError
from .model import LayerShape, ModelGraph, QuantAssignment
from .pe import PrecisionMode

ACC_BITS = 32
FUSION_FACTORS = (1, 2, 4, 8)
_M_CHUNK = 16


@dataclass(frozen=True)
class HwConfig:
    array_dim: int
    if_buffer_bytes: int
    w_buffer_bytes: int
    of_buffer_bytes: int
    dram_bandwidth_bytes_per_cycle: float
    frequency_mhz: float

    def __post_init__(self):
        for name in ("array_dim", "if_buffer_bytes", "w_buffer_bytes", "of_buffer_bytes"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise SchemaError(f"{name} must be a positive integer, got {v!r}")
        for name in ("dram_bandwidth_bytes_per_cycle", "frequency_mhz"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise SchemaError(f"{name} must be positive, got {v!r}")


@dataclass(frozen=True, order=True)
class Tiling:
    tile_m: int
    tile_n: int
    tile_k: int

    @property
    def volume(self) -> int:
        return self.tile_m * self.tile_n * self.tile_k


@dataclass
class LatencyReport:
    per_layer_cycles: dict[str, int]
    total_cycles: int
    chosen_tilings: dict[str, Tiling]
    mode_per_layer: dict[str, PrecisionMode]

    def microseconds(self, hw: HwConfig) -> float:
        return self.total_cycles / hw.frequency_mhz


def effective_array(hw: HwConfig, mode: PrecisionMode) -> tuple[int, int]:
    return (8 // mode.a_bits) * hw.array_dim, (8 // mode.w_bits) * hw.array_dim


def tile_fits(tile: Tiling, hw: HwConfig, mode: PrecisionMode) -> bool:
    """IF, weight and OF (FP32 accumulator) footprints against the buffers."""
    tm, tn, tk = tile.tile_m, tile.tile_n, tile.tile_k
    return (
        tm * tk * mode.a_bits <= 8 * hw.if_buffer_bytes
        and tk * tn * mode.w_bits <= 8 * hw.w_buffer_bytes
        and tm * tn * ACC_BITS <= 8 * hw.of_buffer_bytes
    )


def _ceil_div(a, b):
    return -(-a // b)


def _transfer_cycles(bits, bandwidth):
    if math.isinf(bandwidth):
        return np.zeros_like(bits)
    return np.ceil(_ceil_div(bits, 8) / bandwidth).astype(np.int64)


def _tile_cycles(tm, tn, tk, writes, hw: HwConfig, mode: PrecisionMode):
    rows, cols = effective_array(hw, mode)
    compute = _ceil_div(tm, rows) * _ceil_div(tn, cols) * (tk + 2 * hw.array_dim - 1)
    bits = tm * tk * mode.a_bits + tk * tn * mode.w_bits + writes * tm * tn * mode.a_bits
    return np.maximum(compute, _transfer_cycles(bits, hw.dram_bandwidth_bytes_per_cycle))


def tile_latency(tile: Tiling, hw: HwConfig, mode: PrecisionMode, writes_output: bool = True) -> int:
    if not tile_fits(tile, hw, mode):
        raise ValueError(f"{tile} does not fit the buffers in mode {mode}")
    arr = np.array([tile.tile_m, tile.tile_n, tile.tile_k], dtype=np.int64)
    return int(_tile_cycles(arr[0], arr[1], arr[2], int(writes_output), hw, mode))


@lru_cache(maxsize=None)
def _balanced_sizes(dim: int) -> tuple[int, ...]:
    """Distinct ceil(dim / j): the smallest tile giving exactly j pieces."""
    sizes, j = set(), 1
    while j <= dim:
        s = _ceil_div(dim, j)
        sizes.add(s)
        j = _ceil_div(dim, s - 1) if s > 1 else dim + 1
    return tuple(sorted(sizes))


@lru_cache(maxsize=None)
def candidate_sizes(dim: int, array_dim: int) -> tuple[int, ...]:
    """Tile sizes tried along an output dimension.

    Multiples of every effective array size N * {1, 2, 4, 8}, each being
    the smallest aligned size for its piece count, plus every balanced size
    below 8N for buffers too small to cover a full effective array side.
    The set does not depend on the precision mode.
    """
    sizes = {dim}
    for f in FUSION_FACTORS:
        base = f * array_dim
        pieces = _ceil_div(dim, base)
        for q in _balanced_sizes(pieces):
            sizes.add(min(q * base, dim))
    sizes.update(s for s in _balanced_sizes(dim) if s < FUSION_FACTORS[-1] * array_dim)
    return tuple(sorted(sizes))


def _candidate_grid(layer: LayerShape, hw: HwConfig, mode: PrecisionMode, cm=None):
    m, n, k = layer.dims
    if cm is None:
        cm = candidate_sizes(m, hw.array_dim)
    cm = np.asarray(cm, dtype=np.int64)
    cn = np.array(candidate_sizes(n, hw.array_dim), dtype=np.int64)
    ck = np.array(_balanced_sizes(k), dtype=np.int64)
    tm, tn, tk = (a.ravel() for a in np.meshgrid(cm, cn, ck, indexing="ij"))
    ok = (
        (tm * tk * mode.a_bits <= 8 * hw.if_buffer_bytes)
        & (tk * tn * mode.w_bits <= 8 * hw.w_buffer_bytes)
        & (tm * tn * ACC_BITS <= 8 * hw.of_buffer_bytes)
    )
    return tm[ok], tn[ok], tk[ok]


def enumerate_tilings(layer: LayerShape, hw: HwConfig, mode: PrecisionMode) -> list[Tiling]:
    tm, tn, tk = _candidate_grid(layer, hw, mode)
    if tm.size == 0:
        raise CapacityError(f"layer {layer.name!r}: no tiling fits the buffers in mode {mode}", layer.name)
    return sorted(Tiling(int(a), int(b), int(c)) for a, b, c in zip(tm, tn, tk))


def tiled_cycles(layer: LayerShape, tm, tn, tk, hw: HwConfig, mode: PrecisionMode):
    """Total cycles for covering ``layer`` with tilings (vectorised).

    Tiles come in at most 2 x 2 x 2 size classes: full tiles and the edge
    remainder along each dimension. Within a K column only the last tile
    writes its outputs back.
    """
    m, n, k = layer.dims
    tm, tn, tk = (np.asarray(a, dtype=np.int64) for a in (tm, tn, tk))
    m_classes = [(tm, m // tm), (m % tm, (m % tm > 0).astype(np.int64))]
    n_classes = [(tn, n // tn), (n % tn, (n % tn > 0).astype(np.int64))]
    rk = k % tk
    last_k = np.where(rk > 0, rk, tk)
    inner_count = np.where(rk > 0, k // tk, k // tk - 1)
    total = np.zeros_like(tm)
    for sm, cnt_m in m_classes:
        for sn, cnt_n in n_classes:
            per_column = (
                inner_count * _tile_cycles(sm, sn, tk, 0, hw, mode)
                + _tile_cycles(sm, sn, last_k, 1, hw, mode)
            )
            total = total + cnt_m * cnt_n * per_column
    return total


def _best(cycles, tm, tn, tk) -> int:
    # min cycles, then largest volume, then lexicographically smallest dims
    return int(np.lexsort((tk, tn, tm, -(tm * tn * tk), cycles))[0])


@lru_cache(maxsize=4096)
def _layer_latency(dims: tuple[int, int, int], mode: PrecisionMode, hw: HwConfig) -> tuple[int, Tiling]:
    layer = LayerShape("_", *dims)
    sizes = candidate_sizes(layer.gemm_m, hw.array_dim)
    winners = []
    for start in range(0, len(sizes), _M_CHUNK):
        tm, tn, tk = _candidate_grid(layer, hw, mode, sizes[start:start + _M_CHUNK])
        if tm.size:
            cycles = tiled_cycles(layer, tm, tn, tk, hw, mode)
            i = _best(cycles, tm, tn, tk)
            winners.append((cycles[i], tm[i], tn[i], tk[i]))
    if not winners:
        raise CapacityError(f"no tiling fits the buffers in mode {mode}")
    cycles, tm, tn, tk = (np.array(col, dtype=np.int64) for col in zip(*winners))
    i = _best(cycles, tm, tn, tk)
    return int(cycles[i]), Tiling(int(tm[i]), int(tn[i]), int(tk[i]))


def layer_latency(layer: LayerShape, mode: PrecisionMode, hw: HwConfig) -> tuple[int, Tiling]:
    try:
        return _layer_latency(layer.dims, mode, hw)
    except CapacityError as exc:
        raise CapacityError(f"layer {layer.name!r}: {exc}", layer.name) from None


def model_latency(model: ModelGraph | Sequence[LayerShape], assign: QuantAssignment, hw: HwConfig) -> LatencyReport:
    """Layers run back to back; the total is the plain sum."""
    shapes = model.shapes if isinstance(model, ModelGraph) else list(model)
    if len(assign) != len(shapes):
        raise SchemaError(f"assignment covers {len(assign)} layers, model has {len(shapes)}")
    cycles, tilings, modes = {}, {}, {}
    for i, layer in enumerate(shapes):
        mode = assign.mode(i)
        cycles[layer.name], tilings[layer.name] = layer_latency(layer, mode, hw)
        modes[layer.name] = mode
    return LatencyReport(cycles, sum(cycles.values()), tilings, modes)
