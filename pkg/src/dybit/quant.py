"""Per-tensor DyBit quantization and the sigma-normalised RMSE metric."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .format import FormatSpec, decode_array, max_value, quantize_array


@dataclass
class QuantizedTensor:
    spec: FormatSpec
    scale: float
    codes: np.ndarray
    shape: tuple[int, ...]

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class QuantMetrics:
    rmse: float
    sigma: float
    n_elements: int


def as_tensor(t) -> np.ndarray:
    """Validate a real tensor: non-empty, finite."""
    arr = np.asarray(t)
    if arr.size == 0:
        raise ValueError("tensor is empty")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


def compute_scale(t, spec: FormatSpec) -> float:
    """Max-abs scaling: the largest magnitude lands on the largest code.

    Unsigned formats clamp negatives to zero, so only the positive peak
    counts there. ``max_value`` is a power of two, so the division is exact.
    """
    arr = as_tensor(t)
    peak = float(np.max(np.abs(arr) if spec.signed else np.maximum(arr, 0)))
    if peak == 0.0:
        return 1.0
    return peak / max_value(spec)


def quantize_tensor(t, spec: FormatSpec, scale: float) -> QuantizedTensor:
    if not (isinstance(scale, (int, float, np.floating)) and scale > 0 and math.isfinite(scale)):
        raise ValueError(f"scale must be a positive finite real, got {scale}")
    arr = as_tensor(t)
    codes = quantize_array(arr.astype(np.float64).ravel() / float(scale), spec)
    return QuantizedTensor(spec, float(scale), codes, tuple(arr.shape))


def dequantize_tensor(q: QuantizedTensor) -> np.ndarray:
    """Decode times scale, in float64."""
    return (decode_array(q.codes, q.spec) * q.scale).reshape(q.shape)


def fake_quantize(t, spec: FormatSpec) -> np.ndarray:
    arr = as_tensor(t)
    return dequantize_tensor(quantize_tensor(arr, spec, compute_scale(arr, spec)))


def tensor_stats(t) -> tuple[float, float, float]:
    """(mean, population std, max |x|)."""
    arr = np.ascontiguousarray(as_tensor(t), dtype=np.float64).ravel()
    mean = float(np.sum(arr)) / arr.size
    std = math.sqrt(float(np.sum((arr - mean) ** 2)) / arr.size)
    return mean, std, float(np.max(np.abs(arr)))


def rmse(original, quantized) -> QuantMetrics:
    """sqrt(mean(((x - x_hat) / sigma)**2)) with sigma the tensor's std.

    Reductions are numpy's pairwise sums over contiguous float64 buffers,
    so a fixed input gives a bit-identical result.
    """
    x = as_tensor(original).astype(np.float64).ravel()
    xh = as_tensor(quantized).astype(np.float64).ravel()
    if x.shape != xh.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {xh.shape}")
    _, sigma, _ = tensor_stats(x)
    if sigma == 0.0:
        if np.array_equal(x, xh):
            return QuantMetrics(0.0, 0.0, x.size)
        raise ValueError("original tensor has zero variance; normalised RMSE is undefined")
    err = (x - xh) / sigma
    return QuantMetrics(math.sqrt(float(np.sum(err * err)) / x.size), sigma, x.size)


def quantization_rmse(t, spec: FormatSpec) -> float:
    """RMSE of ``t`` against its own fake-quantized copy."""
    return rmse(t, fake_quantize(t, spec)).rmse


def affine_int_quantize(t, bits: int = 4) -> np.ndarray:
    """Asymmetric min/max uniform quantizer (the INT baseline), dequantized."""
    x = as_tensor(t).astype(np.float64)
    lo, hi = float(x.min()), float(x.max())
    levels = (1 << bits) - 1
    if hi == lo:
        return x.copy()
    scale = (hi - lo) / levels
    zero_point = np.round(-lo / scale)
    q = np.clip(np.round(x / scale) + zero_point, 0, levels)
    return (q - zero_point) * scale
