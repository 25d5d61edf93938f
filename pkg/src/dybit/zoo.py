"""Synthetic models and tensors for experiments and tests."""

from __future__ import annotations

import numpy as np

from .latency import HwConfig
from .model import LayerShape, ModelGraph
from .search import LayerTensors


def conv_gemm(name: str, c_in: int, c_out: int, kernel: int, out_hw: int, batch: int = 1) -> LayerShape:
    """im2col lowering: M = out_h * out_w * batch, K = c_in * k * k, N = c_out."""
    return LayerShape(name, out_hw * out_hw * batch, c_out, c_in * kernel * kernel)


def resnet18_shapes(batch: int = 1) -> list[LayerShape]:
    """ResNet-18 at 224x224, convolutions (incl. downsample 1x1s) and the classifier."""
    shapes = [conv_gemm("conv1", 3, 64, 7, 112, batch)]
    for i in range(4):
        shapes.append(conv_gemm(f"layer1.{i // 2}.conv{i % 2 + 1}", 64, 64, 3, 56, batch))
    c_in = 64
    for stage, (c, hw) in enumerate([(128, 28), (256, 14), (512, 7)], start=2):
        shapes.append(conv_gemm(f"layer{stage}.0.conv1", c_in, c, 3, hw, batch))
        shapes.append(conv_gemm(f"layer{stage}.0.conv2", c, c, 3, hw, batch))
        shapes.append(conv_gemm(f"layer{stage}.0.downsample", c_in, c, 1, hw, batch))
        shapes.append(conv_gemm(f"layer{stage}.1.conv1", c, c, 3, hw, batch))
        shapes.append(conv_gemm(f"layer{stage}.1.conv2", c, c, 3, hw, batch))
        c_in = c
    shapes.append(LayerShape("fc", batch, 1000, 512))
    return shapes


def synthetic_tensors(model: ModelGraph, rng: np.random.Generator, act_samples: int = 4096) -> dict[str, LayerTensors]:
    """Gaussian or Laplacian weights (K x N) and post-ReLU calibration activations.

    Per-layer spread and tail shape vary so layers differ in how well they
    tolerate low bitwidths.
    """
    out = {}
    for layer in model.layers:
        k, n = layer.shape.gemm_k, layer.shape.gemm_n
        std = 1.0 / np.sqrt(k)
        if rng.random() < 0.5:
            w = rng.normal(0.0, std, (k, n))
        else:
            w = rng.laplace(0.0, std / np.sqrt(2.0), (k, n))
        pre = rng.standard_normal(act_samples) * rng.uniform(0.5, 2.0) + rng.uniform(-0.5, 0.5)
        acts = np.maximum(pre, 0.0) if not layer.activation_signed else pre
        if not np.any(acts):
            acts[0] = 1.0
        out[layer.name] = LayerTensors(w.astype(np.float32), acts.astype(np.float32))
    return out


def toy_model(rng: np.random.Generator, n_layers: int = 3, name: str = "toy") -> ModelGraph:
    """Random GEMM stack large enough that 2-bit modes pay off."""
    shapes = [
        LayerShape(f"{name}{i}", int(rng.integers(64, 512)), int(rng.integers(32, 256)), int(rng.integers(64, 512)))
        for i in range(n_layers)
    ]
    return ModelGraph.from_shapes(name, shapes)


def default_hw() -> HwConfig:
    """16x16 array, 256 KiB buffers, 16 B/cycle DRAM, 200 MHz."""
    return HwConfig(
        array_dim=16,
        if_buffer_bytes=256 * 1024,
        w_buffer_bytes=256 * 1024,
        of_buffer_bytes=256 * 1024,
        dram_bandwidth_bytes_per_cycle=16.0,
        frequency_mhz=200.0,
    )


def write_bundle(directory, model: ModelGraph, tensors: dict[str, LayerTensors], hw: HwConfig | None = None):
    """Descriptor, tensor manifest + blobs and (optionally) a hardware config.

    Layout: ``model.json``, ``tensors/manifest.json``, ``tensors/*.bin``, ``hw.json``.
    """
    from pathlib import Path

    from .io import save_hw_config, save_model, save_tensors

    directory = Path(directory)
    blobs = {}
    for layer in model.layers:
        blobs[layer.weights] = tensors[layer.name].weights
        blobs[layer.calibration] = tensors[layer.name].activations
    save_tensors(directory / "tensors", blobs)
    save_model(model, directory / "model.json", manifest="tensors/manifest.json")
    if hw is not None:
        save_hw_config(hw, directory / "hw.json")
    return directory
