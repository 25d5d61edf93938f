"""File formats: model descriptors, tensor manifests, hardware configs, reports.

Descriptors, manifests, configs and full reports are JSON. Tensor payloads
are raw little-endian float32 blobs listed in a manifest; paths in a
manifest are relative to the manifest file. Per-layer report tables are CSV.
All writers are deterministic: same object in, same bytes out.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    DanglingReferenceError,
    DimensionMismatchError,
    SchemaError,
    TensorSizeError,
    TensorValidationError,
)
from .format import FormatSpec
from .latency import HwConfig, LatencyReport, Tiling
from .model import Layer, LayerShape, ModelGraph, QuantAssignment
from .pe import PrecisionMode
from .quant import QuantizedTensor
from .search import DegradeStep, LayerTensors, SearchResult

F32 = np.dtype("<f4")
CSV_FIELDS = ("name", "w_bits", "a_bits", "cycles", "rmse")
HW_FIELDS = ("array_dim", "if_buffer_bytes", "w_buffer_bytes", "of_buffer_bytes",
             "dram_bandwidth_bytes_per_cycle", "frequency_mhz")


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return doc


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _write_text(path, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def _require(obj: Mapping, key: str, kind, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    v = obj[key]
    if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
        raise SchemaError(f"{where}: field {key!r} must be an integer, got {v!r}")
    if kind is not int and not isinstance(v, kind):
        raise SchemaError(f"{where}: field {key!r} has the wrong type ({type(v).__name__})")
    return v


# ---------------------------------------------------------------- tensors

@dataclass(frozen=True)
class TensorEntry:
    shape: tuple[int, ...]
    path: str
    element_count: int
    dtype: str = "f32"
    byte_order: str = "little"

    def __post_init__(self):
        if self.dtype != "f32" or self.byte_order != "little":
            raise SchemaError(f"only little-endian f32 blobs are supported, got {self.dtype}/{self.byte_order}")
        if not self.shape or any(isinstance(d, bool) or not isinstance(d, int) or d < 1 for d in self.shape):
            raise SchemaError(f"shape must be positive integers, got {self.shape!r}")
        if math.prod(self.shape) != self.element_count:
            raise SchemaError(f"shape {self.shape} has {math.prod(self.shape)} elements, entry says {self.element_count}")


@dataclass(frozen=True)
class TensorManifest:
    entries: dict[str, TensorEntry]
    root: Path = Path(".")

    def __contains__(self, blob_id):
        return blob_id in self.entries

    def path_of(self, blob_id: str) -> Path:
        return self.root / self.entries[blob_id].path


def load_manifest(path) -> TensorManifest:
    doc = _read_json(path)
    blobs = _require(doc, "blobs", dict, str(path))
    entries = {}
    for blob_id, e in blobs.items():
        where = f"{path}: blob {blob_id!r}"
        if not isinstance(e, dict):
            raise SchemaError(f"{where}: entry must be an object")
        shape = _require(e, "shape", list, where)
        entries[blob_id] = TensorEntry(
            shape=tuple(shape),
            path=_require(e, "path", str, where),
            element_count=_require(e, "element_count", int, where),
            dtype=_require(e, "dtype", str, where),
            byte_order=_require(e, "byte_order", str, where),
        )
    return TensorManifest(entries, Path(path).parent)


def write_manifest(manifest: TensorManifest, path):
    blobs = {
        k: {"shape": list(e.shape), "dtype": e.dtype, "path": e.path,
            "byte_order": e.byte_order, "element_count": e.element_count}
        for k, e in sorted(manifest.entries.items())
    }
    _write_text(path, _dumps({"blobs": blobs}))


def save_tensors(directory, tensors: Mapping[str, np.ndarray], manifest_name: str = "manifest.json") -> Path:
    """Write each array as ``<id>.bin`` plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = {}
    for blob_id, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype=F32)
        fname = f"{blob_id}.bin"
        (directory / fname).write_bytes(data.tobytes())
        shape = tuple(int(d) for d in data.shape) or (1,)
        entries[blob_id] = TensorEntry(shape, fname, int(data.size))
    path = directory / manifest_name
    write_manifest(TensorManifest(entries, directory), path)
    return path


def load_tensor(manifest: TensorManifest, blob_id: str) -> np.ndarray:
    if blob_id not in manifest:
        raise DanglingReferenceError(f"blob {blob_id!r} is not in the manifest")
    entry = manifest.entries[blob_id]
    raw = manifest.path_of(blob_id).read_bytes()
    if len(raw) != 4 * entry.element_count:
        raise TensorSizeError(f"blob {blob_id!r}: {len(raw)} bytes on disk, expected {4 * entry.element_count}")
    arr = np.frombuffer(raw, dtype=F32).reshape(entry.shape)
    if not np.all(np.isfinite(arr)):
        raise TensorValidationError(f"blob {blob_id!r} contains non-finite values")
    return arr.astype(np.float32)


def load_layer_tensors(model: ModelGraph, manifest: TensorManifest) -> dict[str, LayerTensors]:
    return {
        l.name: LayerTensors(load_tensor(manifest, l.weights), load_tensor(manifest, l.calibration))
        for l in model.layers
    }


# ---------------------------------------------------------------- models

def conv_to_gemm(c_in: int, c_out: int, k_h: int, k_w: int, out_h: int, out_w: int, batch: int = 1) -> tuple[int, int, int]:
    """im2col lowering to (M, N, K)."""
    return out_h * out_w * batch, c_out, c_in * k_h * k_w


def _parse_layer(spec, idx: int, where: str) -> Layer:
    if not isinstance(spec, dict):
        raise SchemaError(f"{where}: layer {idx} must be an object")
    name = _require(spec, "name", str, f"{where}: layer {idx}")
    here = f"{where}: layer {name!r}"
    kind = _require(spec, "kind", str, here)
    if kind == "gemm":
        m, n, k = (_require(spec, key, int, here) for key in ("m", "n", "k"))
    elif kind == "conv":
        fields = [_require(spec, key, int, here) for key in ("c_in", "c_out", "k_h", "k_w", "out_h", "out_w")]
        batch = spec.get("batch", 1)
        if isinstance(batch, bool) or not isinstance(batch, int):
            raise SchemaError(f"{here}: field 'batch' must be an integer")
        m, n, k = conv_to_gemm(*fields, batch)
    else:
        raise SchemaError(f"{here}: kind must be 'gemm' or 'conv', got {kind!r}")
    signed = spec.get("activation_signed", False)
    if not isinstance(signed, bool):
        raise SchemaError(f"{here}: activation_signed must be a boolean")
    return Layer(LayerShape(name, m, n, k), _require(spec, "weights", str, here),
                 _require(spec, "calibration", str, here), signed)


def check_model(model: ModelGraph, manifest: TensorManifest):
    """Every blob id resolves and each weight blob holds a K x N matrix."""
    for layer in model.layers:
        for blob in (layer.weights, layer.calibration):
            if blob not in manifest:
                raise DanglingReferenceError(f"layer {layer.name!r} references unknown blob {blob!r}")
        entry = manifest.entries[layer.weights]
        k, n = layer.shape.gemm_k, layer.shape.gemm_n
        if entry.element_count != k * n or (len(entry.shape) == 2 and entry.shape != (k, n)):
            raise DimensionMismatchError(
                f"layer {layer.name!r}: weight blob {layer.weights!r} has shape {entry.shape}, expected ({k}, {n})")


def load_model(path, manifest: TensorManifest | None = None) -> ModelGraph:
    """Parse a descriptor; with a manifest, also resolve and size-check its blobs.

    A descriptor may name its own manifest under ``"manifest"`` (relative path).
    """
    doc = _read_json(path)
    name = _require(doc, "name", str, str(path))
    specs = _require(doc, "layers", list, str(path))
    if not specs:
        raise SchemaError(f"{path}: model has no layers")
    model = ModelGraph(name, [_parse_layer(s, i, str(path)) for i, s in enumerate(specs)], source=str(path))
    if manifest is None and "manifest" in doc:
        manifest = load_manifest(Path(path).parent / _require(doc, "manifest", str, str(path)))
    if manifest is not None:
        check_model(model, manifest)
    return model


def model_to_dict(model: ModelGraph, manifest: str | None = None) -> dict:
    layers = [{"name": l.name, "kind": "gemm", "m": l.shape.gemm_m, "n": l.shape.gemm_n, "k": l.shape.gemm_k,
               "weights": l.weights, "calibration": l.calibration, "activation_signed": l.activation_signed}
              for l in model.layers]
    doc = {"name": model.name, "layers": layers}
    if manifest is not None:
        doc["manifest"] = manifest
    return doc


def save_model(model: ModelGraph, path, manifest: str | None = None):
    _write_text(path, _dumps(model_to_dict(model, manifest)))


# ---------------------------------------------------------------- hardware

def load_hw_config(path) -> HwConfig:
    doc = _read_json(path)
    missing = [f for f in HW_FIELDS if f not in doc]
    if missing:
        raise SchemaError(f"{path}: missing hardware fields {missing}")
    extra = sorted(set(doc) - set(HW_FIELDS))
    if extra:
        raise SchemaError(f"{path}: unknown hardware fields {extra}")
    return HwConfig(**{f: doc[f] for f in HW_FIELDS})


def save_hw_config(hw: HwConfig, path):
    _write_text(path, _dumps(asdict(hw)))


# ---------------------------------------------------------------- reports

def search_result_to_dict(r: SearchResult) -> dict:
    return {
        "kind": "search",
        "strategy": r.strategy,
        "constraint": r.constraint,
        "top_k": r.top_k,
        "total_latency_cycles": r.total_latency_cycles,
        "total_rmse": r.total_rmse,
        "baseline_latency_cycles": r.baseline_latency_cycles,
        "baseline_rmse": r.baseline_rmse,
        "speedup_ratio": r.speedup_ratio,
        "rmse_ratio": r.rmse_ratio,
        "iterations": r.iterations,
        "layers": [
            {"name": n, "w_bits": w, "a_bits": a, "cycles": c, "rmse": e}
            for n, (w, a), c, e in zip(r.layer_names, r.assignment, r.layer_cycles, r.layer_rmse)
        ],
        "trace": [asdict(s) for s in r.trace],
    }


def search_result_from_dict(d: dict) -> SearchResult:
    layers = d["layers"]
    return SearchResult(
        strategy=d["strategy"],
        constraint=d["constraint"],
        top_k=d["top_k"],
        assignment=QuantAssignment(tuple((l["w_bits"], l["a_bits"]) for l in layers)),
        layer_names=[l["name"] for l in layers],
        layer_cycles=[l["cycles"] for l in layers],
        layer_rmse=[l["rmse"] for l in layers],
        total_latency_cycles=d["total_latency_cycles"],
        total_rmse=d["total_rmse"],
        baseline_latency_cycles=d["baseline_latency_cycles"],
        baseline_rmse=d["baseline_rmse"],
        speedup_ratio=d["speedup_ratio"],
        rmse_ratio=d["rmse_ratio"],
        iterations=d["iterations"],
        trace=[DegradeStep(**s) for s in d["trace"]],
    )


def latency_report_to_dict(r: LatencyReport) -> dict:
    return {
        "kind": "latency",
        "total_cycles": r.total_cycles,
        "layers": [
            {"name": name, "w_bits": r.mode_per_layer[name].w_bits, "a_bits": r.mode_per_layer[name].a_bits,
             "cycles": cycles, "tiling": asdict(r.chosen_tilings[name])}
            for name, cycles in r.per_layer_cycles.items()
        ],
    }


def latency_report_from_dict(d: dict) -> LatencyReport:
    layers = d["layers"]
    return LatencyReport(
        per_layer_cycles={l["name"]: l["cycles"] for l in layers},
        total_cycles=d["total_cycles"],
        chosen_tilings={l["name"]: Tiling(**l["tiling"]) for l in layers},
        mode_per_layer={l["name"]: PrecisionMode(a_bits=l["a_bits"], w_bits=l["w_bits"]) for l in layers},
    )


def _csv_text(rows, fields) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def report_rows(report: SearchResult | LatencyReport) -> list[dict]:
    """Per-layer CSV rows; latency reports leave ``rmse`` empty."""
    if isinstance(report, SearchResult):
        return search_result_to_dict(report)["layers"]
    return [{k: l[k] for k in CSV_FIELDS[:-1]} | {"rmse": ""} for l in latency_report_to_dict(report)["layers"]]


def save_report(report: SearchResult | LatencyReport, path):
    """JSON holds the full report; CSV holds one row per layer."""
    path = Path(path)
    if path.suffix == ".csv":
        _write_text(path, _csv_text(report_rows(report), CSV_FIELDS))
        return
    if isinstance(report, SearchResult):
        doc = search_result_to_dict(report)
    elif isinstance(report, LatencyReport):
        doc = latency_report_to_dict(report)
    else:
        raise TypeError(f"cannot serialise {type(report).__name__}")
    _write_text(path, _dumps(doc))


def _parse_cell(text: str):
    if text == "":
        return None
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def load_report(path):
    """Inverse of :func:`save_report` (CSV comes back as a list of row dicts)."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="", encoding="utf-8") as f:
            return [{k: (v if k == "name" else _parse_cell(v)) for k, v in row.items()} for row in csv.DictReader(f)]
    doc = _read_json(path)
    kind = doc.get("kind")
    if kind == "search":
        return search_result_from_dict(doc)
    if kind == "latency":
        return latency_report_from_dict(doc)
    raise SchemaError(f"{path}: unknown report kind {kind!r}")


def save_trace(report: SearchResult, path):
    fields = ("iteration", "layer", "field", "from_bits", "to_bits", "total_latency_cycles", "total_rmse", "forced")
    _write_text(path, _csv_text((asdict(s) for s in report.trace), fields))


def save_rows(rows, fields, path):
    _write_text(path, _csv_text(rows, fields))


# ---------------------------------------------------------------- quantized dumps

def save_quantized(q: QuantizedTensor, stem) -> tuple[Path, Path]:
    """Codes as a raw little-endian blob next to a JSON header."""
    stem = Path(stem)
    dtype = np.dtype("<u1") if q.codes.dtype.itemsize == 1 else np.dtype("<u2")
    codes = stem.parent / f"{stem.name}.codes.bin"
    header = stem.parent / f"{stem.name}.json"
    codes.parent.mkdir(parents=True, exist_ok=True)
    codes.write_bytes(np.ascontiguousarray(q.codes, dtype=dtype).tobytes())
    _write_text(header, _dumps({
        "format": str(q.spec), "total_bits": q.spec.total_bits, "signed": q.spec.signed,
        "scale": q.scale, "shape": list(q.shape), "codes": codes.name, "code_dtype": dtype.str,
    }))
    return header, codes


def load_quantized(header) -> QuantizedTensor:
    header = Path(header)
    doc = _read_json(header)
    raw = (header.parent / doc["codes"]).read_bytes()
    shape = tuple(doc["shape"])
    codes = np.frombuffer(raw, dtype=np.dtype(doc["code_dtype"]))
    if codes.size != math.prod(shape):
        raise TensorSizeError(f"{header}: {codes.size} codes for shape {shape}")
    native = np.uint8 if codes.dtype.itemsize == 1 else np.uint16
    spec = FormatSpec(doc["total_bits"], signed=doc["signed"])
    return QuantizedTensor(spec, doc["scale"], codes.astype(native), shape)
