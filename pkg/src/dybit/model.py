"""Model-side data types: GEMM-lowered layers and bitwidth assignments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .errors import SchemaError
from .pe import SUPPORTED_WIDTHS, PrecisionMode


@dataclass(frozen=True)
class LayerShape:
    """A layer as an (M x K) @ (K x N) GEMM."""

    name: str
    gemm_m: int
    gemm_n: int
    gemm_k: int

    def __post_init__(self):
        for dim in (self.gemm_m, self.gemm_n, self.gemm_k):
            if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
                raise SchemaError(f"layer {self.name!r}: GEMM dims must be positive integers")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.gemm_m, self.gemm_n, self.gemm_k

    @property
    def macs(self) -> int:
        return self.gemm_m * self.gemm_n * self.gemm_k


@dataclass(frozen=True)
class Layer:
    shape: LayerShape
    weights: str
    calibration: str
    activation_signed: bool = False

    @property
    def name(self) -> str:
        return self.shape.name


@dataclass
class ModelGraph:
    name: str
    layers: list[Layer]
    source: str = ""

    def __post_init__(self):
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise SchemaError(f"model {self.name!r}: layer names must be unique")

    @property
    def shapes(self) -> list[LayerShape]:
        return [l.shape for l in self.layers]

    def __len__(self):
        return len(self.layers)

    @classmethod
    def from_shapes(cls, name: str, shapes: Sequence[LayerShape]) -> "ModelGraph":
        """Graph whose blob ids are derived from the layer names."""
        layers = [Layer(s, f"{s.name}.weight", f"{s.name}.act") for s in shapes]
        return cls(name, layers, source="synthetic")


BIT_LEVELS = (8, 4, 2)


def next_level(bits: int) -> int | None:
    """One step down the 8 -> 4 -> 2 ladder, or None at the bottom."""
    i = BIT_LEVELS.index(bits)
    return BIT_LEVELS[i + 1] if i + 1 < len(BIT_LEVELS) else None


@dataclass(frozen=True)
class QuantAssignment:
    """Per-layer (w_bits, a_bits), in layer order."""

    pairs: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(w), int(a)) for w, a in self.pairs))
        for w, a in self.pairs:
            if w not in SUPPORTED_WIDTHS or a not in SUPPORTED_WIDTHS:
                raise SchemaError(f"bitwidths ({w}, {a}) not in {SUPPORTED_WIDTHS}")

    @classmethod
    def uniform(cls, n_layers: int, w_bits: int = 8, a_bits: int = 8) -> "QuantAssignment":
        return cls(((w_bits, a_bits),) * n_layers)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    def mode(self, i: int) -> PrecisionMode:
        w, a = self.pairs[i]
        return PrecisionMode(a_bits=a, w_bits=w)

    def replace(self, i: int, w_bits: int | None = None, a_bits: int | None = None) -> "QuantAssignment":
        w, a = self.pairs[i]
        pairs = list(self.pairs)
        pairs[i] = (w if w_bits is None else w_bits, a if a_bits is None else a_bits)
        return QuantAssignment(tuple(pairs))

    def label(self) -> str:
        return " ".join(f"{w}W{a}A" for w, a in self.pairs)
