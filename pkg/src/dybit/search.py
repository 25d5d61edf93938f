"""Layer-wise mixed-precision search.

Two greedy strategies share one loop. Starting from all-8/8, each iteration
ranks layers on one metric, reorders the top-k on the other, and walks the
list lowering weight bitwidths one level, then activation bitwidths:

* speedup: top-k slowest layers, lowest RMSE first; stop once
  ``alpha * latency <= baseline_latency``.
* rmse: top-k lowest-RMSE layers, slowest first; a degrade is only kept if
  ``rmse <= beta * baseline_rmse`` still holds; stop when nothing fits.

A degrade that does not lower total latency is skipped. If a whole
iteration makes no progress that way, the first latency-neutral degrade is
taken instead (flagged ``forced`` in the trace) so the walk always ends.

Per-layer RMSE is weight RMSE plus activation RMSE. Weights use signed
formats; activations are unsigned unless the layer says otherwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InfeasibleError, MissingTensorError, SearchSpaceError
from .format import FormatSpec
from .latency import HwConfig, layer_latency
from .model import BIT_LEVELS, ModelGraph, QuantAssignment, next_level
from .pe import PrecisionMode
from .quant import quantization_rmse

STRATEGIES = ("speedup", "rmse")
MAX_EXHAUSTIVE = 10**6


@dataclass(frozen=True)
class LayerTensors:
    weights: np.ndarray
    activations: np.ndarray


@dataclass(frozen=True)
class SearchConstraint:
    strategy: str
    alpha: float | None = None
    beta: float | None = None
    top_k: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        bound, other = (self.alpha, self.beta) if self.strategy == "speedup" else (self.beta, self.alpha)
        if bound is None or other is not None:
            name = "alpha" if self.strategy == "speedup" else "beta"
            raise ValueError(f"strategy {self.strategy!r} takes exactly one bound: {name}")
        if not bound >= 1:
            raise ValueError(f"constraint must be >= 1, got {bound}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be positive, got {self.top_k}")

    @property
    def bound(self) -> float:
        return self.alpha if self.strategy == "speedup" else self.beta


@dataclass(frozen=True)
class DegradeStep:
    iteration: int
    layer: str
    field: str  # "w" or "a"
    from_bits: int
    to_bits: int
    total_latency_cycles: int
    total_rmse: float
    forced: bool = False


@dataclass
class SearchResult:
    strategy: str
    constraint: float
    top_k: int
    assignment: QuantAssignment
    layer_names: list[str]
    layer_cycles: list[int]
    layer_rmse: list[float]
    total_latency_cycles: int
    total_rmse: float
    baseline_latency_cycles: int
    baseline_rmse: float
    speedup_ratio: float
    rmse_ratio: float
    iterations: int = 0
    trace: list[DegradeStep] = field(default_factory=list)


def meets_speedup(alpha: float, latency: int, baseline_latency: int) -> bool:
    return alpha * latency <= baseline_latency


def meets_rmse(beta: float, total_rmse: float, baseline_rmse: float) -> bool:
    return total_rmse <= beta * baseline_rmse


def total_rmse(values) -> float:
    """Order-independent sum of per-layer RMSEs."""
    return math.fsum(values)


class MetricTable:
    """Per-layer latency and RMSE for every bitwidth pair, computed on demand.

    Weight RMSE depends only on the weight width and activation RMSE only on
    the activation width, so each tensor is quantized at most three times.
    """

    def __init__(self, model: ModelGraph, hw: HwConfig, tensors: Mapping[str, LayerTensors]):
        missing = [l.name for l in model.layers if l.name not in tensors]
        if missing:
            raise MissingTensorError(f"no tensors for layers: {', '.join(missing)}")
        self.model = model
        self.hw = hw
        self.tensors = tensors
        self._w: dict[tuple[int, int], float] = {}
        self._a: dict[tuple[int, int], float] = {}
        self._lat: dict[tuple[int, int, int], int] = {}

    def __len__(self):
        return len(self.model.layers)

    def weight_rmse(self, i: int, bits: int) -> float:
        if (i, bits) not in self._w:
            t = self.tensors[self.model.layers[i].name].weights
            self._w[i, bits] = quantization_rmse(t, FormatSpec(bits, signed=True))
        return self._w[i, bits]

    def activation_rmse(self, i: int, bits: int) -> float:
        if (i, bits) not in self._a:
            layer = self.model.layers[i]
            t = self.tensors[layer.name].activations
            self._a[i, bits] = quantization_rmse(t, FormatSpec(bits, signed=layer.activation_signed))
        return self._a[i, bits]

    def rmse(self, i: int, w_bits: int, a_bits: int) -> float:
        return self.weight_rmse(i, w_bits) + self.activation_rmse(i, a_bits)

    def latency(self, i: int, w_bits: int, a_bits: int) -> int:
        if (i, w_bits, a_bits) not in self._lat:
            shape = self.model.layers[i].shape
            self._lat[i, w_bits, a_bits] = layer_latency(shape, PrecisionMode(a_bits, w_bits), self.hw)[0]
        return self._lat[i, w_bits, a_bits]

    def layerwise(self, assign: QuantAssignment) -> list[tuple[int, float]]:
        return [(self.latency(i, w, a), self.rmse(i, w, a)) for i, (w, a) in enumerate(assign)]

    def totals(self, assign: QuantAssignment) -> tuple[int, float]:
        per = self.layerwise(assign)
        return sum(lat for lat, _ in per), total_rmse(r for _, r in per)


def layerwise_metrics(model: ModelGraph, assignment: QuantAssignment, hw: HwConfig,
                      tensors: Mapping[str, LayerTensors]) -> list[tuple[int, float]]:
    """(latency cycles, weight RMSE + activation RMSE) per layer."""
    return MetricTable(model, hw, tensors).layerwise(assignment)


def _result(table: MetricTable, constraint: SearchConstraint, assign: QuantAssignment,
            iterations: int, trace: list[DegradeStep]) -> SearchResult:
    base_lat, base_rmse = table.totals(QuantAssignment.uniform(len(table)))
    per = table.layerwise(assign)
    lat, rmse = sum(l for l, _ in per), total_rmse(r for _, r in per)
    return SearchResult(
        strategy=constraint.strategy,
        constraint=constraint.bound,
        top_k=constraint.top_k,
        assignment=assign,
        layer_names=[l.name for l in table.model.layers],
        layer_cycles=[l for l, _ in per],
        layer_rmse=[r for _, r in per],
        total_latency_cycles=lat,
        total_rmse=rmse,
        baseline_latency_cycles=base_lat,
        baseline_rmse=base_rmse,
        speedup_ratio=base_lat / lat,
        rmse_ratio=rmse / base_rmse if base_rmse else 1.0,
        iterations=iterations,
        trace=trace,
    )


class _Walk:
    """Mutable state of one greedy run."""

    def __init__(self, table: MetricTable, constraint: SearchConstraint):
        self.table = table
        self.c = constraint
        self.assign = QuantAssignment.uniform(len(table))
        self.base_lat, self.base_rmse = table.totals(self.assign)
        self.lat, self.rmse = self.base_lat, self.base_rmse
        self.trace: list[DegradeStep] = []
        self.iterations = 0

    def done(self) -> bool:
        return self.c.strategy == "speedup" and meets_speedup(self.c.alpha, self.lat, self.base_lat)

    def within_budget(self, rmse: float) -> bool:
        return self.c.strategy == "speedup" or meets_rmse(self.c.beta, rmse, self.base_rmse)

    def lowered(self, i: int, fld: str) -> QuantAssignment | None:
        w, a = self.assign[i]
        nxt = next_level(w if fld == "w" else a)
        if nxt is None:
            return None
        return self.assign.replace(i, w_bits=nxt) if fld == "w" else self.assign.replace(i, a_bits=nxt)

    def viable(self, i: int) -> bool:
        for fld in ("w", "a"):
            cand = self.lowered(i, fld)
            if cand is not None and self.within_budget(self.table.totals(cand)[1]):
                return True
        return False

    def commit(self, i: int, fld: str, cand: QuantAssignment, lat: int, rmse: float, forced: bool):
        before = self.assign[i][0 if fld == "w" else 1]
        after = cand[i][0 if fld == "w" else 1]
        self.assign, self.lat, self.rmse = cand, lat, rmse
        self.trace.append(DegradeStep(self.iterations, self.table.model.layers[i].name, fld,
                                      before, after, lat, rmse, forced))

    def degrade_pass(self, layer_list: list[int], strict: bool) -> int:
        """Lower weights, then activations, along ``layer_list``.

        Non-strict passes stop after the first committed step.
        """
        applied = 0
        for fld in ("w", "a"):
            for i in layer_list:
                cand = self.lowered(i, fld)
                if cand is None:
                    continue
                lat, rmse = self.table.totals(cand)
                gain = lat < self.lat if strict else lat <= self.lat
                if not gain or not self.within_budget(rmse):
                    continue
                self.commit(i, fld, cand, lat, rmse, forced=not strict)
                applied += 1
                if self.done() or not strict:
                    return applied
        return applied

    def iterate(self, layer_list: list[int]) -> int:
        self.iterations += 1
        return self.degrade_pass(layer_list, strict=True) or self.degrade_pass(layer_list, strict=False)


def _check_k(k: int, n: int):
    if not 1 <= k <= n:
        raise ValueError(f"top_k must be in [1, {n}], got {k}")


def search_speedup_constrained(model: ModelGraph, hw: HwConfig, tensors: Mapping[str, LayerTensors],
                               alpha: float, k: int, table: MetricTable | None = None) -> SearchResult:
    """Minimise total RMSE subject to ``alpha * latency <= baseline latency``."""
    constraint = SearchConstraint("speedup", alpha=alpha, top_k=k)
    table = table or MetricTable(model, hw, tensors)
    n = len(table)
    _check_k(k, n)
    walk = _Walk(table, constraint)
    floor_lat, _ = table.totals(QuantAssignment.uniform(n, 2, 2))
    if not meets_speedup(alpha, floor_lat, walk.base_lat):
        best = walk.base_lat / floor_lat
        raise InfeasibleError(f"speedup {alpha} unreachable; all-2/2 gives {best:.4f}", best)
    while not walk.done():
        per = table.layerwise(walk.assign)
        open_layers = [i for i in range(n) if walk.assign[i] != (2, 2)]
        top = sorted(open_layers, key=lambda i: (-per[i][0], i))[:k]
        if not walk.iterate(sorted(top, key=lambda i: (per[i][1], i))):
            # latency is monotone in bitwidth, so a neutral step always exists
            raise RuntimeError("speedup search stalled")
    return _result(table, constraint, walk.assign, walk.iterations, walk.trace)


def search_rmse_constrained(model: ModelGraph, hw: HwConfig, tensors: Mapping[str, LayerTensors],
                            beta: float, k: int, table: MetricTable | None = None) -> SearchResult:
    """Minimise total latency subject to ``rmse <= beta * baseline RMSE``."""
    constraint = SearchConstraint("rmse", beta=beta, top_k=k)
    table = table or MetricTable(model, hw, tensors)
    n = len(table)
    _check_k(k, n)
    walk = _Walk(table, constraint)
    while True:
        open_layers = [i for i in range(n) if walk.viable(i)]
        if not open_layers:
            break
        per = table.layerwise(walk.assign)
        top = sorted(open_layers, key=lambda i: (per[i][1], i))[:k]
        if not walk.iterate(sorted(top, key=lambda i: (-per[i][0], i))):
            break
    return _result(table, constraint, walk.assign, walk.iterations, walk.trace)


def search(model: ModelGraph, hw: HwConfig, tensors: Mapping[str, LayerTensors],
           constraint: SearchConstraint, table: MetricTable | None = None) -> SearchResult:
    if constraint.strategy == "speedup":
        return search_speedup_constrained(model, hw, tensors, constraint.alpha, constraint.top_k, table)
    return search_rmse_constrained(model, hw, tensors, constraint.beta, constraint.top_k, table)


PAIRS = tuple((w, a) for w in BIT_LEVELS for a in BIT_LEVELS)


def exhaustive_search(model: ModelGraph, hw: HwConfig, tensors: Mapping[str, LayerTensors],
                      constraint: SearchConstraint, table: MetricTable | None = None) -> SearchResult:
    """True optimum over all 9**N assignments, for small N."""
    table = table or MetricTable(model, hw, tensors)
    n = len(table)
    if len(PAIRS) ** n > MAX_EXHAUSTIVE:
        raise SearchSpaceError(f"9**{n} assignments exceed the {MAX_EXHAUSTIVE} limit")
    base_lat, base_rmse = table.totals(QuantAssignment.uniform(n))
    lat_opts = [[table.latency(i, w, a) for w, a in PAIRS] for i in range(n)]
    rmse_opts = [[table.rmse(i, w, a) for w, a in PAIRS] for i in range(n)]
    best, best_key = None, None
    for choice in itertools.product(range(len(PAIRS)), repeat=n):
        lat = sum(lat_opts[i][c] for i, c in enumerate(choice))
        rmse = total_rmse(rmse_opts[i][c] for i, c in enumerate(choice))
        if constraint.strategy == "speedup":
            if not meets_speedup(constraint.alpha, lat, base_lat):
                continue
            key = (rmse, lat)
        else:
            if not meets_rmse(constraint.beta, rmse, base_rmse):
                continue
            key = (lat, rmse)
        if best_key is None or key < best_key:
            best, best_key = choice, key
    if best is None:
        floor_lat = sum(min(opts) for opts in lat_opts)
        raise InfeasibleError(f"no assignment reaches speedup {constraint.alpha}", base_lat / floor_lat)
    assign = QuantAssignment(tuple(PAIRS[c] for c in best))
    return _result(table, constraint, assign, 0, [])
