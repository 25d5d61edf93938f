"""``dybit`` command line: value tables, quantization, latency simulation, search.

Exit codes: 0 success, 1 runtime or capacity failure, 2 usage error,
3 infeasible search constraint.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CapacityError, DyBitError, InfeasibleError
from .format import FormatSpec, decode
from .io import (
    load_hw_config,
    load_layer_tensors,
    load_manifest,
    load_model,
    save_quantized,
    save_report,
    save_rows,
    save_trace,
)
from .latency import model_latency
from .model import QuantAssignment
from .pe import SUPPORTED_WIDTHS
from .quant import compute_scale, quantization_rmse, quantize_tensor
from .search import MetricTable, SearchConstraint, search

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2, 3


def _fmt(v: float) -> str:
    return str(int(v)) if v == int(v) else repr(v)


def cmd_table(args) -> int:
    spec = FormatSpec(args.bits, signed=args.signed)
    print(f"# {spec}")
    for code in range(spec.n_codes):
        print(f"{code:0{spec.total_bits}b}\t{_fmt(decode(code, spec))}")
    return EXIT_OK


def _load_inputs(args, need_tensors: bool):
    manifest = load_manifest(args.tensors) if getattr(args, "tensors", None) else None
    model = load_model(args.model, manifest)
    tensors = None
    if need_tensors:
        if manifest is None:
            raise DyBitError("--tensors is required")
        tensors = load_layer_tensors(model, manifest)
    return model, tensors


def cmd_quantize(args) -> int:
    model, tensors = _load_inputs(args, need_tensors=True)
    out = Path(args.out)
    rows = []
    for layer in model.layers:
        t = tensors[layer.name]
        specs = {"w": FormatSpec(args.wbits, signed=True), "a": FormatSpec(args.abits, signed=layer.activation_signed)}
        arrays = {"w": t.weights, "a": t.activations}
        for key, spec in specs.items():
            q = quantize_tensor(arrays[key], spec, compute_scale(arrays[key], spec))
            save_quantized(q, out / "quantized" / f"{layer.name}.{key}")
        w_rmse = quantization_rmse(t.weights, specs["w"])
        a_rmse = quantization_rmse(t.activations, specs["a"])
        ref = (quantization_rmse(t.weights, FormatSpec(8, signed=True))
               + quantization_rmse(t.activations, FormatSpec(8, signed=layer.activation_signed)))
        rmse = w_rmse + a_rmse
        rows.append({"name": layer.name, "w_bits": args.wbits, "a_bits": args.abits, "w_rmse": w_rmse,
                     "a_rmse": a_rmse, "rmse": rmse, "rmse_8w8a": ref, "rmse_ratio": rmse / ref if ref else 1.0})
    save_rows(rows, list(rows[0]), out / "rmse.csv")
    if not args.quiet:
        for r in rows:
            print(f"{r['name']:<24} {args.wbits}W{args.abits}A  rmse {r['rmse']:.6f}  ratio {r['rmse_ratio']:.4f}")
    return EXIT_OK


def parse_assignment(text: str, n_layers: int, names: list[str]) -> QuantAssignment:
    """``W/A`` shorthand for a uniform assignment, or a JSON file.

    The file holds either ``{"assignment": [[w, a], ...]}`` or a search
    report whose ``layers`` carry ``w_bits``/``a_bits``.
    """
    if "/" in text and not Path(text).exists():
        w, a = (int(p) for p in text.split("/"))
        return QuantAssignment.uniform(n_layers, w, a)
    with open(text, encoding="utf-8") as f:
        doc = json.load(f)
    if "assignment" in doc:
        pairs = [tuple(p) for p in doc["assignment"]]
    else:
        by_name = {l["name"]: (l["w_bits"], l["a_bits"]) for l in doc["layers"]}
        missing = [n for n in names if n not in by_name]
        if missing:
            raise DyBitError(f"assignment has no entry for layers {missing}")
        pairs = [by_name[n] for n in names]
    if len(pairs) != n_layers:
        raise DyBitError(f"assignment covers {len(pairs)} layers, model has {n_layers}")
    return QuantAssignment(tuple(pairs))


def cmd_simulate(args) -> int:
    model, _ = _load_inputs(args, need_tensors=False)
    hw = load_hw_config(args.hw)
    names = [l.name for l in model.layers]
    assign = parse_assignment(args.assign, len(model), names)
    report = model_latency(model, assign, hw)
    base = model_latency(model, QuantAssignment.uniform(len(model)), hw)
    if args.out:
        out = Path(args.out)
        save_report(report, out / "latency.json")
        save_report(report, out / "latency.csv")
    if not args.quiet:
        for name in names:
            m = report.mode_per_layer[name]
            print(f"{name:<24} {m.w_bits}W{m.a_bits}A  {report.per_layer_cycles[name]:>12} cycles")
    print(f"total {report.total_cycles} cycles ({report.microseconds(hw):.3f} us); "
          f"speedup vs 8W8A {base.total_cycles / report.total_cycles:.4f}x")
    return EXIT_OK


def cmd_search(args) -> int:
    try:
        constraint = SearchConstraint(args.strategy, alpha=args.alpha, beta=args.beta, top_k=args.topk)
    except ValueError as exc:
        args.parser.error(str(exc))
    model, tensors = _load_inputs(args, need_tensors=True)
    hw = load_hw_config(args.hw)
    if constraint.top_k > len(model):
        args.parser.error(f"--topk {constraint.top_k} exceeds the {len(model)} model layers")
    result = search(model, hw, tensors, constraint, MetricTable(model, hw, tensors))
    out = Path(args.out)
    save_report(result, out / "result.json")
    save_report(result, out / "result.csv")
    save_trace(result, out / "trace.csv")
    if not args.quiet:
        print(result.assignment.label())
    print(f"speedup {result.speedup_ratio:.4f}x  rmse ratio {result.rmse_ratio:.4f}  "
          f"{len(result.trace)} degrade steps in {result.iterations} iterations")
    return EXIT_OK


def _bits(text: str) -> int:
    v = int(text)
    if v not in SUPPORTED_WIDTHS:
        raise argparse.ArgumentTypeError(f"must be one of {SUPPORTED_WIDTHS}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dybit", description=__doc__.splitlines()[0])
    p.add_argument("-q", "--quiet", action="store_true", help="print only the summary line")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("table", help="print every code of a DyBit format with its value")
    t.add_argument("--bits", type=int, required=True, choices=range(2, 9), metavar="N", help="total width, 2..8")
    sign = t.add_mutually_exclusive_group()
    sign.add_argument("--signed", action="store_true")
    sign.add_argument("--unsigned", dest="signed", action="store_false")
    t.set_defaults(func=cmd_table)

    q = sub.add_parser("quantize", help="quantize every layer at one W/A setting")
    q.add_argument("--model", required=True)
    q.add_argument("--tensors", required=True, help="tensor manifest")
    q.add_argument("--wbits", type=_bits, required=True)
    q.add_argument("--abits", type=_bits, required=True)
    q.add_argument("--out", required=True, help="output directory")
    q.set_defaults(func=cmd_quantize)

    s = sub.add_parser("simulate", help="latency of a bitwidth assignment")
    s.add_argument("--model", required=True)
    s.add_argument("--hw", required=True)
    s.add_argument("--assign", required=True, help="'W/A' for all layers, or a JSON assignment / search report")
    s.add_argument("--out", help="directory for latency.json and latency.csv")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("search", help="mixed-precision search under a speedup or RMSE constraint")
    r.add_argument("--model", required=True)
    r.add_argument("--hw", required=True)
    r.add_argument("--tensors", required=True, help="tensor manifest")
    r.add_argument("--strategy", choices=("speedup", "rmse"), required=True)
    r.add_argument("--alpha", type=float, help="speedup target (strategy speedup)")
    r.add_argument("--beta", type=float, help="RMSE budget multiplier (strategy rmse)")
    r.add_argument("--topk", type=int, default=1)
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_search, parser=r)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc} (best achievable speedup {exc.best_ratio:.4f}x)", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CapacityError as exc:
        print(f"capacity error in layer {exc.layer}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (DyBitError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
