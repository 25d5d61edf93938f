"""Speedup/RMSE trade-off: sweep alpha (speedup strategy) or beta (rmse strategy).

    python3 scripts/tradeoff_sweep.py data/toy --strategy speedup --bounds 1 1.5 2 3 4 6
    python3 scripts/tradeoff_sweep.py /tmp/resnet18 --strategy rmse --bounds 1 1.5 2 4 --out sweep.csv
"""

import argparse
from pathlib import Path

from dybit.errors import InfeasibleError
from dybit.io import load_hw_config, load_layer_tensors, load_manifest, load_model, save_rows
from dybit.search import MetricTable, SearchConstraint, search


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("bundle", help="directory with model.json, hw.json and tensors/manifest.json")
    p.add_argument("--strategy", choices=("speedup", "rmse"), default="speedup")
    p.add_argument("--bounds", type=float, nargs="+", default=[1, 2, 4, 8])
    p.add_argument("--topk", type=int, default=2)
    p.add_argument("--out", help="CSV output path")
    args = p.parse_args()
    root = Path(args.bundle)
    manifest = load_manifest(root / "tensors" / "manifest.json")
    model = load_model(root / "model.json", manifest)
    hw = load_hw_config(root / "hw.json")
    tensors = load_layer_tensors(model, manifest)
    table = MetricTable(model, hw, tensors)
    rows = []
    for bound in args.bounds:
        key = "alpha" if args.strategy == "speedup" else "beta"
        try:
            r = search(model, hw, tensors, SearchConstraint(args.strategy, top_k=args.topk, **{key: bound}), table)
        except InfeasibleError as exc:
            print(f"{key}={bound}: infeasible (best {exc.best_ratio:.3f}x)")
            continue
        rows.append({key: bound, "speedup": r.speedup_ratio, "rmse_ratio": r.rmse_ratio,
                     "steps": len(r.trace), "assignment": r.assignment.label()})
        print(f"{key}={bound:<6} speedup {r.speedup_ratio:7.3f}x  rmse ratio {r.rmse_ratio:7.3f}  {r.assignment.label()}")
    if args.out and rows:
        save_rows(rows, list(rows[0]), args.out)


if __name__ == "__main__":
    main()
