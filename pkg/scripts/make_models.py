"""Write model bundles (descriptor, tensors, hardware config) for the CLI.

    python3 scripts/make_models.py toy data/toy
    python3 scripts/make_models.py resnet18 /tmp/resnet18
"""

import argparse

import numpy as np

from dybit.model import LayerShape, ModelGraph
from dybit.zoo import conv_gemm, default_hw, resnet18_shapes, synthetic_tensors, write_bundle

TOY_SHAPES = [
    conv_gemm("conv1", 16, 32, 3, 14),
    conv_gemm("conv2", 32, 64, 3, 7),
    LayerShape("fc", 1, 10, 64 * 7 * 7 // 16),
]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("model", choices=("toy", "resnet18"))
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--act-samples", type=int, default=1024)
    args = p.parse_args()
    shapes = TOY_SHAPES if args.model == "toy" else resnet18_shapes()
    model = ModelGraph.from_shapes(args.model, shapes)
    tensors = synthetic_tensors(model, np.random.default_rng(args.seed), args.act_samples)
    write_bundle(args.out, model, tensors, default_hw())
    print(f"wrote {len(model)} layers to {args.out}")


if __name__ == "__main__":
    main()
