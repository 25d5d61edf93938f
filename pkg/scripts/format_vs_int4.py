"""DyBit-4 vs INT4 RMSE on synthetic Gaussian and Laplacian tensors.

Reports win rates and mean normalized RMSE against an affine (min/max) INT4
and, for context, a symmetric max-scaled INT4 with levels -7..7.
"""

import argparse

import numpy as np

from dybit.format import FormatSpec
from dybit.quant import affine_int_quantize, fake_quantize, rmse


def symmetric_int4(x):
    s = np.max(np.abs(x)) / 7
    return np.clip(np.round(x / s), -7, 7) * s


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--tensors", type=int, default=1000)
    p.add_argument("--elements", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    rng = np.random.default_rng(args.seed)
    spec = FormatSpec(4, signed=True)
    print("family     dybit4  int4_affine  int4_sym  win_vs_affine  win_vs_sym")
    for family in ("gaussian", "laplacian"):
        d, a, s = [], [], []
        for _ in range(args.tensors):
            x = rng.normal(size=args.elements) if family == "gaussian" else rng.laplace(size=args.elements)
            d.append(rmse(x, fake_quantize(x, spec)).rmse)
            a.append(rmse(x, affine_int_quantize(x, 4)).rmse)
            s.append(rmse(x, symmetric_int4(x)).rmse)
        d, a, s = map(np.array, (d, a, s))
        print(f"{family:<10} {d.mean():.4f}  {a.mean():.4f}       {s.mean():.4f}    "
              f"{np.mean(d < a):6.1%}         {np.mean(d < s):6.1%}")


if __name__ == "__main__":
    main()
