"""Modeled speedup of every W/A mode over 8W8A for one GEMM.

    python3 scripts/latency_scaling.py 4096 4096 4096 --array 16
"""

import argparse

from dybit.latency import HwConfig, layer_latency
from dybit.model import LayerShape
from dybit.pe import PrecisionMode, pe_throughput


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("m", type=int)
    p.add_argument("n", type=int)
    p.add_argument("k", type=int)
    p.add_argument("--array", type=int, default=16)
    p.add_argument("--buffer-kib", type=int, default=0, help="0 means unlimited")
    p.add_argument("--bandwidth", type=float, default=float("inf"), help="bytes per cycle")
    args = p.parse_args()
    buf = args.buffer_kib * 1024 if args.buffer_kib else 1 << 40
    hw = HwConfig(args.array, buf, buf, buf, args.bandwidth, 200.0)
    layer = LayerShape("gemm", args.m, args.n, args.k)
    base, _ = layer_latency(layer, PrecisionMode(8, 8), hw)
    print("mode   cycles        speedup  ceiling  tiling")
    for a in (8, 4, 2):
        for w in (8, 4, 2):
            mode = PrecisionMode(a, w)
            cycles, t = layer_latency(layer, mode, hw)
            print(f"{mode!s:<6} {cycles:<13d} {base / cycles:7.3f}  {pe_throughput(mode):7d}  "
                  f"{t.tile_m}x{t.tile_n}x{t.tile_k}")


if __name__ == "__main__":
    main()
