"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import importlib
import timeit

import numpy as np


def cases(rng):
    x = rng.standard_normal((128, 16, 32, 32)).astype(np.float32)
    oh = ow = 32
    cols = rng.standard_normal((128 * oh * ow, 16 * 9)).astype(np.float32)
    x3 = x.reshape(128, 16, -1)
    mean, var = np.zeros(16, np.float32), np.ones(16, np.float32)
    gamma, beta = np.ones(16, np.float32), np.zeros(16, np.float32)
    pooled, arg = None, None

    def setup(k):
        nonlocal pooled, arg
        pooled, arg = k.maxpool_forward(x, 2, 2)

    return {
        "im2col 3x3": lambda k: k.im2col(x, 3, 3, 1, 1, oh, ow),
        "col2im 3x3": lambda k: k.col2im(cols, 128, 16, 32, 32, 3, 3, 1, 1, oh, ow),
        "maxpool fwd": lambda k: k.maxpool_forward(x, 2, 2),
        "maxpool bwd": lambda k: (setup(k), k.maxpool_backward(pooled, arg, 32, 32, 2, 2)),
        "bn stats": lambda k: k.bn_stats(x3),
        "bn fwd": lambda k: k.bn_forward(x3, mean, var, gamma, beta),
        "bn bwd": lambda k: k.bn_backward(x3, x3, gamma, var, True),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=10)
    args = parser.parse_args()
    backends = {"python": importlib.import_module("ampgrad._kernels_py")}
    try:
        backends["cython"] = importlib.import_module("ampgrad._kernels")
    except ImportError:
        print("compiled kernels not built; showing the fallback only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}" + "".join(f"{name:>12}" for name in backends) + "     speedup")
    for name, fn in cases(rng).items():
        times = {}
        for bname, mod in backends.items():
            fn(mod)
            times[bname] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{name:<14}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
