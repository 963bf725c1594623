"""Time the hot kernels under the numba and pure-numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are loaded side by side, so ``SDBIAS_DISABLE_NUMBA`` does not
matter here. numba compile time is excluded by a warm-up call.
"""

import argparse
import time

import numpy as np

from sdbias.numerics.kernels import load_backend


def cases(rng):
    x = rng.standard_normal((32, 8, 16, 16, 8)).astype(np.float32)
    w = (0.1 * rng.standard_normal((3, 3, 3, 8, 16))).astype(np.float32)
    b = np.zeros(16, dtype=np.float32)
    dout = rng.standard_normal((32, 8, 16, 16, 16)).astype(np.float32)
    za, zb = rng.standard_normal((2, 256, 64))
    p = rng.random((32, 64))
    p /= p.sum(axis=1, keepdims=True)
    u = rng.random((32, 32))

    def corr(k):
        z = np.zeros(64)
        return k.corr_update(za, zb, 0, z.copy(), z.copy(), z.copy(), z.copy(), z.copy())

    return {
        "conv_forward": lambda k: k.conv_forward(x, w, b),
        "conv_backward": lambda k: k.conv_backward(dout, x, w),
        "corr_update": corr,
        "weighted_sample": lambda k: k.weighted_sample_without_replacement(p, 32, u),
    }


def best_time(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = {name: load_backend(name) for name in ("numpy", "numba")}
    print(f"{'kernel':<18}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, fn in cases(np.random.default_rng(0)).items():
        t = {b: best_time(lambda: fn(k), args.repeat) for b, k in backends.items()}
        print(f"{name:<18}{1e3 * t['numpy']:>12.2f}{1e3 * t['numba']:>12.2f}{t['numpy'] / t['numba']:>9.2f}x")


if __name__ == "__main__":
    main()
