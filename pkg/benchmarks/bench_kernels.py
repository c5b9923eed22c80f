"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--n 200000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from telescp import _accel, aes, kernels, rng


def cases(n):
    gen = np.random.default_rng(0)
    pts = gen.integers(0, 256, (n, 16), dtype=np.uint8)
    rk = aes.expand_key(bytes(range(16)))
    samples = gen.normal(size=(n, 1))
    key = rng.stream_key(1, rng.STREAM_NOISE)
    return {
        "aes_encrypt_batch": (
            lambda: kernels.aes_encrypt_batch_numpy(pts, rk),
            lambda: kernels.aes_encrypt_batch_numba(pts, rk),
        ),
        "normal_from_counter": (
            lambda: kernels.normal_from_counter_numpy(key, n, 1),
            lambda: kernels.normal_from_counter_numba(key, n, 1),
        ),
        "group_moments": (
            lambda: kernels.group_moments_numpy(pts, samples),
            lambda: kernels.group_moments_numba(pts, samples),
        ),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; pip install 'artifact[accel]'")
    print(f"{'kernel':<22}{'numpy s':>10}{'numba s':>10}{'speedup':>9}   (n={args.n}, best of {args.repeat})")
    for name, (slow, fast) in cases(args.n).items():
        fast()  # compile outside the timing
        t_np = min(timeit.repeat(slow, number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(fast, number=1, repeat=args.repeat))
        print(f"{name:<22}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
