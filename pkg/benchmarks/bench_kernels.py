"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel with the best-of-``repeat`` time for each
backend and the speedup. Both backends get the same inputs; results are
checked for equality before timing.
"""

import argparse
import timeit

import numpy as np

from patcherizer import _kernels_py as py

try:
    from patcherizer import _kernels as cy
except ImportError:
    cy = None


def workloads(seed=0):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 20, 400).tolist()
    b = rng.integers(0, 20, 400).tolist()
    words = [rng.integers(0, 30, rng.integers(2, 12)).tolist() for _ in range(3000)]
    freqs = rng.integers(1, 50, len(words)).tolist()
    symbols = rng.integers(0, 30, 200).tolist()
    ranks = {(int(x), int(y)): (r, 100 + r) for r, (x, y) in enumerate(rng.integers(0, 30, (200, 2)))}
    return {
        "lcs_length (400 x 400)": ("lcs_length", (a, b)),
        "count_pairs (3000 words)": ("count_pairs", (words, freqs)),
        "merge_pair (3000 words)": ("merge_pair", (words, 3, 7, 99)),
        "apply_merges (200 symbols)": ("apply_merges", (symbols, ranks)),
    }


def best_time(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if cy is None:
        print("compiled kernels not built; only the Python fallback is available")
    print(f"{'kernel':30s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, (name, inputs) in workloads().items():
        t_py = best_time(getattr(py, name), inputs, args.repeat)
        if cy is None:
            print(f"{label:30s} {t_py * 1e3:10.3f} {'-':>10s} {'-':>8s}")
            continue
        if getattr(cy, name)(*inputs) != getattr(py, name)(*inputs):
            raise SystemExit(f"{name}: backends disagree")
        t_cy = best_time(getattr(cy, name), inputs, args.repeat)
        print(f"{label:30s} {t_py * 1e3:10.3f} {t_cy * 1e3:10.3f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
