"""Compare the compiled and numpy target-generation kernels.

    python3 benchmarks/bench_backends.py [--N 20000] [--Nh 64 256] [--trials 3]

Checks that both kernels pick the same winners, then prints the best wall
time of each and the speed-up.
"""

import argparse

import numpy as np

from epls import _backend
from epls.cli import time_generate_target
from epls.target import generate_target, new_inhibitor


def same_winners(cython, python, n, n_outputs, mode, seed=0):
    H = np.random.default_rng(seed).random((n, n_outputs))
    a, _ = generate_target(H, new_inhibitor(n, n_outputs, mode=mode), cython)
    b, _ = generate_target(H, new_inhibitor(n, n_outputs, mode=mode), python)
    return np.array_equal(a, b)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--N", type=int, default=20_000)
    parser.add_argument("--Nh", type=int, nargs="+", default=[16, 64, 256])
    parser.add_argument("--trials", type=int, default=3)
    parser.add_argument("--mode", choices=["soft", "strict"], default="soft")
    args = parser.parse_args()

    python = _backend.load("python")
    try:
        cython = _backend.load("cython")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")

    print(f"{'N':>8} {'N_h':>5} {'cython s':>10} {'python s':>10} {'speed-up':>9} {'agree':>6}")
    for n_outputs in args.Nh:
        agree = same_winners(cython, python, min(args.N, 4096), n_outputs, args.mode)
        tc = time_generate_target(args.N, n_outputs, args.trials, args.mode, cython)
        tp = time_generate_target(args.N, n_outputs, args.trials, args.mode, python)
        print(f"{args.N:>8} {n_outputs:>5} {tc:>10.4f} {tp:>10.4f} {tp / tc:>9.1f} {str(agree):>6}")


if __name__ == "__main__":
    main()
