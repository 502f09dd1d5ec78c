"""Time the compiled kernels against their pure-python/numpy twins.

    python3 benchmarks/bench_kernels.py --npi 2000 --steps 50 --paths 4096 --m 2000

Prints one line per kernel with best-of-``--repeat`` wall times and the
speed-up. Results from both variants are compared before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from deadline_stop import kernels


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def lcp_case(npi: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    pi = np.linspace(0, 1, npi + 2)[1:-1]
    k = 0.5 * 4.0 * pi**2 * (1 - pi) ** 2 * (npi + 1) ** 2 * 5e-4
    lower, upper = -k.copy(), -k.copy()
    lower[0] = upper[-1] = 0.0
    diag = 1 + 2 * k
    obstacle = np.maximum(2 * pi - 1, 0.0)
    rhs = obstacle + 0.01 * rng.random(npi)
    return lower, diag, upper, rhs, obstacle


def bench_lcp(npi: int, steps: int, repeat: int) -> tuple[float, float]:
    lower, diag, upper, rhs, obstacle = lcp_case(npi)

    def run(thomas, psor):
        x = np.empty(npi)
        for _ in range(steps):
            thomas(lower, diag, upper, rhs, obstacle, x)
            psor(lower, diag, upper, rhs, obstacle, x, 1.5, 1e-10, 20000)
        return x

    a = run(kernels.projected_thomas, kernels.psor)
    b = run(kernels.projected_thomas_py, kernels.psor_py)
    assert np.allclose(a, b, atol=1e-12), "LCP kernels disagree"
    fast = _best(lambda: run(kernels.projected_thomas, kernels.psor), repeat)
    slow = _best(lambda: run(kernels.projected_thomas_py, kernels.psor_py), repeat)
    return fast, slow


def bench_passage(paths: int, m: int, repeat: int) -> tuple[float, float]:
    rng = np.random.default_rng(1)
    theta = (rng.random(paths) < 0.5).astype(np.int64)
    z = rng.standard_normal((paths, m))
    dt = 1.0 / m
    level = np.full(m, np.log(0.78 / 0.22))

    def run(fn):
        hit = np.empty(paths, dtype=np.int64)
        xh = np.empty(paths)
        fn(theta, z, dt, 2.0, -1.0, 0.0, level, hit, xh)
        return hit, xh

    h1, x1 = run(kernels.first_passage)
    h2, x2 = run(kernels.first_passage_py)
    assert np.array_equal(h1, h2) and np.allclose(x1, x2, atol=1e-9), "first-passage kernels disagree"
    return _best(lambda: run(kernels.first_passage), repeat), _best(lambda: run(kernels.first_passage_py), repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--npi", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--paths", type=int, default=4096)
    ap.add_argument("--m", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"numba available: {kernels.HAVE_NUMBA}")
    fast, slow = bench_lcp(args.npi, args.steps, args.repeat)
    print(f"lcp step x{args.steps} (npi={args.npi}): jit {fast:.4f}s  python {slow:.4f}s  speed-up {slow / fast:.1f}x")
    fast, slow = bench_passage(args.paths, args.m, args.repeat)
    print(f"first passage ({args.paths}x{args.m}): jit {fast:.4f}s  numpy {slow:.4f}s  speed-up {slow / fast:.1f}x")


if __name__ == "__main__":
    main()
