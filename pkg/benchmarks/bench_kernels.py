"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from gbrip import _kernels_py

try:
    from gbrip import _kernels as compiled
except ImportError:
    compiled = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    X = rng.normal(size=(2000, 16))
    yield "farthest_pairs n=2000 d=16", lambda k: k.farthest_pairs(X)
    c0, c1 = X[0].copy(), X[1].copy()
    yield "lloyd2 n=2000 d=16", lambda k: k.lloyd2(X, c0, c1, 100)
    problems = []
    for _ in range(500):
        A = rng.normal(size=(8, 16))
        problems.append((A @ A.T, A @ rng.normal(size=16)))
    yield "nnls_gram 500 x (k=8)", lambda k: [k.nnls_gram(G, b, 80, 1e-8) for G, b in problems]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if compiled is None:
        print("compiled extension not built; only the fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<30} {'python':>10} {'cython':>10} {'speedup':>8}")
    for name, call in cases(rng):
        t_py = best_of(lambda: call(_kernels_py), args.repeat)
        if compiled is None:
            print(f"{name:<30} {t_py * 1e3:9.2f}ms {'-':>10} {'-':>8}")
            continue
        t_c = best_of(lambda: call(compiled), args.repeat)
        print(f"{name:<30} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
