"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the median time per call for each backend
and the speed-up.  Both backends see identical inputs and their outputs are
compared before timing.
"""

import argparse
import statistics
import time

import numpy as np

from structseq import kernels


def _cases(rng):
    K, M, D = 6, 40, 8
    emit = rng.normal(size=(M, K))
    trans = rng.normal(size=(K, K))
    x = rng.normal(size=(M, D))
    y = rng.integers(0, K, M).astype(np.int64)
    a = rng.integers(0, K, 30).astype(np.int64)
    b = rng.integers(0, K, 30).astype(np.int64)
    return {
        "viterbi K=6 M=40": (lambda be: be.viterbi(emit, trans)),
        "edit_distance 30x30": (lambda be: be.edit_distance(a, b)),
        "psi_first_order D=8 K=6 M=40": (lambda be: be.psi_first_order(x, y, K)),
    }


def _same(u, v):
    if isinstance(u, tuple):
        return all(_same(p, q) for p, q in zip(u, v))
    return np.array_equal(np.asarray(u), np.asarray(v))


def _median_time(fn, repeat, inner):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        times.append((time.perf_counter() - t0) / inner)
    return statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--inner", type=int, default=200)
    args = ap.parse_args(argv)

    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1

    print(f"{'kernel':32s} {'python':>12s} {'cython':>12s} {'speed-up':>9s}")
    for name, call in _cases(np.random.default_rng(0)).items():
        if not _same(call(py), call(cy)):
            print(f"{name}: backends disagree")
            return 1
        tp = _median_time(lambda: call(py), args.repeat, args.inner)
        tc = _median_time(lambda: call(cy), args.repeat, args.inner)
        print(f"{name:32s} {tp * 1e6:10.1f}us {tc * 1e6:10.1f}us {tp / tc:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
