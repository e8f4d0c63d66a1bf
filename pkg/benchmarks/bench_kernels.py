"""Compare the compiled kernels against the numpy fallback.

Times the three hot kernels on representative shapes and checks that both
backends return identical bits before trusting the numbers.

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from fedinc import _kernels, _kernels_py
from fedinc.seeds import rng_for

try:
    from fedinc import _speedups
except ImportError:
    _speedups = None


def timed(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_case(name, py_fn, ext_fn, repeats, same):
    py_t, py_out = timed(py_fn, repeats)
    if ext_fn is None:
        print(f"{name:32s} numpy {py_t * 1e3:9.2f} ms   (no extension)")
        return
    ext_t, ext_out = timed(ext_fn, repeats)
    same(py_out, ext_out)
    speedup = py_t / ext_t if ext_t > 0 else float("inf")
    print(f"{name:32s} numpy {py_t * 1e3:9.2f} ms   cython {ext_t * 1e3:9.2f} ms"
          f"   x{speedup:5.1f}   bits agree")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"active backend: {_kernels.BACKEND}")
    rng = rng_for(0, "bench")

    # randomized rounding, figure scale: K=5000 users, 9 edges, 200 trials
    k, m1, trials = 5000, 10, 200
    frac = rng.dirichlet(np.full(m1, 0.5), size=k)
    cum = np.cumsum(frac, axis=1)
    cum[:, -1] = 1.0
    uniforms = rng.random((trials, k))
    unit = rng.uniform(0.1, 1.0, m1)
    bk_unit = np.concatenate([[0.0], rng.uniform(0.1, 2.0, m1 - 1)])
    bk_cap = bk_unit.copy()

    def same_rounding(a, b):
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    bench_case(
        f"round_and_eval K={k} x{trials}",
        lambda: _kernels_py.round_and_eval(cum, uniforms, unit, bk_unit, bk_cap, True),
        (lambda: _speedups.round_and_eval(cum, uniforms, unit, bk_unit, bk_cap, True))
        if _speedups else None,
        args.repeats, same_rounding)

    # batch evaluation of fixed assignments
    choices = rng.integers(0, m1, size=(2000, 500)).astype(np.int64)
    bench_case(
        "assignment_uplink_batch 2000x500",
        lambda: _kernels_py.assignment_uplink_batch(choices, unit, bk_unit, bk_cap),
        (lambda: _speedups.assignment_uplink_batch(choices, unit, bk_unit, bk_cap))
        if _speedups else None,
        args.repeats,
        lambda a, b: np.testing.assert_array_equal(a, b))

    # exhaustive search, 3^12 assignments
    k_en, m1_en = 12, 3
    unit_en = rng.uniform(0.5, 1.5, m1_en)
    bk_en = np.concatenate([[0.0], rng.uniform(0.5, 1.5, m1_en - 1)])
    cand = np.tile(np.arange(m1_en, dtype=np.int64), (k_en, 1))
    cand_len = np.full(k_en, m1_en, dtype=np.int64)

    def same_enum(a, b):
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1]

    bench_case(
        f"enumerate_best {m1_en}^{k_en}",
        lambda: _kernels_py.enumerate_best(cand, cand_len, unit_en, bk_en, bk_en),
        (lambda: _speedups.enumerate_best(cand, cand_len, unit_en, bk_en, bk_en))
        if _speedups else None,
        args.repeats, same_enum)


if __name__ == "__main__":
    main()
