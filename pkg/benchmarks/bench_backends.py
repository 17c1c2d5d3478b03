"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs each hot kernel in both implementations on representative shapes and
prints a timing table. Usage:

    python benchmarks/bench_backends.py

(IMPORTANT: imports both implementations directly, so the INRSTORE_BACKEND
env flag does not matter here.)
"""

import time

import numpy as np

from inrstore.backend import HAS_NUMBA
from inrstore.kernels import numpy_impl

if HAS_NUMBA:
    from inrstore.kernels import numba_impl
else:
    numba_impl = None
    print("numba not available; showing numpy timings only\n")

rng = np.random.default_rng(0)

B, K, F = 8192, 2**19, 2
table = rng.normal(size=(K, F)).astype(np.float32)
idx = rng.integers(0, K, size=(B, 8)).astype(np.int64)
w = rng.uniform(size=(B, 8)).astype(np.float32)
gout = rng.normal(size=(B, F)).astype(np.float32)

C, D = 8, 32
vol = rng.normal(size=(C, D, D, D)).astype(np.float32)
kern = rng.normal(size=(2 * C, C, 2, 2, 2)).astype(np.float32)
bias = rng.normal(size=2 * C).astype(np.float32)
gconv = rng.normal(size=(2 * C, D // 2, D // 2, D // 2)).astype(np.float32)

P = rng.uniform(-1, 1, size=(4096, 3)).astype(np.float32)
Q = rng.uniform(-1, 1, size=(4096, 3)).astype(np.float32)

param = rng.normal(size=2**21).astype(np.float32)
grad = rng.normal(size=2**21).astype(np.float32)


def bench(label, fn, reps=5):
    fn()  # warm up (numba compiles here)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


CASES = [
    ("gather_rows (8192x8 of 2^19)", lambda impl: impl.gather_rows(table, idx, w)),
    (
        "scatter_rows",
        lambda impl: impl.scatter_rows(np.zeros_like(table), idx, w, gout),
    ),
    ("conv3d_down fwd (8ch 32^3)", lambda impl: impl.conv3d_down_forward(vol, kern, bias)),
    (
        "conv3d_down bwd",
        lambda impl: impl.conv3d_down_backward(vol, kern, gconv),
    ),
    ("nn_min_dists (4096 vs 4096)", lambda impl: impl.nn_min_dists(P, Q)),
    (
        "adam_update (2M params)",
        lambda impl: impl.adam_update(
            param.copy(), grad, np.zeros_like(param), np.zeros_like(param),
            1e-3, 0.9, 0.999, 1e-8, 1, 0.0,
        ),
    ),
]


def main():
    print(f"{'kernel':36s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for label, call in CASES:
        t_np = bench(label, lambda: call(numpy_impl))
        if numba_impl is not None:
            t_nb = bench(label, lambda: call(numba_impl))
            print(f"{label:36s} {t_np*1e3:9.2f}ms {t_nb*1e3:9.2f}ms {t_np/t_nb:7.1f}x")
        else:
            print(f"{label:36s} {t_np*1e3:9.2f}ms {'-':>10s} {'-':>8s}")


if __name__ == "__main__":
    main()
