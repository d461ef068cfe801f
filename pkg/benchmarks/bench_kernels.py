"""Time the numba kernels against their numpy twins on pipeline-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

The first numba call of each kernel includes JIT compilation (or a cache
load); it is reported separately and excluded from the timings.
"""

import argparse
import time

import numpy as np

from sslseg import kernels
from sslseg.gbdt import GbdtConfig, fit_gbdt, quantize


def _cases(rng):
    a = rng.normal(size=(270, 270))
    cov = a @ a.T / 270
    x = rng.normal(size=(150_000, 116))
    y = rng.integers(0, 4, size=x.shape[0])
    bins, edges = quantize(x, 64)
    grad = rng.normal(size=x.shape[0])
    hess = rng.uniform(0.05, 0.25, size=x.shape[0])
    rows = np.flatnonzero(rng.random(x.shape[0]) < 0.8).astype(np.int64)
    hist = kernels.numpy_impl.build_histogram(bins, rows, grad, hess, 64)
    bpf = np.array([len(e) + 1 for e in edges], dtype=np.int64)
    g, h = float(grad[rows].sum()), float(hess[rows].sum())
    ens = fit_gbdt(x[:20_000], y[:20_000], GbdtConfig(num_rounds=10))
    flat = ens.flattened()
    x_pred = rng.normal(size=(224 * 224, 116))

    def margins(impl):
        out = np.zeros((x_pred.shape[0], 4))
        impl.predict_margins(x_pred, *flat, ens.learning_rate, out)
        return out

    return {
        "jacobi_eigh 270x270": lambda impl: impl.jacobi_eigh(cov.copy(), 1e-15, 100),
        "build_histogram 120k x 116": lambda impl: impl.build_histogram(bins, rows, grad, hess, 64),
        "best_split 116 x 64": lambda impl: impl.best_split(hist, bpf, g, h, 1.0, 1.0),
        "predict_margins 50k x 40 trees": margins,
    }


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if kernels.numba_impl is None:
        print("numba is not installed; nothing to compare")
        return 1
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':34s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s} {'first call':>11s}")
    for name, fn in cases.items():
        t0 = time.perf_counter()
        fn(kernels.numba_impl)
        warm = time.perf_counter() - t0
        t_np = _best_of(lambda: fn(kernels.numpy_impl), args.repeat)
        t_nb = _best_of(lambda: fn(kernels.numba_impl), args.repeat)
        print(f"{name:34s} {t_np * 1e3:9.1f}ms {t_nb * 1e3:9.1f}ms {t_np / t_nb:7.1f}x {warm:10.2f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
