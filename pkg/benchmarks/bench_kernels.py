"""Benchmark the numba kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Workloads mirror the pipeline's hot paths: resampling one-shots at kit
load, overlap-add mixing during rendering, and edit distance in the
name-based classifier.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from drumpipe import _kernels_numpy as np_impl

try:
    from drumpipe import _kernels_numba as nb_impl
except ImportError:
    nb_impl = None


def timeit(fn, repeats: int) -> float:
    fn()  # warmup (includes JIT compilation for the numba path)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_resample(impl):
    rng = np.random.default_rng(0)
    clips = [rng.standard_normal(int(44100 * d)) for d in (0.1, 0.25, 0.5, 1.0)]

    def run():
        for clip in clips:
            impl.resample_sinc(clip, 44100, 16000)
    return run


def bench_mix(impl):
    rng = np.random.default_rng(1)
    n_events = 400
    lengths = rng.integers(500, 8000, n_events).astype(np.int64)
    offsets = np.zeros(n_events, dtype=np.int64)
    np.cumsum(lengths[:-1], out=offsets[1:])
    data = rng.standard_normal(int(lengths.sum()))
    dests = rng.integers(0, 40000, n_events).astype(np.int64)
    gains = rng.uniform(0, 1, n_events)

    def run():
        out = np.zeros(40960)
        for _ in range(20):
            impl.mix_events(out, data, offsets, lengths, dests, gains)
    return run


def bench_levenshtein(impl):
    rng = np.random.default_rng(2)
    words = [rng.integers(97, 123, rng.integers(8, 24)).astype(np.int32)
             for _ in range(120)]

    def run():
        for a in words[:60]:
            for b in words[60:]:
                impl.levenshtein(a, b)
    return run


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    benches = [
        ("resample_sinc (4 clips, 44.1k->16k)", bench_resample),
        ("mix_events (400 events x 20 buffers)", bench_mix),
        ("levenshtein (3600 word pairs)", bench_levenshtein),
    ]

    print(f"{'kernel':<40} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    print("-" * 73)
    for name, make in benches:
        t_np = timeit(make(np_impl), args.repeats)
        if nb_impl is not None:
            t_nb = timeit(make(nb_impl), args.repeats)
            print(f"{name:<40} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
                  f"{t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<40} {t_np * 1e3:>8.2f}ms {'n/a':>10} {'':>9}")
    if nb_impl is None:
        print("\nnumba unavailable; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
