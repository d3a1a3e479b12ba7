"""kNN timing harness: point counts as rows, neighbor counts as columns,
median milliseconds over repeats on a monotonic clock."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .geometry import knn_search

DEFAULT_SIZES = [10_000, 20_000, 40_000, 80_000]
DEFAULT_KS = [8, 16, 32, 64, 128, 256]


@dataclass
class BenchResult:
    sizes: list[int]
    ks: list[int]
    # median milliseconds per (size, k) cell; NaN marks a skipped cell
    medians_ms: np.ndarray
    repeats: int
    notes: list[str]


def run_knn_bench(sizes=None, ks=None, repeats: int = 5, seed: int = 0,
                  verbose: bool = False) -> BenchResult:
    sizes = list(sizes or DEFAULT_SIZES)
    ks = list(ks or DEFAULT_KS)
    if any(s < 1 for s in sizes) or any(k < 1 for k in ks) or repeats < 1:
        raise ValueError("sizes, ks and repeats must be positive")
    rng = np.random.default_rng(seed)
    # Warm the compiled kernel so JIT time never lands in a measurement.
    warm = rng.random((256, 3))
    knn_search(warm, warm, min(min(ks), 256))
    medians = np.full((len(sizes), len(ks)), np.nan)
    notes = []
    for i, n in enumerate(sizes):
        try:
            pts = rng.random((n, 3))
        except MemoryError:
            notes.append(f"n={n}: skipped (out of memory)")
            continue
        for j, k in enumerate(ks):
            if k > n:
                notes.append(f"n={n} k={k}: skipped (k exceeds point count)")
                continue
            try:
                times = []
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    knn_search(pts, pts, k)
                    times.append((time.perf_counter() - t0) * 1000.0)
                medians[i, j] = statistics.median(times)
            except MemoryError:
                notes.append(f"n={n} k={k}: skipped (out of memory)")
            if verbose:
                print(f"  n={n:>7} k={k:>4}: {medians[i, j]:10.2f} ms")
    return BenchResult(sizes=sizes, ks=ks, medians_ms=medians, repeats=repeats, notes=notes)


def format_table(result: BenchResult) -> str:
    header = "#pts".rjust(8) + "".join(f"k={k}".rjust(12) for k in result.ks)
    lines = [header]
    for i, n in enumerate(result.sizes):
        cells = "".join(
            ("-".rjust(12) if np.isnan(v) else f"{v:12.2f}")
            for v in result.medians_ms[i]
        )
        lines.append(f"{n:>8}" + cells)
    return "\n".join(lines)


def to_csv(result: BenchResult) -> str:
    lines = ["n_points," + ",".join(f"k{k}" for k in result.ks)]
    for i, n in enumerate(result.sizes):
        cells = ",".join("" if np.isnan(v) else f"{v:.4f}" for v in result.medians_ms[i])
        lines.append(f"{n},{cells}")
    return "\n".join(lines) + "\n"
