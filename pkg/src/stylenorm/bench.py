"""Timing of the adaptive-convolution fast path against the loop oracle."""
from __future__ import annotations

import csv
import time
from dataclasses import astuple, dataclass, fields

import numpy as np

from .injectors import AdaptiveKernel, adaptive_conv
from .normalizers import standardize_local
from .reference import patch_conv_loop


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchResult:
    op_name: str
    shape: str
    kernel: int
    repetitions: int
    median_ns: int
    p95_ns: int
    oracle_ns: int
    checksum: str


def checksum(x: np.ndarray) -> str:
    """Sum of the output rounded to 9 significant digits."""
    return f"{float(np.sum(x)):.9g}"


def parse_shapes(text: str) -> list[tuple[int, int, int, int]]:
    shapes = []
    for item in text.split(","):
        dims = tuple(int(d) for d in item.lower().split("x"))
        if len(dims) != 4 or min(dims) < 1:
            raise ValueError(f"shape {item!r} must be NxCxHxW with positive dims")
        shapes.append(dims)
    return shapes


def bench_one(shape, k: int, reps: int, seed: int = 0, warmup: int = 3) -> BenchResult:
    rng = np.random.default_rng([seed, *shape, k])
    n, c, h, w = shape
    patches = standardize_local(rng.standard_normal(shape), k, k)
    kern = AdaptiveKernel(rng.standard_normal((c, c, k, k)), rng.standard_normal(c))

    fast = adaptive_conv(patches, kern)
    t0 = time.perf_counter_ns()
    slow = patch_conv_loop(patches.patches, kern.weights, kern.bias)
    oracle_ns = time.perf_counter_ns() - t0
    if not np.allclose(fast, slow, rtol=0.0, atol=1e-10):
        raise BenchError(f"fast path disagrees with oracle for shape {shape}, k={k}")
    if checksum(fast) != checksum(slow):
        raise BenchError(f"checksum mismatch for shape {shape}, k={k}")

    for _ in range(warmup):
        adaptive_conv(patches, kern)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        adaptive_conv(patches, kern)
        times.append(time.perf_counter_ns() - t0)
    return BenchResult("adaptive_conv", "x".join(map(str, shape)), k, reps,
                       int(np.median(times)), int(np.percentile(times, 95)), oracle_ns, checksum(fast))


def run_bench(shapes, kernels, reps: int = 30, seed: int = 0) -> list[BenchResult]:
    return [bench_one(s, k, reps, seed) for s in shapes for k in kernels]


def write_csv(results: list[BenchResult], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([f.name for f in fields(BenchResult)])
    for r in results:
        writer.writerow(astuple(r))
