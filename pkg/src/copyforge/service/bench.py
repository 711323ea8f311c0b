"""Latency and throughput benchmarking.

Runs a workload of request callables under a thread pool and summarizes
wall-clock latencies, or summarizes an injected latency sample directly for
deterministic tests. TP-99 is the nearest-rank percentile: the
ceil(0.99 n)-th order statistic of the sorted sample.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class BenchReport:
    requests: int
    completed: int
    errors: int
    elapsed_s: float
    qps: float
    avg_latency_ms: float
    tp99_latency_ms: float

    def __post_init__(self):
        for name in ("requests", "completed", "errors", "elapsed_s", "qps",
                     "avg_latency_ms", "tp99_latency_ms"):
            if getattr(self, name) < 0:
                raise BenchError(f"negative {name}")

    def to_json(self) -> dict:
        return {
            "requests": self.requests,
            "completed": self.completed,
            "errors": self.errors,
            "elapsed_s": self.elapsed_s,
            "qps": self.qps,
            "avg_latency_ms": self.avg_latency_ms,
            "tp99_latency_ms": self.tp99_latency_ms,
        }


def tp99(latencies_ms) -> float:
    """Nearest-rank 99th percentile of a latency sample."""
    lat = sorted(float(x) for x in latencies_ms)
    if not lat:
        raise BenchError("empty latency sample")
    rank = math.ceil(0.99 * len(lat))
    return lat[rank - 1]


def report_from_latencies(latencies_ms, elapsed_s: float | None = None,
                          errors: int = 0) -> BenchReport:
    lat = [float(x) for x in latencies_ms]
    if not lat:
        raise BenchError("zero completed requests")
    if any(x < 0 for x in lat):
        raise BenchError("negative latency in sample")
    if elapsed_s is None:
        elapsed_s = sum(lat) / 1000.0
    elapsed_s = max(float(elapsed_s), 1e-9)
    return BenchReport(
        requests=len(lat) + errors,
        completed=len(lat),
        errors=errors,
        elapsed_s=elapsed_s,
        qps=len(lat) / elapsed_s,
        avg_latency_ms=sum(lat) / len(lat),
        tp99_latency_ms=tp99(lat),
    )


def latency_bench(workload=None, *, latencies_ms=None,
                  concurrency: int = 1) -> BenchReport:
    """Benchmark a workload of zero-argument callables, or summarize an
    injected latency sample (milliseconds) when latencies_ms is given."""
    if latencies_ms is not None:
        return report_from_latencies(latencies_ms)
    workload = list(workload or [])
    if not workload:
        raise BenchError("empty workload")
    if concurrency < 1:
        raise BenchError("concurrency must be >= 1")

    def run_one(fn) -> tuple[float, bool]:
        t0 = time.perf_counter()
        try:
            fn()
            ok = True
        except Exception:
            ok = False
        return (time.perf_counter() - t0) * 1000.0, ok

    latencies: list[float] = []
    errors = 0
    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        for ms, ok in pool.map(run_one, workload):
            if ok:
                latencies.append(ms)
            else:
                errors += 1
    elapsed = time.perf_counter() - start
    if not latencies:
        raise BenchError("zero completed requests")
    return report_from_latencies(latencies, elapsed_s=elapsed, errors=errors)
