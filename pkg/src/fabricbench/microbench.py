"""Node-level microbenchmarks: FMA throughput, STREAM triad, pointer-chase latency.

Kernels are JIT-compiled with numba and release the GIL, so each worker
thread runs its share truly in parallel.  Timed sections touch no shared
mutable state; results are aggregated after the end-of-repetition barrier.
Only one benchmark should run per process at a time.
"""

from __future__ import annotations

import os
import statistics
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit

from fabricbench.errors import BenchmarkError, ValidationError
from fabricbench.perfmodel import core_peak_flops

KiB = 1024
MiB = 1024 * KiB

FMA_ACCUMULATORS = 64  # 8 independent 8-lane vector chains with AVX-512
MIN_SECONDS = 0.1
DEFAULT_CACHE_BYTES = 32 * MiB
TRIAD_BYTES_PER_ELEM = 24  # two 8-byte reads, one 8-byte write

# reference values measured on Xeon Gold 6136/6140 nodes; metadata only
REFERENCE = {
    "triad_node_gbps": 178.6,
    "latency_ns": {"L1": 1.1, "L2": 3.8, "memory": 27.4},
    "core_peak_gflops_3_5ghz": 112.0,
}


@njit(fastmath=True, nogil=True)
def _fma_kernel(n_iter, mul, add, nacc):
    acc = np.empty(nacc)
    for j in range(nacc):
        acc[j] = 1.0 + j * 1e-3
    for _ in range(n_iter):
        for j in range(nacc):
            acc[j] = acc[j] * mul + add
    total = 0.0
    for j in range(nacc):
        total += acc[j]
    return total


@njit(fastmath=True, nogil=True)
def _triad_kernel(a, b, c, scalar):
    for i in range(a.shape[0]):
        a[i] = b[i] + scalar * c[i]


@njit(nogil=True)
def _chase_kernel(nxt, start, steps):
    i = start
    for _ in range(steps):
        i = nxt[i]
    return i


@dataclass
class BenchResult:
    name: str
    threads: int
    duration: float  # s, total timed
    metric_value: float
    unit: str
    repetitions: int
    cv: float
    pinned: bool = False
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.repetitions < 3:
            raise ValidationError("repetitions must be >= 3")
        if self.cv < 0:
            raise ValidationError("cv must be >= 0")
        if not self.duration > 0:
            raise ValidationError("duration must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HostPeak:
    freq_ghz: float
    vector_width: int
    fma_units: int
    core_gflops: float
    freq_source: str


def _cpu_flags() -> set[str]:
    try:
        for line in Path("/proc/cpuinfo").read_text().splitlines():
            if line.startswith("flags"):
                return set(line.split(":", 1)[1].split())
    except OSError:
        pass
    return set()


def detect_frequency() -> tuple[float | None, str]:
    """Best-effort maximum core clock in GHz."""
    try:
        khz = int(Path("/sys/devices/system/cpu/cpu0/cpufreq/cpuinfo_max_freq").read_text())
        return khz / 1e6, "cpufreq max"
    except (OSError, ValueError):
        pass
    try:
        mhz = [
            float(line.split(":", 1)[1])
            for line in Path("/proc/cpuinfo").read_text().splitlines()
            if line.startswith("cpu MHz")
        ]
        if mhz:
            return max(mhz) / 1000.0, "/proc/cpuinfo"
    except (OSError, ValueError):
        pass
    return None, "unknown"


def host_peak(freq: float | None = None, fma_units: int = 2) -> HostPeak | None:
    """Analytic double-precision peak of one host core, or None if the clock is unknown."""
    flags = _cpu_flags()
    width = 8 if "avx512f" in flags else 4 if "avx" in flags else 2
    source = "declared"
    if freq is None:
        freq, source = detect_frequency()
        if freq is None:
            return None
    return HostPeak(freq, width, fma_units, core_peak_flops(width, fma_units, 2, freq), source)


def _available_cpus() -> list[int]:
    try:
        return sorted(os.sched_getaffinity(0))
    except AttributeError:
        return list(range(os.cpu_count() or 1))


def _run_workers(threads: int, repetitions: int, work: Callable[[int], None]) -> tuple[list[float], bool]:
    """Run ``work(idx)`` on ``threads`` workers per repetition; returns wall times and pinning."""
    cpus = _available_cpus()
    pin = threads <= len(cpus) and hasattr(os, "sched_setaffinity")
    start = threading.Barrier(threads + 1)
    done = threading.Barrier(threads + 1)
    errors: list[BaseException] = []

    def worker(idx: int) -> None:
        if pin:
            try:
                os.sched_setaffinity(0, {cpus[idx]})
            except OSError:
                pass
        for _ in range(repetitions):
            start.wait()
            try:
                work(idx)
            except BaseException as exc:  # surfaced after join
                errors.append(exc)
            done.wait()

    pool = [threading.Thread(target=worker, args=(i,), daemon=True) for i in range(threads)]
    try:
        for t in pool:
            t.start()
    except RuntimeError as exc:
        start.abort()
        done.abort()
        raise BenchmarkError(f"could not spawn {threads} worker threads: {exc}") from exc
    times = []
    for _ in range(repetitions):
        start.wait()
        t0 = time.perf_counter()
        done.wait()
        times.append(time.perf_counter() - t0)
    for t in pool:
        t.join()
    if errors:
        raise BenchmarkError(f"worker failed: {errors[0]!r}") from errors[0]
    return times, pin


def _cv(values: list[float]) -> float:
    mean = statistics.fmean(values)
    return statistics.pstdev(values) / mean if mean > 0 else 0.0


def _check_timer(per_rep: float) -> None:
    resolution = time.get_clock_info("perf_counter").resolution
    if resolution > per_rep / 1000:
        raise BenchmarkError(f"timer resolution {resolution}s is too coarse for {per_rep}s repetitions")


def fma_peak_bench(
    threads: int = 1,
    seconds: float = 1.0,
    repetitions: int = 5,
    freq: float | None = None,
) -> BenchResult:
    """Aggregate GFlop/s of independent FMA chains, best of ``repetitions``.

    Each worker updates ``FMA_ACCUMULATORS`` independent accumulators so the
    FMA pipeline latency is covered; one FMA counts as 2 flops.
    """
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    if seconds < MIN_SECONDS:
        raise ValidationError(f"seconds must be >= {MIN_SECONDS}")
    if repetitions < 3:
        raise ValidationError("repetitions must be >= 3")
    per_rep = seconds / repetitions
    _check_timer(per_rep)

    mul, add = 0.9999999, 1e-7  # contracts towards a fixed point, no denormals
    _fma_kernel(1000, mul, add, FMA_ACCUMULATORS)  # compile + warm
    n_iter = 100_000
    while True:
        t0 = time.perf_counter()
        _fma_kernel(n_iter, mul, add, FMA_ACCUMULATORS)
        dt = time.perf_counter() - t0
        if dt > 0.02 or n_iter > 10**10:
            break
        n_iter *= 4
    n_iter = max(1000, int(n_iter * per_rep / dt))

    times, pinned = _run_workers(threads, repetitions, lambda _: _fma_kernel(n_iter, mul, add, FMA_ACCUMULATORS))
    flops = 2.0 * FMA_ACCUMULATORS * n_iter * threads
    rates = [flops / t / 1e9 for t in times]
    best = max(rates)
    details: dict = {"iterations": n_iter, "accumulators": FMA_ACCUMULATORS, "reference": REFERENCE}
    peak = host_peak(freq)
    if peak is not None:
        analytic = peak.core_gflops * threads
        details.update(
            analytic_peak_gflops=analytic,
            freq_ghz=peak.freq_ghz,
            freq_source=peak.freq_source,
            vector_width=peak.vector_width,
            fraction_of_peak=best / analytic,
            within_peak=best <= analytic,
        )
    return BenchResult("fma", threads, sum(times), best, "GFlop/s", repetitions, _cv(rates), pinned, details)


def triad_bytes(array_elems: int, iterations: int = 1) -> int:
    return TRIAD_BYTES_PER_ELEM * array_elems * iterations


def stream_triad(
    array_elems: int | None = None,
    threads: int = 1,
    cache_bytes: int = DEFAULT_CACHE_BYTES,
    repetitions: int = 10,
    scalar: float = 3.0,
) -> BenchResult:
    """Best-of-``repetitions`` bandwidth of ``a = b + scalar * c`` in GB/s."""
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    if repetitions < 5:
        raise ValidationError("triad needs at least 5 repetitions")
    min_elems = -(-4 * cache_bytes // TRIAD_BYTES_PER_ELEM)
    if array_elems is None:
        array_elems = min_elems
    if array_elems < min_elems:
        raise BenchmarkError(
            f"array too small for cache criterion: 3 arrays of {array_elems} doubles"
            f" must exceed 4 x {cache_bytes} bytes of cache"
        )
    try:
        a = np.zeros(array_elems)
        b = np.full(array_elems, 1.0)
        c = np.full(array_elems, 2.0)
    except MemoryError as exc:
        raise BenchmarkError(f"could not allocate 3 x {array_elems} doubles") from exc
    bounds = np.linspace(0, array_elems, threads + 1).astype(np.int64)
    chunks = [(a[lo:hi], b[lo:hi], c[lo:hi]) for lo, hi in zip(bounds, bounds[1:])]
    _triad_kernel(a[:16], b[:16], c[:16], scalar)  # compile

    def work(idx: int) -> None:
        ca, cb, cc = chunks[idx]
        _triad_kernel(ca, cb, cc, scalar)

    # the first sweep is untimed: it faults pages in and warms the workers
    times, pinned = _run_workers(threads, repetitions + 1, work)
    times = times[1:]
    nbytes = triad_bytes(array_elems)
    rates = [nbytes / t / 1e9 for t in times]
    return BenchResult(
        "triad",
        threads,
        sum(times),
        max(rates),
        "GB/s",
        repetitions,
        _cv(rates),
        pinned,
        {"array_elems": array_elems, "bytes_per_iteration": nbytes, "cache_bytes": cache_bytes, "reference": REFERENCE},
    )


@dataclass(frozen=True)
class LatencyPoint:
    buffer_size: int  # bytes
    latency_ns: float


def _build_chain(buffer_size: int, mode: str, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """One pointer per 64-byte line, linked into a single cycle."""
    lines = buffer_size // 64
    stride = 8  # int64 slots per line
    nxt = np.zeros(buffer_size // 8, dtype=np.int64)
    if mode == "random":
        order = rng.permutation(lines)
    elif mode == "sequential":
        order = np.arange(lines)
    else:
        raise ValidationError(f"mode must be 'random' or 'sequential', got {mode!r}")
    nxt[order * stride] = np.roll(order, -1) * stride
    return nxt, int(order[0] * stride)


def latency_ladder_sizes(max_buffer: int, min_buffer: int = 4 * KiB) -> list[int]:
    sizes = []
    size = min_buffer
    while size <= max_buffer:
        sizes.append(size)
        size *= 2
    return sizes


def latency_chase(
    max_buffer: int = 64 * MiB,
    mode: str = "random",
    min_buffer: int = 4 * KiB,
    steps: int = 1 << 20,
    repetitions: int = 5,
    seed: int = 0,
) -> list[LatencyPoint]:
    """Median dependent-load latency for buffers from ``min_buffer`` to ``max_buffer``."""
    if max_buffer < MiB:
        raise ValidationError("max_buffer must be >= 1 MiB")
    if repetitions < 3:
        raise ValidationError("repetitions must be >= 3")
    rng = np.random.default_rng(seed)
    out = []
    for size in latency_ladder_sizes(max_buffer, min_buffer):
        try:
            nxt, start = _build_chain(size, mode, rng)
        except MemoryError as exc:
            raise BenchmarkError(f"could not allocate {size}-byte chase buffer") from exc
        pos = _chase_kernel(nxt, start, size // 64)  # warm: one lap
        samples = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            pos = _chase_kernel(nxt, pos, steps)
            samples.append((time.perf_counter() - t0) / steps * 1e9)
        out.append(LatencyPoint(size, statistics.median(samples)))
    return out


def is_non_decreasing(curve: list[LatencyPoint], tolerance: float = 0.15) -> bool:
    """True if no point drops more than ``tolerance`` below its predecessor."""
    return all(b.latency_ns >= a.latency_ns * (1 - tolerance) for a, b in zip(curve, curve[1:]))
