"""Statistics over bandwidth matrices: histograms, summaries, faults, contention."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fabricbench.errors import ValidationError
from fabricbench.matrix import BandwidthMatrix, pair_key

DEFAULT_K = 4.0
DEFAULT_CONTENTION_THRESHOLD = 0.8


@dataclass(frozen=True)
class Histogram:
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    underflow: int = 0
    overflow: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts) + self.underflow + self.overflow

    def to_dict(self) -> dict:
        return {
            "bin_edges": list(self.bin_edges),
            "counts": list(self.counts),
            "underflow": self.underflow,
            "overflow": self.overflow,
        }

    def to_gnuplot(self) -> str:
        """Two columns, bin centre and count."""
        lines = ["# bin_center count"]
        for lo, hi, c in zip(self.bin_edges, self.bin_edges[1:], self.counts):
            lines.append(f"{(lo + hi) / 2!r} {c}")
        return "\n".join(lines) + "\n"


def build_histogram(
    values: Sequence[float], bins: int | None = None, edges: Sequence[float] | None = None
) -> Histogram:
    """Bin ``values``; bins are right-open except the last, which is closed.

    With ``bins`` the edges span [min, max] uniformly; explicit ``edges``
    may leave values outside, which land in underflow/overflow.
    """
    data = np.asarray(list(values), dtype=float)
    if data.size == 0:
        raise ValidationError("cannot build a histogram of no values")
    if edges is not None:
        e = np.asarray(list(edges), dtype=float)
        if e.size < 2 or np.any(np.diff(e) <= 0):
            raise ValidationError("edges must be strictly ascending with at least two entries")
    else:
        n = 10 if bins is None else bins
        if n < 1:
            raise ValidationError("bins must be >= 1")
        e = np.histogram_bin_edges(data, bins=n)
    counts, _ = np.histogram(data, bins=e)
    return Histogram(
        bin_edges=tuple(float(x) for x in e),
        counts=tuple(int(c) for c in counts),
        underflow=int(np.count_nonzero(data < e[0])),
        overflow=int(np.count_nonzero(data > e[-1])),
    )


@dataclass(frozen=True)
class LinkStats:
    mean: float
    stddev: float  # population
    min: float
    max: float
    n: int
    outliers: tuple[tuple[str, str, float], ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stddev": self.stddev,
            "min": self.min,
            "max": self.max,
            "n": self.n,
            "outliers": [{"src": s, "dst": d, "bandwidth": b} for s, d, b in self.outliers],
        }


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def summarize(matrix: BandwidthMatrix, k: float = DEFAULT_K) -> LinkStats:
    """Mean, population stddev and range of all pair bandwidths.

    Pairs flagged by :func:`detect_failing_links` at ``k`` are listed as
    outliers when the matrix has enough pairs for the test.
    """
    values = matrix.bandwidths()
    if not values:
        raise ValidationError("empty matrix")
    mean, std = _mean_std(values)
    # fsum rounding can put mean a hair outside [min, max] for identical values
    lo, hi = min(values), max(values)
    mean = min(max(mean, lo), hi)
    outliers = tuple(detect_failing_links(matrix, k)) if len(values) >= 3 else ()
    return LinkStats(mean=mean, stddev=std, min=lo, max=hi, n=len(values), outliers=outliers)


def detect_failing_links(matrix: BandwidthMatrix, k: float = DEFAULT_K) -> list[tuple[str, str, float]]:
    """Pairs with bandwidth below ``mean - k * stddev``; none when stddev is 0."""
    entries = list(matrix)
    if len(entries) < 3:
        raise ValidationError(f"need at least 3 pairs to detect failing links, got {len(entries)}")
    if k < 0:
        raise ValidationError("k must be >= 0")
    mean, std = _mean_std([e.bandwidth for e in entries])
    if std == 0:
        return []
    threshold = mean - k * std
    return [(e.src, e.dst, e.bandwidth) for e in entries if e.bandwidth < threshold]


@dataclass(frozen=True)
class PairRatio:
    src: str
    dst: str
    serial: float
    parallel: float

    @property
    def ratio(self) -> float:
        return self.parallel / self.serial


@dataclass(frozen=True)
class ContentionReport:
    ratios: tuple[PairRatio, ...]
    contended: tuple[PairRatio, ...]
    threshold: float
    mean_ratio: float
    serial_stddev: float
    parallel_stddev: float

    @property
    def spread_increased(self) -> bool:
        return self.parallel_stddev >= self.serial_stddev

    def to_dict(self) -> dict:
        def row(r: PairRatio) -> dict:
            return {"src": r.src, "dst": r.dst, "serial": r.serial, "parallel": r.parallel, "ratio": r.ratio}

        return {
            "threshold": self.threshold,
            "mean_ratio": self.mean_ratio,
            "serial_stddev": self.serial_stddev,
            "parallel_stddev": self.parallel_stddev,
            "spread_increased": self.spread_increased,
            "contended": [row(r) for r in self.contended],
            "ratios": [row(r) for r in self.ratios],
        }


def compare_modes(
    serial: BandwidthMatrix, parallel: BandwidthMatrix, threshold: float = DEFAULT_CONTENTION_THRESHOLD
) -> ContentionReport:
    """Per-pair parallel/serial bandwidth ratio; pairs below ``threshold`` are contended."""
    s_pairs = {pair_key(e.src, e.dst): e for e in serial}
    p_pairs = {pair_key(e.src, e.dst): e for e in parallel}
    s_all = set(s_pairs) | {pair_key(*m) for m in serial.missing}
    p_all = set(p_pairs) | {pair_key(*m) for m in parallel.missing}
    if set(serial.nodes) != set(parallel.nodes) or s_all != p_all:
        raise ValidationError("serial and parallel matrices cover different node sets")
    if serial.msg_size is not None and parallel.msg_size is not None and serial.msg_size != parallel.msg_size:
        raise ValidationError(f"message sizes differ: {serial.msg_size} vs {parallel.msg_size}")
    ratios = []
    for key, s in s_pairs.items():
        p = p_pairs.get(key)
        if p is None:
            continue
        ratios.append(PairRatio(s.src, s.dst, s.bandwidth, p.bandwidth))
    if not ratios:
        raise ValidationError("no pairs measured in both modes")
    contended = tuple(r for r in ratios if r.ratio < threshold)
    return ContentionReport(
        ratios=tuple(ratios),
        contended=contended,
        threshold=threshold,
        mean_ratio=math.fsum(r.ratio for r in ratios) / len(ratios),
        serial_stddev=_mean_std([r.serial for r in ratios])[1],
        parallel_stddev=_mean_std([r.parallel for r in ratios])[1],
    )
