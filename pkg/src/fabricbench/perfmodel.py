"""Analytic performance models.

Covers core peak FLOPS, Little's-Law memory bandwidth, Linpack efficiency,
performance per watt over a frequency sweep, and strong-scaling speedup.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from fabricbench.errors import ValidationError
from fabricbench.jsonfile import JsonDocument, require

CACHE_LINE = 64
# Six outstanding 64-byte lines reproduces ~14 GB/s per channel at 27.4 ns.
DEFAULT_BYTES_IN_FLIGHT = 6 * CACHE_LINE


def core_peak_flops(vector_width: int, exec_units: int, flops_per_fma: int, freq: float) -> float:
    """Peak GFlop/s of one core: lanes x FMA units x flops per FMA x GHz."""
    for name, value in (
        ("vector_width", vector_width),
        ("exec_units", exec_units),
        ("flops_per_fma", flops_per_fma),
        ("freq", freq),
    ):
        if not value > 0:
            raise ValidationError(f"{name} must be positive, got {value!r}")
    return vector_width * exec_units * flops_per_fma * freq


@dataclass(frozen=True)
class MemoryParams:
    latency: float  # ns
    bytes_in_flight: float = DEFAULT_BYTES_IN_FLIGHT
    channels: int = 1

    def __post_init__(self):
        if not self.latency > 0:
            raise ValidationError("latency must be > 0")
        if not self.bytes_in_flight > 0:
            raise ValidationError("bytes_in_flight must be > 0")
        if self.channels < 1:
            raise ValidationError("channels must be >= 1")


@dataclass(frozen=True)
class LittleLawEstimate:
    per_channel: float  # GB/s
    total: float  # GB/s


def little_law_bandwidth(params: MemoryParams) -> LittleLawEstimate:
    # bytes / ns == GB/s
    per_channel = params.bytes_in_flight / params.latency
    return LittleLawEstimate(per_channel=per_channel, total=per_channel * params.channels)


# -- Linpack -----------------------------------------------------------------


@dataclass(frozen=True)
class LinpackRun:
    rmax: float  # TFlop/s
    rpeak: float  # TFlop/s
    n: int = 1
    nb: int = 1
    p: int = 1
    q: int = 1
    time: float | None = None  # s
    rmax_tolerance: float = 0.0
    power: float | None = None  # kW
    power_estimated: bool = False
    label: str = ""

    def __post_init__(self):
        if self.n <= 0:
            raise ValidationError("n must be > 0")
        if self.p * self.q < 1:
            raise ValidationError("p*q must be >= 1")
        if not self.rpeak > 0:
            raise ValidationError("rpeak must be > 0")


def linpack_efficiency(run: LinpackRun) -> float:
    """Rmax as a percentage of Rpeak."""
    if not run.rpeak > 0:
        raise ValidationError("rpeak must be > 0")
    if run.rmax > run.rpeak:
        raise ValidationError("efficiency above 100%")
    # rmax <= rpeak, so only float rounding can push this past 100
    return min(100.0, 100.0 * run.rmax / run.rpeak)


def load_linpack_runs(path: str | Path) -> list[LinpackRun]:
    doc = JsonDocument.load(path)
    runs = []
    for entry in require(doc, doc.data, "runs", list):
        try:
            runs.append(
                LinpackRun(
                    rmax=float(require(doc, entry, "rmax", (int, float))),
                    rpeak=float(require(doc, entry, "rpeak", (int, float))),
                    n=require(doc, entry, "n", int),
                    nb=require(doc, entry, "nb", int, optional=True) or 1,
                    p=require(doc, entry, "p", int, optional=True) or 1,
                    q=require(doc, entry, "q", int, optional=True) or 1,
                    time=require(doc, entry, "time", (int, float), optional=True),
                    rmax_tolerance=float(require(doc, entry, "rmax_tolerance", (int, float), optional=True) or 0.0),
                    power=require(doc, entry, "power", (int, float), optional=True),
                    power_estimated=bool(require(doc, entry, "power_estimated", bool, optional=True)),
                    label=require(doc, entry, "label", str, optional=True) or "",
                )
            )
        except ValidationError as exc:
            if str(exc).startswith(doc.source):
                raise
            raise doc.error(entry, None, str(exc)) from None
    return runs


# -- performance per watt ------------------------------------------------------


@dataclass(frozen=True)
class FreqSweepPoint:
    freq: float  # GHz
    measured_gflops: float
    power: float | None = None  # W

    def __post_init__(self):
        if not self.freq > 0:
            raise ValidationError("freq must be > 0")
        if self.measured_gflops < 0:
            raise ValidationError("measured_gflops must be >= 0")


@dataclass(frozen=True)
class EfficiencyCurve:
    points: tuple[tuple[float, float], ...]  # (GHz, GFlop/s/W)
    best_freq: float
    best_efficiency: float


def perf_per_watt(points: Sequence[FreqSweepPoint]) -> EfficiencyCurve:
    if not points:
        raise ValidationError("no sweep points")
    missing = [p.freq for p in points if p.power is None or not p.power > 0]
    if missing:
        raise ValidationError(f"missing or non-positive power at frequencies {sorted(missing)}")
    curve = sorted(((p.freq, p.measured_gflops / p.power) for p in points), key=lambda fp: fp[0])
    best_freq, best = curve[0]
    for freq, eff in curve[1:]:
        # strict comparison keeps the lowest frequency on ties
        if eff > best:
            best_freq, best = freq, eff
    return EfficiencyCurve(points=tuple(curve), best_freq=best_freq, best_efficiency=best)


# -- strong scaling --------------------------------------------------------------


@dataclass(frozen=True)
class ScalingSeries:
    label: str
    points: tuple[tuple[int, float], ...]  # (workers, seconds), sorted by workers
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        pts = tuple(sorted((int(w), float(t)) for w, t in self.points))
        if not pts:
            raise ValidationError("scaling series is empty")
        for (w0, _), (w1, _) in zip(pts, pts[1:]):
            if w0 == w1:
                raise ValidationError(f"duplicate worker count {w0}")
        for w, t in pts:
            if w < 1:
                raise ValidationError(f"worker count must be >= 1, got {w}")
            if not t > 0:
                raise ValidationError(f"time must be > 0 (workers={w})")
        object.__setattr__(self, "points", pts)

    @property
    def baseline(self) -> tuple[int, float]:
        return self.points[0]


@dataclass(frozen=True)
class ScalingPoint:
    workers: int
    time: float
    speedup: float
    efficiency: float  # fraction of linear speedup
    superlinear: bool


def speedup_table(series: ScalingSeries, tolerance: float = 1e-9) -> list[ScalingPoint]:
    """Speedup relative to the smallest measured worker count."""
    p0, t0 = series.baseline
    rows = []
    for p, t in series.points:
        s = t0 / t
        eff = s * p0 / p
        rows.append(ScalingPoint(workers=p, time=t, speedup=s, efficiency=eff, superlinear=eff > 1.0 + tolerance))
    return rows


@dataclass(frozen=True)
class IdealDeviation:
    workers: int
    ratio: float
    superlinear: bool


def ideal_deviation(series: ScalingSeries, tolerance: float = 1e-9) -> list[IdealDeviation]:
    """Ratio of measured speedup to linear speedup p/p0; >1 is flagged, not rejected."""
    p0, _ = series.baseline
    out = []
    for row in speedup_table(series, tolerance):
        ratio = row.speedup / (row.workers / p0)
        out.append(IdealDeviation(row.workers, ratio, ratio > 1.0 + tolerance))
    return out


def parse_scaling_csv(text: str, label: str = "") -> ScalingSeries:
    """Parse ``workers,time_s`` CSV with ``# key=value`` metadata comments."""
    metadata: dict[str, str] = {}
    body = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].partition("=")
            if sep:
                metadata[key.strip()] = value.strip()
            continue
        if stripped:
            body.append((lineno, line))
    if not body:
        raise ValidationError("scaling CSV has no header")
    header_line, header = body[0]
    reader = csv.reader(io.StringIO("\n".join(line for _, line in body)))
    columns = [c.strip() for c in next(reader)]
    if columns[:2] != ["workers", "time_s"]:
        raise ValidationError(f"line {header_line}: expected header 'workers,time_s', got {header!r}")
    points = []
    for (lineno, _), row in zip(body[1:], reader):
        try:
            points.append((int(row[0]), float(row[1])))
        except (ValueError, IndexError):
            raise ValidationError(f"line {lineno}: malformed row {row!r}") from None
    return ScalingSeries(label=metadata.get("label", label), points=tuple(points), metadata=metadata)


def load_scaling_series(path: str | Path) -> ScalingSeries:
    path = Path(path)
    try:
        return parse_scaling_csv(path.read_text(), label=path.stem)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def format_scaling_csv(series: ScalingSeries) -> str:
    lines = [f"# {k}={v}" for k, v in series.metadata.items()]
    lines.append("workers,time_s")
    lines.extend(f"{w},{t!r}" for w, t in series.points)
    return "\n".join(lines) + "\n"


def parse_sweep_csv(text: str) -> list[FreqSweepPoint]:
    """``freq,gflops[,power]`` rows; comment lines start with '#'."""
    rows = [r for r in csv.reader(line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#"))]
    if not rows:
        raise ValidationError("sweep CSV is empty")
    header = [c.strip() for c in rows[0]]
    if header[:2] != ["freq", "gflops"]:
        raise ValidationError("expected header 'freq,gflops[,power]'")
    out = []
    for row in rows[1:]:
        power = float(row[2]) if len(row) > 2 and row[2].strip() else None
        out.append(FreqSweepPoint(float(row[0]), float(row[1]), power))
    return out

