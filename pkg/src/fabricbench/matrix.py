"""Per-pair bandwidth matrix and its CSV form.

The CSV is shared by the simulator and the socket benchmark::

    # mode=serial
    # msg_size=1048576
    # nodes=0,1,2,3
    src,dst,bandwidth_gbps,time_s
    0,1,12.35,0.0001697

One row per unordered pair.  Pairs that could not be measured keep their
row with empty ``bandwidth_gbps``/``time_s``.  ``time_s`` is the round trip.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from fabricbench.errors import ValidationError

HEADER = ("src", "dst", "bandwidth_gbps", "time_s")


def pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class PairEntry:
    src: str
    dst: str
    bandwidth: float  # GB/s, one-way payload rate
    time: float  # s, round trip


@dataclass
class BandwidthMatrix:
    nodes: tuple[str, ...]
    entries: dict[tuple[str, str], PairEntry] = field(default_factory=dict)
    mode: str = ""
    msg_size: int | None = None
    missing: list[tuple[str, str]] = field(default_factory=list)

    def add(self, src: str, dst: str, bandwidth: float, time: float) -> None:
        if src == dst:
            raise ValidationError(f"diagonal entry ({src}, {dst}) not allowed")
        if not bandwidth > 0:
            raise ValidationError(f"bandwidth for ({src}, {dst}) must be > 0")
        self.entries[(src, dst)] = PairEntry(src, dst, float(bandwidth), float(time))

    def flag_missing(self, src: str, dst: str) -> None:
        if (src, dst) not in self.missing:
            self.missing.append((src, dst))

    def __iter__(self) -> Iterator[PairEntry]:
        return iter(self.entries.values())

    def __len__(self) -> int:
        return len(self.entries)

    def bandwidths(self) -> list[float]:
        return [e.bandwidth for e in self.entries.values()]

    def get(self, a: str, b: str) -> PairEntry | None:
        return self.entries.get((a, b)) or self.entries.get((b, a))

    @property
    def complete(self) -> bool:
        n = len(self.nodes)
        return not self.missing and len(self.entries) == n * (n - 1) // 2

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.mode:
            buf.write(f"# mode={self.mode}\n")
        if self.msg_size is not None:
            buf.write(f"# msg_size={self.msg_size}\n")
        buf.write(f"# nodes={','.join(self.nodes)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HEADER)
        rows = [(e.src, e.dst, repr(e.bandwidth), repr(e.time)) for e in self.entries.values()]
        rows += [(s, d, "", "") for s, d in self.missing]
        order = {n: i for i, n in enumerate(self.nodes)}
        rows.sort(key=lambda r: (order.get(r[0], len(order)), order.get(r[1], len(order)), r[0], r[1]))
        writer.writerows(rows)
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def parse_matrix_csv(text: str, source: str = "<matrix>") -> BandwidthMatrix:
    meta: dict[str, str] = {}
    lines = []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, sep, value = s[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        lines.append((lineno, line))
    if not lines:
        raise ValidationError(f"{source}: empty matrix")
    header = next(csv.reader([lines[0][1]]))
    if tuple(c.strip() for c in header) != HEADER:
        raise ValidationError(f"{source}: line {lines[0][0]}: expected header {','.join(HEADER)}")
    nodes: list[str] = [n for n in meta.get("nodes", "").split(",") if n]
    matrix = BandwidthMatrix(
        nodes=(),
        mode=meta.get("mode", ""),
        msg_size=int(meta["msg_size"]) if "msg_size" in meta else None,
    )
    for lineno, line in lines[1:]:
        row = next(csv.reader([line]))
        if len(row) != 4:
            raise ValidationError(f"{source}: line {lineno}: expected 4 columns, got {len(row)}")
        src, dst, bw, t = (c.strip() for c in row)
        for n in (src, dst):
            if n not in nodes:
                nodes.append(n)
        if not bw:
            matrix.flag_missing(src, dst)
            continue
        try:
            matrix.add(src, dst, float(bw), float(t))
        except ValueError as exc:
            raise ValidationError(f"{source}: line {lineno}: {exc}") from None
    matrix.nodes = tuple(nodes)
    if not matrix.entries and not matrix.missing:
        raise ValidationError(f"{source}: empty matrix")
    return matrix


def load_matrix(path: str | Path) -> BandwidthMatrix:
    path = Path(path)
    return parse_matrix_csv(path.read_text(), source=str(path))
