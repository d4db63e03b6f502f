"""Cluster hardware inventory and theoretical peak performance.

Peak per node is ``sockets * cores * flops_per_cycle * F`` for the CPU part
and ``gpus * dp_units * 2 * F_boost`` for accelerators.  Published tables
often round or hand-adjust per-class numbers; those can be carried as
``listed`` overrides, which drive the reported totals while any mismatch
with the formula is surfaced as a warning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from fabricbench.errors import ValidationError
from fabricbench.jsonfile import JsonDocument, require

NO_ACCELERATOR = "no accelerator"


@dataclass(frozen=True)
class CpuSpec:
    model_name: str
    sockets: int
    cores_per_socket: int
    base_freq: float  # GHz
    flops_per_cycle_per_core: int = 32  # AVX-512: 8 lanes * 2 FMA units * 2 flops

    def __post_init__(self):
        if self.sockets < 1:
            raise ValidationError("sockets must be >= 1")
        if self.cores_per_socket < 1:
            raise ValidationError("cores_per_socket must be >= 1")
        if not self.base_freq > 0:
            raise ValidationError("base_freq must be > 0")
        if not self.flops_per_cycle_per_core > 0:
            raise ValidationError("flops_per_cycle_per_core must be > 0")

    @property
    def cores(self) -> int:
        return self.sockets * self.cores_per_socket


@dataclass(frozen=True)
class GpuSpec:
    model_name: str
    count_per_node: int
    dp_units: int  # double-precision lanes, not CUDA cores
    boost_freq: float  # GHz

    def __post_init__(self):
        if self.count_per_node < 0:
            raise ValidationError("count_per_node must be >= 0")
        if self.dp_units < 0:
            raise ValidationError("dp_units must be >= 0")
        if self.boost_freq < 0:
            raise ValidationError("boost_freq must be >= 0")


@dataclass(frozen=True)
class ListedPeak:
    """Per-node and per-class TFlop/s as printed in a source table."""

    cpu_node_tflops: float | None = None
    gpu_node_tflops: float | None = None
    cpu_class_tflops: float | None = None
    gpu_class_tflops: float | None = None


@dataclass(frozen=True)
class NodeSpec:
    class_name: str
    cpu: CpuSpec
    gpu: GpuSpec | None = None
    memory: float = 1.0  # GB
    storage: float = 0.0  # TB
    node_count: int = 1
    listed: ListedPeak | None = None

    def __post_init__(self):
        if self.node_count < 1:
            raise ValidationError("node_count must be >= 1")
        if not self.memory > 0:
            raise ValidationError("memory must be > 0")
        if self.storage < 0:
            raise ValidationError("storage must be >= 0")


@dataclass(frozen=True)
class ListedTotals:
    """Whole-machine figures as published; any field may be absent."""

    nodes: int | None = None
    cores: int | None = None
    tflops: float | None = None


@dataclass(frozen=True)
class ClusterInventory:
    classes: tuple[NodeSpec, ...]
    interconnect: str = ""
    name: str = ""
    listed_totals: ListedTotals | None = None

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        seen = set()
        for spec in self.classes:
            if spec.class_name in seen:
                raise ValidationError(f"duplicate class name '{spec.class_name}'")
            seen.add(spec.class_name)


class AcceleratorPeak(NamedTuple):
    tflops: float
    status: str  # "ok" or NO_ACCELERATOR


def node_cpu_peak(spec: NodeSpec) -> float:
    """CPU peak of one node in TFlop/s."""
    cpu = spec.cpu
    return cpu.sockets * cpu.cores_per_socket * cpu.flops_per_cycle_per_core * cpu.base_freq / 1000.0


def node_gpu_peak(gpu: GpuSpec | None) -> AcceleratorPeak:
    """Double-precision accelerator peak of one node in TFlop/s (FMA = 2 flops)."""
    if gpu is None or gpu.count_per_node == 0 or gpu.dp_units == 0:
        return AcceleratorPeak(0.0, NO_ACCELERATOR)
    return AcceleratorPeak(gpu.count_per_node * gpu.dp_units * 2 * gpu.boost_freq / 1000.0, "ok")


@dataclass(frozen=True)
class ClassPeak:
    class_name: str
    node_count: int
    cores_per_node: int
    cpu_node_tflops: float
    gpu_node_tflops: float
    accelerator_status: str
    cpu_class_tflops: float
    gpu_class_tflops: float
    reported_class_tflops: float
    # listed per-node figures where the inventory carries them, else computed
    reported_cpu_node_tflops: float = 0.0
    reported_gpu_node_tflops: float = 0.0

    @property
    def computed_class_tflops(self) -> float:
        return self.cpu_class_tflops + self.gpu_class_tflops


@dataclass(frozen=True)
class PeakReport:
    rows: tuple[ClassPeak, ...]
    total_nodes: int  # listed total where given, else computed
    total_cores: int
    computed_total_tflops: float
    total_tflops: float
    computed_total_nodes: int = 0
    computed_total_cores: int = 0
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def as_rows(self) -> list[dict]:
        return [
            {
                "class_name": r.class_name,
                "node_count": r.node_count,
                "cores_per_node": r.cores_per_node,
                "cpu_node_tflops": round(r.cpu_node_tflops, 4),
                "gpu_node_tflops": round(r.gpu_node_tflops, 4),
                "reported_cpu_node_tflops": round(r.reported_cpu_node_tflops, 4),
                "reported_gpu_node_tflops": round(r.reported_gpu_node_tflops, 4),
                "computed_class_tflops": round(r.computed_class_tflops, 4),
                "reported_class_tflops": round(r.reported_class_tflops, 4),
            }
            for r in self.rows
        ]


def _check_listed(name: str, what: str, computed: float, listed: float | None, warnings: list[str]) -> None:
    if listed is None:
        return
    if round(computed, 1) != round(listed, 1):
        warnings.append(f"{name}: computed {what} {computed:.4f} TFlop/s differs from listed {listed}")


def cluster_peak(inv: ClusterInventory) -> PeakReport:
    """Per-class and whole-machine peak.

    Totals sum the listed class values where present (falling back to the
    formula), so a published table can be reproduced verbatim.
    """
    if not inv.classes:
        raise ValidationError("empty inventory")
    rows = []
    warnings: list[str] = []
    for spec in inv.classes:
        cpu_node = node_cpu_peak(spec)
        gpu = node_gpu_peak(spec.gpu)
        cpu_class = spec.node_count * cpu_node
        gpu_class = spec.node_count * gpu.tflops
        listed = spec.listed or ListedPeak()
        _check_listed(spec.class_name, "CPU node peak", cpu_node, listed.cpu_node_tflops, warnings)
        _check_listed(spec.class_name, "GPU node peak", gpu.tflops, listed.gpu_node_tflops, warnings)
        _check_listed(spec.class_name, "CPU class peak", cpu_class, listed.cpu_class_tflops, warnings)
        _check_listed(spec.class_name, "GPU class peak", gpu_class, listed.gpu_class_tflops, warnings)
        reported = (listed.cpu_class_tflops if listed.cpu_class_tflops is not None else cpu_class) + (
            listed.gpu_class_tflops if listed.gpu_class_tflops is not None else gpu_class
        )
        rows.append(
            ClassPeak(
                class_name=spec.class_name,
                node_count=spec.node_count,
                cores_per_node=spec.cpu.cores,
                cpu_node_tflops=cpu_node,
                gpu_node_tflops=gpu.tflops,
                accelerator_status=gpu.status,
                cpu_class_tflops=cpu_class,
                gpu_class_tflops=gpu_class,
                reported_class_tflops=reported,
                reported_cpu_node_tflops=cpu_node if listed.cpu_node_tflops is None else listed.cpu_node_tflops,
                reported_gpu_node_tflops=gpu.tflops if listed.gpu_node_tflops is None else listed.gpu_node_tflops,
            )
        )
    nodes = sum(r.node_count for r in rows)
    cores = sum(r.node_count * r.cores_per_node for r in rows)
    tflops = sum(r.reported_class_tflops for r in rows)
    totals = inv.listed_totals or ListedTotals()
    for what, summed, listed in (("node count", nodes, totals.nodes), ("core count", cores, totals.cores)):
        if listed is not None and listed != summed:
            warnings.append(f"total {what}: classes sum to {summed}, listed total is {listed}")
    _check_listed("total", "peak", tflops, totals.tflops, warnings)
    return PeakReport(
        rows=tuple(rows),
        total_nodes=nodes if totals.nodes is None else totals.nodes,
        total_cores=cores if totals.cores is None else totals.cores,
        computed_total_tflops=sum(r.computed_class_tflops for r in rows),
        total_tflops=tflops if totals.tflops is None else totals.tflops,
        computed_total_nodes=nodes,
        computed_total_cores=cores,
        warnings=tuple(warnings),
    )


# -- file loading -----------------------------------------------------------

_NUM = (int, float)


def _build(doc: JsonDocument, obj: dict, key: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ValidationError as exc:
        # map "<field> must be ..." back to the offending field's line
        field_name = str(exc).split(" ", 1)[0]
        raise doc.error(obj, field_name if field_name in obj else key, str(exc)) from None


def _parse_cpu(doc: JsonDocument, obj) -> CpuSpec:
    return _build(
        doc, obj, "cpu", CpuSpec,
        model_name=require(doc, obj, "model_name", str),
        sockets=require(doc, obj, "sockets", int),
        cores_per_socket=require(doc, obj, "cores_per_socket", int),
        base_freq=float(require(doc, obj, "base_freq", _NUM)),
        flops_per_cycle_per_core=require(doc, obj, "flops_per_cycle_per_core", int),
    )


def _parse_gpu(doc: JsonDocument, obj) -> GpuSpec:
    return _build(
        doc, obj, "gpu", GpuSpec,
        model_name=require(doc, obj, "model_name", str),
        count_per_node=require(doc, obj, "count_per_node", int),
        dp_units=require(doc, obj, "dp_units", int),
        boost_freq=float(require(doc, obj, "boost_freq", _NUM)),
    )


def _parse_listed(doc: JsonDocument, obj) -> ListedPeak:
    values = {}
    for key in ("cpu_node_tflops", "gpu_node_tflops", "cpu_class_tflops", "gpu_class_tflops"):
        v = require(doc, obj, key, _NUM, optional=True)
        values[key] = None if v is None else float(v)
    return ListedPeak(**values)


def parse_inventory(doc: JsonDocument) -> ClusterInventory:
    top = doc.data
    classes_raw = require(doc, top, "classes", list)
    classes = []
    names: set[str] = set()
    for entry in classes_raw:
        name = require(doc, entry, "class_name", str)
        if name in names:
            raise doc.error(entry, "class_name", f"duplicate class name '{name}'")
        names.add(name)
        cpu_raw = require(doc, entry, "cpu", dict)
        gpu_raw = require(doc, entry, "gpu", dict, optional=True)
        listed_raw = require(doc, entry, "listed", dict, optional=True)
        classes.append(
            _build(
                doc, entry, "class_name", NodeSpec,
                class_name=name,
                cpu=_parse_cpu(doc, cpu_raw),
                gpu=None if gpu_raw is None else _parse_gpu(doc, gpu_raw),
                memory=float(require(doc, entry, "memory", _NUM)),
                storage=float(require(doc, entry, "storage", _NUM, optional=True) or 0.0),
                node_count=require(doc, entry, "node_count", int),
                listed=None if listed_raw is None else _parse_listed(doc, listed_raw),
            )
        )
    totals_raw = require(doc, top, "listed_totals", dict, optional=True)
    totals = None
    if totals_raw is not None:
        tf = require(doc, totals_raw, "tflops", _NUM, optional=True)
        totals = ListedTotals(
            nodes=require(doc, totals_raw, "nodes", int, optional=True),
            cores=require(doc, totals_raw, "cores", int, optional=True),
            tflops=None if tf is None else float(tf),
        )
    return ClusterInventory(
        classes=tuple(classes),
        listed_totals=totals,
        interconnect=require(doc, top, "interconnect", str, optional=True) or "",
        name=require(doc, top, "name", str, optional=True) or "",
    )


def load_inventory(path: str | Path) -> ClusterInventory:
    """Read and validate an inventory JSON file."""
    return parse_inventory(JsonDocument.load(path))
