"""Two-level (leaf/spine) fat-tree fabric model.

Every cable is full duplex and appears as two directed links, each with the
configured capacity.  Link ids are assigned per cable: ``2*c`` carries
traffic towards the spines, ``2*c + 1`` away from them.  Node cables come
first (cable ``i`` joins node ``i`` to its leaf), followed by the leaf-spine
cables in (leaf, spine, parallel index) order.

Routing is static destination-modulo: a cross-leaf flow to node ``d`` climbs
to spine ``d % spines`` over parallel cable ``(d // spines) % uplinks``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from fabricbench.errors import ValidationError
from fabricbench.jsonfile import JsonDocument, require

EDR_LINK_CAPACITY = 12.5  # GB/s, 100 Gbit/s

UP = 0
DOWN = 1


@dataclass(frozen=True)
class Link:
    id: int
    src: str  # endpoint names: "n3", "l0", "s1"
    dst: str
    capacity: float  # GB/s
    kind: str  # "node" or "uplink" (the cable kind)


@dataclass(frozen=True)
class FatTreeTopology:
    leaves: int
    spines: int
    nodes_per_leaf: int
    uplinks_per_leaf_per_spine: int = 1
    link_capacity: float = EDR_LINK_CAPACITY
    links: tuple[Link, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("leaves", "spines", "nodes_per_leaf", "uplinks_per_leaf_per_spine"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValidationError(f"{name} must be an integer >= 1, got {value!r}")
        if not self.link_capacity > 0:
            raise ValidationError("link_capacity must be > 0")
        links = []
        cap = float(self.link_capacity)
        for node in range(self.nodes):
            leaf = self.leaf_of(node)
            links.append(Link(len(links), f"n{node}", f"l{leaf}", cap, "node"))
            links.append(Link(len(links), f"l{leaf}", f"n{node}", cap, "node"))
        for leaf in range(self.leaves):
            for spine in range(self.spines):
                for k in range(self.uplinks_per_leaf_per_spine):
                    links.append(Link(len(links), f"l{leaf}", f"s{spine}", cap, "uplink"))
                    links.append(Link(len(links), f"s{spine}", f"l{leaf}", cap, "uplink"))
        object.__setattr__(self, "links", tuple(links))

    @property
    def nodes(self) -> int:
        return self.leaves * self.nodes_per_leaf

    @property
    def node_cable_count(self) -> int:
        return self.nodes

    @property
    def uplink_cable_count(self) -> int:
        return self.leaves * self.spines * self.uplinks_per_leaf_per_spine

    def leaf_of(self, node: int) -> int:
        return node // self.nodes_per_leaf

    def check_node(self, node: int) -> None:
        if not isinstance(node, int) or isinstance(node, bool) or not 0 <= node < self.nodes:
            raise ValidationError(f"unknown node id {node!r} (topology has {self.nodes} nodes)")

    def node_link(self, node: int, direction: int) -> int:
        return 2 * node + direction

    def uplink(self, leaf: int, spine: int, k: int, direction: int) -> int:
        cable = self.nodes + (leaf * self.spines + spine) * self.uplinks_per_leaf_per_spine + k
        return 2 * cable + direction

    def to_dict(self) -> dict:
        return {
            "leaves": self.leaves,
            "spines": self.spines,
            "nodes_per_leaf": self.nodes_per_leaf,
            "uplinks_per_leaf_per_spine": self.uplinks_per_leaf_per_spine,
            "link_capacity": self.link_capacity,
        }


def build_fat_tree(
    leaves: int,
    spines: int,
    nodes_per_leaf: int,
    uplinks_per_leaf_per_spine: int = 1,
    link_capacity: float = EDR_LINK_CAPACITY,
) -> FatTreeTopology:
    return FatTreeTopology(leaves, spines, nodes_per_leaf, uplinks_per_leaf_per_spine, link_capacity)


@dataclass(frozen=True)
class Route:
    src: int
    dst: int
    links: tuple[int, ...]

    def spine(self, topo: FatTreeTopology) -> int | None:
        if len(self.links) != 4:
            return None
        return int(topo.links[self.links[1]].dst[1:])


def route(topo: FatTreeTopology, src: int, dst: int) -> Route:
    topo.check_node(src)
    topo.check_node(dst)
    if src == dst:
        return Route(src, dst, ())
    src_leaf, dst_leaf = topo.leaf_of(src), topo.leaf_of(dst)
    if src_leaf == dst_leaf:
        return Route(src, dst, (topo.node_link(src, UP), topo.node_link(dst, DOWN)))
    spine = dst % topo.spines
    k = (dst // topo.spines) % topo.uplinks_per_leaf_per_spine
    return Route(
        src,
        dst,
        (
            topo.node_link(src, UP),
            topo.uplink(src_leaf, spine, k, UP),
            topo.uplink(dst_leaf, spine, k, DOWN),
            topo.node_link(dst, DOWN),
        ),
    )


def all_pair_routes(topo: FatTreeTopology) -> list[Route]:
    n = topo.nodes
    return [route(topo, s, d) for s in range(n) for d in range(n) if s != d]


def oversubscription_ratio(topo: FatTreeTopology) -> float:
    """Leaf down-capacity over leaf up-capacity (uniform link capacity)."""
    return topo.nodes_per_leaf / (topo.spines * topo.uplinks_per_leaf_per_spine)


@dataclass(frozen=True)
class Flow:
    id: str
    src: int
    dst: int
    demand: float | None = None  # bytes; None means unbounded

    def __post_init__(self):
        if self.src == self.dst:
            raise ValidationError(f"flow {self.id}: src and dst must differ")
        if self.demand is not None and not self.demand > 0:
            raise ValidationError(f"flow {self.id}: demand must be > 0 or unbounded")


@dataclass(frozen=True)
class LinkLoad:
    link: int
    flows: int
    demand: float  # bytes; inf if any unbounded flow crosses the link


def contention_map(topo: FatTreeTopology, flows: Iterable[Flow]) -> list[LinkLoad]:
    """Number of flows (and summed demand) crossing every directed link."""
    counts: Counter[int] = Counter()
    demand: dict[int, float] = {}
    for flow in flows:
        for link in route(topo, flow.src, flow.dst).links:
            counts[link] += 1
            extra = float("inf") if flow.demand is None else float(flow.demand)
            demand[link] = demand.get(link, 0.0) + extra
    return [LinkLoad(link.id, counts[link.id], demand.get(link.id, 0.0)) for link in topo.links]


def spine_usage(topo: FatTreeTopology, routes: Sequence[Route]) -> list[int]:
    usage = [0] * topo.spines
    for r in routes:
        s = r.spine(topo)
        if s is not None:
            usage[s] += 1
    return usage


def load_topology(path: str | Path) -> FatTreeTopology:
    doc = JsonDocument.load(path)
    obj = doc.data
    values = {
        "leaves": require(doc, obj, "leaves", int),
        "spines": require(doc, obj, "spines", int),
        "nodes_per_leaf": require(doc, obj, "nodes_per_leaf", int),
        "uplinks_per_leaf_per_spine": require(doc, obj, "uplinks_per_leaf_per_spine", int),
        "link_capacity": float(require(doc, obj, "link_capacity", (int, float))),
    }
    try:
        return FatTreeTopology(**values)
    except ValidationError as exc:
        key = str(exc).split(" ", 1)[0]
        raise doc.error(obj, key if key in obj else None, str(exc)) from None


def load_flows(path: str | Path, topo: FatTreeTopology | None = None) -> list[Flow]:
    """Read ``{"flows": [{"id", "src", "dst", "demand"?}, ...]}``."""
    doc = JsonDocument.load(path)
    flows = []
    for i, entry in enumerate(require(doc, doc.data, "flows", list)):
        fid = require(doc, entry, "id", (str, int), optional=True)
        src = require(doc, entry, "src", int)
        dst = require(doc, entry, "dst", int)
        demand = require(doc, entry, "demand", (int, float), optional=True)
        try:
            flow = Flow(str(fid if fid is not None else f"bg{i}"), src, dst, demand)
            if topo is not None:
                topo.check_node(src)
                topo.check_node(dst)
        except ValidationError as exc:
            raise doc.error(entry, None, str(exc)) from None
        flows.append(flow)
    return flows
