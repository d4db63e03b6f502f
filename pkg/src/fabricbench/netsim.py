"""Flow-level simulation of all-pairs ping-pong over a fat tree.

Rates come from max-min fair sharing computed by progressive filling in
exact rational arithmetic; results are rounded towards zero when converted
to floats so per-link sums never exceed capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from fabricbench import analysis
from fabricbench.errors import ValidationError
from fabricbench.matrix import BandwidthMatrix
from fabricbench.topology import FatTreeTopology, Flow, route

SERIAL = "serial"
PARALLEL = "parallel"
MODES = (SERIAL, PARALLEL)


def progressive_fill(routes: Sequence[Sequence[int]], capacities: Mapping[int, float]) -> list[Fraction]:
    """Max-min fair rates for flows given as link-id sequences.

    All unfrozen flows rise together until a link saturates; flows crossing
    saturated links freeze (links taken in ascending id order), then repeat.
    """
    residual = {}
    for flow_id, links in enumerate(routes):
        if not links:
            raise ValidationError(f"flow {flow_id} has an empty route")
        for link in links:
            if link not in capacities:
                raise ValidationError(f"flow {flow_id} uses unknown link {link}")
            if link not in residual:
                cap = capacities[link]
                if not cap > 0:
                    raise ValidationError(f"link {link} capacity must be > 0")
                residual[link] = Fraction(cap)

    rates = [Fraction(0)] * len(routes)
    on_link: dict[int, set[int]] = {link: set() for link in residual}
    for flow_id, links in enumerate(routes):
        for link in set(links):
            on_link[link].add(flow_id)
    # multiplicity matters if a route lists the same link twice
    uses = [{link: list(links).count(link) for link in set(links)} for links in routes]
    load = {link: sum(uses[f][link] for f in flows) for link, flows in on_link.items()}

    active = set(range(len(routes)))
    while active:
        inc = min(residual[link] / load[link] for link in sorted(load) if load[link] > 0)
        for f in active:
            rates[f] += inc
        for link in load:
            if load[link]:
                residual[link] -= inc * load[link]
        for link in sorted(load):
            if load[link] > 0 and residual[link] == 0:
                for f in sorted(on_link[link] & active):
                    active.discard(f)
                    for l2, m in uses[f].items():
                        load[l2] -= m
    return rates


def to_float_floor(q: Fraction) -> float:
    """Nearest float not above ``q``."""
    f = float(q)
    if Fraction(f) > q:
        f = math.nextafter(f, -math.inf)
    return f


def maxmin_allocate(topo: FatTreeTopology, flows: Sequence[Flow]) -> dict[str, float]:
    """Max-min fair rate (GB/s) per flow id over the topology's directed links."""
    routes = [route(topo, f.src, f.dst).links for f in flows]
    caps = {link.id: link.capacity for link in topo.links}
    rates = progressive_fill(routes, caps)
    out: dict[str, float] = {}
    for flow, rate in zip(flows, rates):
        if flow.id in out:
            raise ValidationError(f"duplicate flow id {flow.id!r}")
        out[flow.id] = to_float_floor(rate)
    return out


@dataclass(frozen=True)
class SimPlan:
    topo: FatTreeTopology
    msg_size: int = 1 << 20  # bytes
    mode: str = SERIAL
    per_message_latency: float = 1.0  # µs, fixed protocol overhead per message
    background_flows: tuple[Flow, ...] = field(default_factory=tuple)
    max_concurrent: int | None = None  # pairs per batch in parallel mode

    def __post_init__(self):
        if self.msg_size <= 0:
            raise ValidationError("msg_size must be > 0")
        if self.per_message_latency < 0:
            raise ValidationError("per_message_latency must be >= 0")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_concurrent is not None and self.max_concurrent < 1:
            raise ValidationError("max_concurrent must be >= 1")
        object.__setattr__(self, "background_flows", tuple(self.background_flows))
        for flow in self.background_flows:
            self.topo.check_node(flow.src)
            self.topo.check_node(flow.dst)


def _pair_batches(plan: SimPlan) -> list[list[tuple[int, int]]]:
    n = plan.topo.nodes
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if plan.mode == SERIAL:
        return [[p] for p in pairs]
    size = plan.max_concurrent or len(pairs) or 1
    return [pairs[k : k + size] for k in range(0, len(pairs), size)]


def simulate(plan: SimPlan) -> BandwidthMatrix:
    """Serial mode measures each pair alone; parallel mode runs all pairs at once.

    Each pair is a ping flow and a pong flow.  The round trip is
    ``2*latency + msg/r_ping + msg/r_pong`` and the reported bandwidth is the
    one-way payload rate ``msg / (round_trip / 2)``.
    """
    topo = plan.topo
    matrix = BandwidthMatrix(nodes=tuple(str(i) for i in range(topo.nodes)), mode=plan.mode, msg_size=plan.msg_size)
    caps = {link.id: link.capacity for link in topo.links}
    bg_routes = [route(topo, f.src, f.dst).links for f in plan.background_flows]
    latency_s = plan.per_message_latency * 1e-6
    for batch in _pair_batches(plan):
        routes = []
        for i, j in batch:
            routes.append(route(topo, i, j).links)
            routes.append(route(topo, j, i).links)
        rates = progressive_fill(routes + bg_routes, caps)
        for k, (i, j) in enumerate(batch):
            r_ping = to_float_floor(rates[2 * k]) * 1e9
            r_pong = to_float_floor(rates[2 * k + 1]) * 1e9
            rtt = 2 * latency_s + plan.msg_size / r_ping + plan.msg_size / r_pong
            matrix.add(str(i), str(j), plan.msg_size / (rtt / 2) / 1e9, rtt)
    return matrix


def histogram_of(matrix: BandwidthMatrix, bins: int = 20) -> analysis.Histogram:
    return analysis.build_histogram(matrix.bandwidths(), bins=bins)
