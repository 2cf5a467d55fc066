"""Fault avoidance by linking AT1 to AT2 around a failed interconnect."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .ecu import SENSOR_KINDS, EcuNetlist, Override
from .errors import CapacityExhausted, NoAbmAccess, NoAbmNodes, SegmentBusy
from .fabric import AT1, AT2, AnalogBus, Segment


@dataclass
class BypassAssignment:
    interconnect: str
    pair_index: int
    since: float


def capacity(buses: int) -> int:
    """Simultaneous bypasses supported by `buses` individual bus lines."""
    if buses < 0:
        raise ValueError("bus count must be >= 0")
    return buses // 2


def abm_nodes(net: EcuNetlist) -> list[str]:
    out = []
    for link in net.links.values():
        if link.has_abm:
            for n in (link.driver, link.receiver):
                if n not in out:
                    out.append(n)
    return out


def plan_segments(net: EcuNetlist, pairs: int, nodes=None) -> dict[str, Segment]:
    """Split ABM nodes into one segment per bus pair.

    With two or more pairs, sensor-side nodes get segment 0 to themselves
    and the rest are dealt round-robin over the remaining segments. Both
    ends of a link always land in the same segment.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    nodes = list(nodes) if nodes is not None else abm_nodes(net)
    if not nodes:
        raise NoAbmNodes("no nodes with analogue boundary access")
    sensor_ports = {p for d in net.devices.values() if d.kind in SENSOR_KINDS for p in d.ports}

    groups = _link_groups(net, nodes)
    buckets: list[list[str]] = [[] for _ in range(pairs)]
    if pairs == 1:
        buckets[0] = list(nodes)
    else:
        sensors = [g for g in groups if any(n in sensor_ports for n in g)]
        others = [g for g in groups if g not in sensors]
        for g in sensors:
            buckets[0].extend(g)
        targets = list(range(1, pairs)) if sensors else list(range(pairs))
        for i, g in enumerate(others):
            buckets[targets[i % len(targets)]].extend(g)
    return {f"seg{i}": Segment(f"seg{i}", i, tuple(b)) for i, b in enumerate(buckets)}


def _link_groups(net, nodes):
    # union of nodes joined by links so a link never straddles two segments
    groups: list[list[str]] = []
    where = {}
    for n in nodes:
        where[n] = len(groups)
        groups.append([n])
    for link in net.links.values():
        a, b = link.driver, link.receiver
        if a in where and b in where and where[a] != where[b]:
            ga, gb = where[a], where[b]
            groups[ga].extend(groups[gb])
            for m in groups[gb]:
                where[m] = ga
            groups[gb] = []
    return [g for g in groups if g]


class Reconfigurer:
    """Tracks bypass assignments and the FIFO of requests that could not be met."""

    def __init__(self, bus: AnalogBus, net: EcuNetlist):
        self.bus = bus
        self.net = net
        self.active: dict[int, BypassAssignment] = {}
        self.busy: dict[int, str] = {}  # pair -> reason for pairs consumed outside bypass
        self.pending: deque[str] = deque()

    @property
    def capacity(self) -> int:
        return capacity(self.bus.bus_lines)

    @property
    def in_use(self) -> int:
        return sum(1 for p in range(self.bus.pairs) if not self.pair_free(p))

    def pair_free(self, pair: int) -> bool:
        return pair not in self.active and pair not in self.busy and not self.bus.linked[pair]

    def segment_for_link(self, name: str) -> Segment:
        link = self.net.links[name]
        if not link.has_abm:
            raise NoAbmAccess(f"{name} has no analogue boundary access")
        seg_a = self.bus.segment_of(link.driver)
        seg_b = self.bus.segment_of(link.receiver)
        if seg_a is None or seg_b is None or seg_a is not seg_b:
            raise NoAbmAccess(f"{name} endpoints are not on one bus segment")
        return seg_a

    def apply_bypass(self, a: BypassAssignment) -> BypassAssignment:
        link = self.net.links[a.interconnect]
        seg = self.segment_for_link(a.interconnect)
        if seg.pair != a.pair_index:
            raise ValueError(f"{a.interconnect} belongs to pair {seg.pair}, not {a.pair_index}")
        if not self.pair_free(a.pair_index):
            raise SegmentBusy(f"pair {a.pair_index} of {seg.name} already in use")
        if self.in_use >= self.capacity:
            raise CapacityExhausted(f"all {self.capacity} bypass slots in use")
        self.bus.detach_all(a.pair_index)
        self.bus.link(a.pair_index)
        self.bus.attach(a.pair_index, AT1, link.driver, "drive")
        self.bus.attach(a.pair_index, AT2, link.receiver, "receive")
        self.net.add_override(link.receiver, Override(since=a.since, from_node=link.driver))
        self.active[a.pair_index] = a
        return a

    def request(self, interconnect: str, t: float) -> BypassAssignment:
        seg = self.segment_for_link(interconnect)
        return self.apply_bypass(BypassAssignment(interconnect, seg.pair, t))

    def release(self, interconnect: str, t: float) -> BypassAssignment | None:
        for pair, a in list(self.active.items()):
            if a.interconnect == interconnect:
                link = self.net.links[interconnect]
                self.net.end_override(link.receiver, t)
                self.bus.detach_all(pair)
                del self.active[pair]
                return a
        return None

    def bypassed(self, interconnect: str) -> bool:
        return any(a.interconnect == interconnect for a in self.active.values())


def apply_bypass(bus: AnalogBus, a: BypassAssignment, net: EcuNetlist) -> Reconfigurer:
    """One-shot bypass on a fresh reconfigurer; see Reconfigurer.apply_bypass."""
    r = Reconfigurer(bus, net)
    r.apply_bypass(a)
    return r
