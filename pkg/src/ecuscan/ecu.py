"""The ECU under test: nodes, interconnects, devices and injected faults."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import signals as sg
from .errors import NotADriver, UnknownNode, UnknownTarget
from .fabric import abm_transfer

LOGIC_HIGH = 3.5
LOGIC_THRESHOLD = 1.75
BIAS_LEVEL = 0.5

SIGNAL_CLASSES = ("digital_high", "digital_low", "pull_up", "pull_down", "pwm", "analog_ground", "hall")
DEVICE_KINDS = ("lamp", "buzzer", "hs_driver", "ls_driver", "hall", "switch", "mcu", "motor")
DRIVER_KINDS = ("hs_driver", "ls_driver")
SENSOR_KINDS = ("hall", "switch")

OPEN = "open_interconnect"
STUCK_LOW = "stuck_low"
STUCK_HIGH = "stuck_high"
SHORT_GND = "short_to_ground"
DRIFT = "parametric_drift"
POWER_LOSS = "power_loss"
FAULT_KINDS = (OPEN, STUCK_LOW, STUCK_HIGH, SHORT_GND, DRIFT, POWER_LOSS)


def default_source(signal_class: str) -> sg.Waveform:
    """Nominal source for a node class when the scenario gives none."""
    return {
        "digital_high": sg.DC(LOGIC_HIGH),
        "digital_low": sg.DC(0.0),
        "pwm": sg.PWM(0.0, LOGIC_HIGH, 1000.0, 0.6),
        "analog_ground": sg.DC(0.0),
    }.get(signal_class, sg.HighZ())


@dataclass
class Node:
    name: str
    signal_class: str
    source: sg.Waveform
    critical: bool = False
    bias: float | None = None

    @property
    def pull(self) -> float | None:
        if self.signal_class == "pull_up":
            return LOGIC_HIGH
        if self.signal_class == "pull_down":
            return 0.0
        return None


@dataclass
class Link:
    name: str
    driver: str
    receiver: str
    has_abm: bool = False


@dataclass
class Device:
    name: str
    kind: str
    ports: tuple[str, ...]


@dataclass(frozen=True)
class Fault:
    onset: float
    kind: str
    target: str
    gain: float = 1.0
    until: float | None = None  # set when the scenario repairs the target

    def __post_init__(self):
        if self.onset < 0:
            raise ValueError("fault onset must be >= 0")
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind}")

    def active_at(self, t: float) -> bool:
        return self.onset <= t and (self.until is None or t < self.until)


@dataclass
class Override:
    """Bus-driven replacement of a node's signal from `since` until `until`."""

    since: float
    waveform: sg.Waveform | None = None
    from_node: str | None = None  # bypass: follow this node through two ABM passes
    until: float | None = None


@dataclass
class DriverDiagnostics:
    over_current: bool = False
    over_voltage: bool = False

    @property
    def status_pin(self) -> int:
        return int(self.over_current or self.over_voltage)


@dataclass
class EcuNetlist:
    nodes: dict[str, Node] = field(default_factory=dict)
    links: dict[str, Link] = field(default_factory=dict)
    devices: dict[str, Device] = field(default_factory=dict)
    faults: list[Fault] = field(default_factory=list)
    overrides: dict[str, list[Override]] = field(default_factory=dict)

    def add_node(self, node: Node):
        if node.name in self.nodes:
            raise ValueError(f"duplicate node {node.name}")
        self.nodes[node.name] = node

    def add_link(self, link: Link):
        if link.name in self.links:
            raise ValueError(f"duplicate link {link.name}")
        for end in (link.driver, link.receiver):
            if end not in self.nodes:
                raise UnknownNode(end)
        self.links[link.name] = link

    def add_device(self, dev: Device):
        if dev.name in self.devices:
            raise ValueError(f"duplicate device {dev.name}")
        for port in dev.ports:
            if port not in self.nodes:
                raise UnknownNode(port)
        self.devices[dev.name] = dev

    def target_type(self, name: str) -> str:
        if name in self.links:
            return "link"
        if name in self.nodes:
            return "node"
        if name in self.devices:
            return "device"
        raise UnknownTarget(name)

    def link_into(self, node: str) -> Link | None:
        for link in self.links.values():
            if link.receiver == node:
                return link
        return None

    def links_touching(self, node: str) -> list[Link]:
        return [l for l in self.links.values() if node in (l.driver, l.receiver)]

    def affected_by(self, target: str) -> list[str]:
        """Names (target, nodes, links) whose observations a fault on `target` can change."""
        kind = self.target_type(target)
        names = [target]
        if kind == "link":
            link = self.links[target]
            nodes = [link.driver, link.receiver]
        elif kind == "node":
            nodes = [target]
        else:
            nodes = list(self.devices[target].ports)
        for n in nodes:
            if n not in names:
                names.append(n)
            for link in self.links_touching(n):
                if link.name not in names:
                    names.append(link.name)
        return names

    def inject(self, f: Fault) -> EcuNetlist:
        return inject_fault(self, f)

    def repair(self, target: str, t: float):
        self.target_type(target)
        self.faults = [
            replace(f, until=t) if f.target == target and f.onset <= t and f.until is None else f
            for f in self.faults
        ]

    def add_override(self, node: str, ov: Override):
        if node not in self.nodes:
            raise UnknownNode(node)
        self.overrides.setdefault(node, []).append(ov)

    def end_override(self, node: str, t: float):
        for ov in self.overrides.get(node, []):
            if ov.until is None and ov.since <= t:
                ov.until = t

    def node_faults(self, node: str) -> list[Fault]:
        """Faults that act on `node` directly or through its device."""
        owners = {d.name for d in self.devices.values() if node in d.ports}
        out = []
        for f in self.faults:
            if f.target == node and f.kind != POWER_LOSS:
                out.append(f)
            elif f.target in owners and f.kind in (POWER_LOSS, STUCK_LOW, STUCK_HIGH):
                out.append(f)
        return sorted(out, key=lambda f: f.onset)

    def device_faults(self, device: str) -> list[Fault]:
        return [f for f in self.faults if f.target == device]


def inject_fault(net: EcuNetlist, f: Fault) -> EcuNetlist:
    kind = net.target_type(f.target)
    allowed = {
        OPEN: ("link",),
        STUCK_LOW: ("node", "device"),
        STUCK_HIGH: ("node", "device"),
        SHORT_GND: ("node",),
        DRIFT: ("node",),
        POWER_LOSS: ("device",),
    }[f.kind]
    if kind not in allowed:
        raise UnknownTarget(f"{f.kind} cannot target {kind} {f.target}")
    net.faults.append(f)
    return net


def _over_interval(w, changed, start, end, window):
    """Apply `changed` on [start, end) to `w`, restricted to what `window` can see."""
    t0, t1 = window
    if start >= t1 or (end is not None and end <= t0):
        return w
    out = changed if start <= t0 else sg.Switched(w, changed, start)
    if end is not None and end < t1:
        out = sg.Switched(out, w, end)
    return out


def _faulted(w: sg.Waveform, f: Fault) -> sg.Waveform:
    if f.kind == STUCK_LOW or f.kind == SHORT_GND:
        return sg.DC(0.0)
    if f.kind == STUCK_HIGH:
        return sg.DC(LOGIC_HIGH)
    if f.kind == DRIFT:
        return sg.scaled(w, f.gain)
    if f.kind == POWER_LOSS:
        return sg.HighZ()
    return w


def node_waveform(net: EcuNetlist, node: str, t_window) -> sg.Waveform:
    """Effective waveform of `node` over `t_window` given faults, pulls and overrides."""
    if node not in net.nodes:
        raise UnknownNode(node)
    t0, t1 = t_window
    if not t0 < t1:
        raise ValueError("window must satisfy t0 < t1")
    n = net.nodes[node]
    link = net.link_into(node)
    if link is not None:
        w = node_waveform(net, link.driver, t_window)
        for f in net.faults:
            if f.target == link.name and f.kind == OPEN:
                w = _over_interval(w, sg.HighZ(), f.onset, f.until, t_window)
    else:
        w = n.source
        if n.bias is not None:
            w = sg.Sum(w, sg.DC(n.bias))
    for f in net.node_faults(node):
        w = _over_interval(w, _faulted(w, f), f.onset, f.until, t_window)
    for ov in net.overrides.get(node, []):
        if ov.from_node is not None:
            src = node_waveform(net, ov.from_node, t_window)
            repl = abm_transfer(abm_transfer(src))
        else:
            repl = abm_transfer(ov.waveform)
        w = _over_interval(w, repl, ov.since, ov.until, t_window)
    pull = n.pull
    return sg.resolve_highz(w, pull if pull is not None else 0.0)


def driver_diagnostic(net: EcuNetlist, device: str, t: float) -> DriverDiagnostics:
    """Smart-driver status: short on the output trips over-current, stuck-high supply trips over-voltage."""
    if device not in net.devices:
        raise UnknownTarget(device)
    dev = net.devices[device]
    if dev.kind not in DRIVER_KINDS:
        raise NotADriver(f"{device} is a {dev.kind}")
    diag = DriverDiagnostics()
    out = dev.ports[0] if dev.ports else None
    supply = dev.ports[1] if len(dev.ports) > 1 else None
    for f in net.faults:
        if not f.active_at(t):
            continue
        if f.target == out and f.kind == SHORT_GND:
            diag.over_current = True
        if f.target == supply and f.kind == STUCK_HIGH:
            diag.over_voltage = True
    return diag


def device_output_on(net: EcuNetlist, device: str, t: float, demanded: bool) -> bool:
    """Whether an indicator device actually emits when its drive is `demanded`."""
    for f in net.device_faults(device):
        if f.active_at(t):
            if f.kind in (STUCK_LOW, POWER_LOSS):
                return False
            if f.kind == STUCK_HIGH:
                return True
    dev = net.devices[device]
    if dev.ports:
        for f in net.faults:
            if f.target == dev.ports[0] and f.active_at(t):
                if f.kind in (STUCK_LOW, SHORT_GND):
                    return False
                if f.kind == STUCK_HIGH:
                    return True
    return demanded


def motor_running(net: EcuNetlist, device: str, t: float) -> bool:
    dev = net.devices[device]
    if dev.kind != "motor" or not dev.ports:
        raise UnknownTarget(f"{device} is not a motor with control ports")
    w = node_waveform(net, dev.ports[0], (t, t + 1e-9))
    return sg.sample(w, t) > LOGIC_THRESHOLD
