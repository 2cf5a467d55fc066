"""Line-oriented scenario files: netlist, chain, buses, IDR, faults, tests, run."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

from . import signals as sg
from .ecu import (DEVICE_KINDS, DRIFT, OPEN, POWER_LOSS, SHORT_GND, SIGNAL_CLASSES, STUCK_HIGH,
                  STUCK_LOW, Device, EcuNetlist, Fault, Link, Node, default_source, inject_fault)
from .errors import DanglingReference, NoAbmNodes, ParseError, SimError
from .fabric import AnalogBus, Segment
from .idr import RotationSchedule
from .manager import TEST_KINDS, TestDescriptor
from .reconfigure import plan_segments
from .tap import DeviceScanModel
from .timing import BEST, WORST

SECTIONS = ("netlist", "chain", "buses", "idr", "faults", "tests", "run")

FAULT_NAMES = {
    "open": OPEN,
    "stuck0": STUCK_LOW,
    "stuck1": STUCK_HIGH,
    "short_gnd": SHORT_GND,
    "power_loss": POWER_LOSS,
}
REPAIR = "repair"

_KV = re.compile(r"(\w+)=(\S+)")
_CALL = re.compile(r"^(\w+)(?:\((.*)\))?$")


@dataclass
class IdrBlock:
    schedule: RotationSchedule
    demand: dict[str, bool]
    log_every: int = 25


@dataclass
class RunBlock:
    duration: float
    seed: int = 0
    tck: float = 16e6
    mode: str = WORST
    bypass: bool = True


@dataclass
class Scenario:
    net: EcuNetlist
    chain: list[DeviceScanModel]
    pairs: int
    segments: dict[str, Segment]
    faults: list[Fault]
    repairs: list[tuple[float, str]]
    tests: list[TestDescriptor]
    run: RunBlock
    idr: IdrBlock | None = None
    name: str = "scenario"
    classes: dict[str, str] = field(default_factory=dict)  # link -> signal class of its driver

    def bus(self) -> AnalogBus:
        return AnalogBus(self.pairs, {k: Segment(s.name, s.pair, s.nodes) for k, s in self.segments.items()})


def parse_waveform(expr: str) -> sg.Waveform:
    m = _CALL.match(expr.strip())
    if not m:
        raise ValueError(f"bad waveform {expr!r}")
    fn, args = m.group(1), m.group(2)
    vals = [float(a) for a in args.split(",")] if args else []
    if fn == "hiz" and not vals:
        return sg.HighZ()
    if fn == "dc" and len(vals) == 1:
        return sg.DC(vals[0])
    if fn == "sine" and len(vals) in (2, 3):
        return sg.Sine(vals[0], vals[1], 0.0, vals[2] if len(vals) == 3 else 0.0)
    if fn == "pwm" and len(vals) == 4:
        return sg.pwm(*vals)
    if fn == "pulses" and len(vals) >= 2:
        return sg.pulses(vals[0], vals[1], *vals[2:])
    raise ValueError(f"bad waveform {expr!r}")


def _yes(v: str) -> bool:
    if v not in ("yes", "no"):
        raise ValueError(f"expected yes or no, got {v!r}")
    return v == "yes"


def _names(v: str) -> list[str]:
    return [x for x in v.split(",") if x]


def _pairs(text: str) -> tuple[str, dict[str, str]]:
    kv = dict(_KV.findall(text))
    rest = _KV.sub("", text).split()
    return " ".join(rest), kv


class _Parser:
    def __init__(self):
        self.net = EcuNetlist()
        self.chain: list[DeviceScanModel] = []
        self.pairs = None
        self.segments: dict[str, Segment] = {}
        self.faults: list[tuple[int, dict]] = []
        self.tests: list[tuple[int, str, dict]] = []
        self.idr = None
        self.run = None
        self.section = None

    def feed(self, lineno: int, line: str):
        if line.startswith("["):
            name = line.strip("[]").strip()
            if not line.endswith("]") or name not in SECTIONS:
                raise ParseError(f"unknown section {line}", lineno)
            self.section = name
            return
        if self.section is None:
            raise ParseError("content before the first section", lineno)
        head, kv = _pairs(line)
        getattr(self, "_" + self.section)(lineno, head.split(), kv)

    def _netlist(self, ln, head, kv):
        if len(head) != 2:
            raise ParseError("expected '<node|link|device> <name> key=value ...'", ln)
        what, name = head
        if what == "node":
            cls = kv.get("class")
            if cls not in SIGNAL_CLASSES:
                raise ParseError(f"node {name}: unknown class {cls}", ln)
            src = parse_waveform(kv["source"]) if "source" in kv else default_source(cls)
            bias = float(kv["bias"]) if "bias" in kv else None
            if name in self.net.nodes:
                raise ParseError(f"duplicate node {name}", ln)
            self.net.add_node(Node(name, cls, src, _yes(kv.get("critical", "no")), bias))
        elif what == "link":
            if name in self.net.links:
                raise ParseError(f"duplicate link {name}", ln)
            for end in (kv.get("from"), kv.get("to")):
                if end not in self.net.nodes:
                    raise DanglingReference(f"line {ln}: link {name} names unknown node {end}")
            self.net.add_link(Link(name, kv["from"], kv["to"], _yes(kv.get("abm", "no"))))
        elif what == "device":
            if name in self.net.devices:
                raise ParseError(f"duplicate device {name}", ln)
            if kv.get("kind") not in DEVICE_KINDS:
                raise ParseError(f"device {name}: unknown kind {kv.get('kind')}", ln)
            ports = _names(kv.get("ports", ""))
            for p in ports:
                if p not in self.net.nodes:
                    raise DanglingReference(f"line {ln}: device {name} names unknown node {p}")
            self.net.add_device(Device(name, kv["kind"], tuple(ports)))
        else:
            raise ParseError(f"unknown netlist entry {what}", ln)

    def _chain(self, ln, head, kv):
        if len(head) != 2 or head[0] != "device":
            raise ParseError("expected 'device <name> ir=<bits> cells=<count>'", ln)
        if any(d.name == head[1] for d in self.chain):
            raise ParseError(f"duplicate chain device {head[1]}", ln)
        self.chain.append(DeviceScanModel(head[1], int(kv["ir"]), int(kv["cells"])))

    def _buses(self, ln, head, kv):
        if not head:
            self.pairs = int(kv["pairs"])
            return
        if len(head) != 2 or head[0] != "segment":
            raise ParseError("expected 'pairs=<n>' or 'segment <name> pair=<i> nodes=...'", ln)
        name = head[1]
        if name in self.segments:
            raise ParseError(f"duplicate segment {name}", ln)
        nodes = _names(kv.get("nodes", ""))
        for n in nodes:
            if n not in self.net.nodes:
                raise DanglingReference(f"line {ln}: segment {name} names unknown node {n}")
        self.segments[name] = Segment(name, int(kv["pair"]), tuple(nodes))

    def _idr(self, ln, head, kv):
        if head:
            raise ParseError("idr takes key=value pairs only", ln)
        drivers = _names(kv["drivers"])
        logicals = _names(kv["logicals"])
        for d in drivers:
            if d not in self.net.devices:
                raise DanglingReference(f"line {ln}: idr driver {d} is not a device")
        sched = RotationSchedule(tuple(drivers), tuple(logicals), float(kv.get("freq", 100)))
        states = [_yes(v) for v in _names(kv.get("demand", ",".join(["yes"] * len(logicals))))]
        if len(states) != len(logicals):
            raise ParseError("idr demand must list one yes/no per logical", ln)
        self.idr = IdrBlock(sched, dict(zip(logicals, states)), int(kv.get("log_every", 25)))

    def _faults(self, ln, head, kv):
        if head:
            raise ParseError("fault lines take key=value pairs only", ln)
        self.faults.append((ln, kv))

    def _tests(self, ln, head, kv):
        if len(head) != 2 or head[0] != "test":
            raise ParseError("expected 'test <id> kind=... target=... period=...'", ln)
        if any(t[1] == head[1] for t in self.tests):
            raise ParseError(f"duplicate test {head[1]}", ln)
        self.tests.append((ln, head[1], kv))

    def _run(self, ln, head, kv):
        if head:
            raise ParseError("run takes key=value pairs only", ln)
        mode = kv.get("mode", WORST)
        if mode not in (BEST, WORST):
            raise ParseError(f"unknown mode {mode}", ln)
        seed = int(kv.get("seed", 0))
        if not 0 <= seed < 2**64:
            raise ParseError("seed must be a 64-bit unsigned integer", ln)
        self.run = RunBlock(float(kv["duration"]), seed, float(kv.get("tck", 16e6)), mode,
                            _yes(kv.get("bypass", "yes")))
        if not self.run.duration > 0:
            raise ParseError("duration must be positive", ln)


def _fault(net, ln, kv):
    if "at" not in kv or "kind" not in kv or "target" not in kv:
        raise ParseError("fault needs at=, kind= and target=", ln)
    target = kv["target"]
    try:
        net.target_type(target)
    except SimError:
        raise DanglingReference(f"line {ln}: fault targets unknown {target}") from None
    at = float(kv["at"])
    kind = kv["kind"]
    if kind == REPAIR:
        return None, (at, target)
    gain = 1.0
    if kind.startswith("drift:"):
        gain = float(kind.split(":", 1)[1])
        kind = DRIFT
    elif kind in FAULT_NAMES:
        kind = FAULT_NAMES[kind]
    else:
        raise ParseError(f"unknown fault kind {kind}", ln)
    return Fault(at, kind, target, gain), None


def _test(net, segments, ln, tid, kv):
    kind = kv.get("kind")
    if kind not in TEST_KINDS:
        raise ParseError(f"test {tid}: unknown kind {kind}", ln)
    targets = tuple(_names(kv.get("target", "")))
    for n in targets:
        if n not in net.nodes:
            raise DanglingReference(f"line {ln}: test {tid} names unknown node {n}")
    owners = {s.name for s in segments.values() for n in targets if n in s.nodes}
    if len(owners) != 1 or any(not any(n in s.nodes for s in segments.values()) for n in targets):
        raise ParseError(f"test {tid}: targets must share one bus segment", ln)
    link = None
    if kind == "interconnect":
        if len(targets) != 2:
            raise ParseError(f"test {tid}: interconnect needs two targets", ln)
        for l in net.links.values():
            if {l.driver, l.receiver} == set(targets):
                link = l.name
        if link is None:
            raise DanglingReference(f"line {ln}: no link joins {targets[0]} and {targets[1]}")
    return TestDescriptor(
        id=tid, kind=kind, targets=targets, period=float(kv["period"]), segment=owners.pop(),
        ref=float(kv["ref"]) if "ref" in kv else None, tol=float(kv["tol"]) if "tol" in kv else None,
        link=link, window=float(kv["window"]) if "window" in kv else None)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    p = _Parser()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            p.feed(lineno, line)
        except (ParseError, DanglingReference):
            raise
        except (KeyError, ValueError, TypeError, SimError) as exc:
            msg = f"missing {exc.args[0]}=" if isinstance(exc, KeyError) else str(exc)
            raise ParseError(msg, lineno) from None
    if p.run is None:
        raise ParseError("missing [run] section")
    net = p.net
    pairs = p.pairs if p.pairs is not None else max(1, len(p.segments))
    segments = p.segments
    if not segments:
        try:
            segments = plan_segments(net, pairs)
        except NoAbmNodes:
            segments = {}
    try:
        AnalogBus(pairs, segments)
    except ValueError as exc:
        raise ParseError(str(exc)) from None

    faults, repairs = [], []
    for ln, kv in p.faults:
        try:
            f, r = _fault(net, ln, kv)
        except ValueError as exc:
            raise ParseError(str(exc), ln) from None
        if f is not None:
            try:
                inject_fault(net, f)
            except SimError as exc:
                raise ParseError(str(exc), ln) from None
            faults.append(f)
        else:
            repairs.append(r)
    tests = []
    for ln, tid, kv in p.tests:
        try:
            tests.append(_test(net, segments, ln, tid, kv))
        except (KeyError, ValueError, TypeError) as exc:
            msg = f"missing {exc.args[0]}=" if isinstance(exc, KeyError) else str(exc)
            raise ParseError(f"test {tid}: {msg}", ln) from None
    classes = {l.name: net.nodes[l.driver].signal_class for l in net.links.values()}
    return Scenario(net, p.chain, pairs, segments, faults, sorted(repairs), tests, p.run, p.idr,
                    name, classes)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        text = fh.read()
    stem = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return parse_scenario(text, stem)


def bundled_names() -> list[str]:
    root = resources.files("ecuscan") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def bundled_text(name: str) -> str:
    return (resources.files("ecuscan") / "scenarios" / f"{name}.scn").read_text()


def load_bundled(name: str) -> Scenario:
    return parse_scenario(bundled_text(name), name)
