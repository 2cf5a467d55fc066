"""Circuit Topology Manager.

The Test Master keeps the test descriptors and their references, asks the
Test Access Engine (the scan chain) to route the analogue buses, hands the
bus signals to Test Measurement and turns the outcome into an action.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import signals as sg
from .ecu import EcuNetlist, Override, node_waveform
from .errors import CapacityExhausted, NoAbmAccess, NoEdges, NoSignal, SegmentBusy
from .eventlog import EventLog
from .fabric import AT1, AT2, AnalogBus, bus_resolve
from .measurement import (
    ADC_CAPTURE,
    DEFAULT_WINDOW,
    NOISE_BOUND,
    ComparatorConfig,
    MeasurementResult,
    diff_compare,
    measure_dc,
    measure_duty,
    measure_spectrum,
    spectrum_cost,
)
from .reconfigure import Reconfigurer
from .tap import PROBE, ScanChain, configure
from .timing import BEST, WORST

TEST_KINDS = ("dc", "interconnect", "duty", "spectrum")

NOT_STARTED = "NotStarted"
REFUSED = "Refused"
DEGRADED = "Degraded"
RUNNING = "Running"

HEALTHY = "healthy"
FAILED = "failed"
BYPASSED = "bypassed"

NO_ACTION = "NoAction"
REQUEST_BYPASS = "RequestBypass"
CRITICAL_ALERT = "CriticalAlert"
ALERT = "Alert"


@dataclass
class TestDescriptor:
    id: str
    kind: str
    targets: tuple[str, ...]
    period: float
    segment: str
    ref: float | None = None
    tol: float | None = None
    link: str | None = None  # interconnect tests: the monitored link
    window: float | None = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.kind not in TEST_KINDS:
            raise ValueError(f"unknown test kind {self.kind}")
        if not self.period > 0:
            raise ValueError("test period must be positive")
        want = 2 if self.kind == "interconnect" else 1
        if len(self.targets) != want:
            raise ValueError(f"{self.kind} test needs {want} target node(s)")

    @property
    def subject(self) -> str:
        return self.link if self.link else self.targets[0]

    @property
    def t_test(self) -> float:
        if self.kind == "dc":
            return ADC_CAPTURE
        return self.window if self.window is not None else DEFAULT_WINDOW


@dataclass(frozen=True)
class Action:
    kind: str
    subject: str | None = None


@dataclass
class HealthState:
    last: dict[str, MeasurementResult] = field(default_factory=dict)
    links: dict[str, str] = field(default_factory=dict)
    start_decision: str = NOT_STARTED


class TopologyManager:
    def __init__(self, net: EcuNetlist, bus: AnalogBus, chain: ScanChain | None, f_tck: float = 16e6,
                 mode: str = WORST, seed: int = 0, log: EventLog | None = None,
                 comparator: ComparatorConfig = ComparatorConfig(), auto_bypass: bool = True):
        if mode not in (BEST, WORST):
            raise ValueError("mode must be best or worst")
        self.net = net
        self.bus = bus
        self.chain = chain
        self.f_tck = f_tck
        self.mode = mode
        self.rng = np.random.default_rng(seed)
        self.log = log if log is not None else EventLog()
        self.comparator = comparator
        self.auto_bypass = auto_bypass
        self.reconf = Reconfigurer(bus, net)
        self.health = HealthState(links={name: HEALTHY for name in net.links})
        self.tests: list[TestDescriptor] = []
        self._needs_config = True
        self._slots = self._assign_cells()

    # -- test access engine -------------------------------------------------

    def _assign_cells(self):
        """Give every bus-accessible node one boundary cell, in segment order."""
        if self.chain is None or not self.chain.devices:
            return {}
        cells = [(d.name, i) for d in self.chain.devices for i in range(d.boundary_cells)]
        slots = {}
        k = 0
        for seg in self.bus.segments.values():
            for node in seg.nodes:
                slots[node] = cells[k % len(cells)]
                k += 1
        return slots

    def _configure(self, nodes) -> int:
        if self.chain is None or not self.chain.devices:
            return 0
        vectors = {d.name: [0] * d.boundary_cells for d in self.chain.devices}
        for node in nodes:
            if node in self._slots:
                dev, i = self._slots[node]
                vectors[dev][i] = 1
        return configure(self.chain, vectors, PROBE)

    def begin_sweep(self):
        """Best mode reconfigures once per sweep; mark the next test to do it."""
        self._needs_config = True

    def config_time(self, d: TestDescriptor) -> float:
        if self.mode == WORST:
            cycles = self._configure(d.targets)
        elif self._needs_config:
            cycles = self._configure([n for t in self.tests for n in t.targets] or d.targets)
            self._needs_config = False
        else:
            cycles = 0
        return cycles / self.f_tck

    # -- test master ---------------------------------------------------------

    def segment_free(self, segment: str) -> bool:
        return self.reconf.pair_free(self.bus.segments[segment].pair)

    def _seed(self) -> int:
        return int(self.rng.integers(0, 2**63 - 1))

    def _sources(self, node, window):
        return node_waveform(self.net, node, window)

    def execute_test(self, d: TestDescriptor, t: float) -> MeasurementResult:
        """Configure, resolve the buses and measure. The window opens after T_con."""
        seg = self.bus.segments[d.segment]
        if not self.reconf.pair_free(seg.pair):
            raise SegmentBusy(f"segment {d.segment} bus pair is in use")
        t_con = self.config_time(d)
        start = t + t_con
        pair = seg.pair
        self.bus.detach_all(pair)
        if d.kind == "interconnect":
            window = (start, start + d.t_test)
            self.bus.attach(pair, AT1, d.targets[0])
            self.bus.attach(pair, AT2, d.targets[1])
            at1, at2 = bus_resolve(self.bus, pair, window, self._sources)
            self.bus.detach_all(pair)
            hit = diff_compare(at1, at2, self.comparator, window, seed=self._seed())
            r = MeasurementResult(d.id, d.kind, float(hit), "flag", window, d.t_test, hit, t_con)
        else:
            self.bus.attach(pair, AT1, d.targets[0])
            window = (start, start + d.t_test)
            at1, _ = bus_resolve(self.bus, pair, window, self._sources)
            self.bus.detach_all(pair)
            if d.kind == "dc":
                v = measure_dc(at1, window, self._seed(), through_abm=False)
                r = MeasurementResult(d.id, d.kind, v, "V", window, ADC_CAPTURE, t_con=t_con)
            elif d.kind == "duty":
                try:
                    v = measure_duty(at1, window)
                except (NoEdges, ValueError):
                    v = float("nan")  # no usable edges: reported as a failed reading
                r = MeasurementResult(d.id, d.kind, v, "fraction", window, d.t_test, t_con=t_con)
            else:
                try:
                    f, cost = measure_spectrum(at1, window, self._seed(), through_abm=False)
                except (NoSignal, ValueError):
                    f, cost = float("nan"), spectrum_cost(0.0, d.t_test)
                r = MeasurementResult(d.id, d.kind, f, "Hz", (start, start + cost), cost, t_con=t_con)
        self.health.last[d.id] = r
        return r

    def is_critical(self, d: TestDescriptor) -> bool:
        nodes = self.net.nodes
        return any(nodes[n].critical for n in d.targets)

    def evaluate(self, d: TestDescriptor, r: MeasurementResult) -> bool:
        """True when the result is within expectations."""
        if d.kind == "interconnect":
            return not r.triggered
        if d.ref is None:
            return True
        return abs(r.value - d.ref) <= (d.tol or 0.0)

    def handle_result(self, d: TestDescriptor, r: MeasurementResult) -> Action:
        if self.evaluate(d, r):
            return Action(NO_ACTION)
        link = d.link
        if link is None:
            fed = self.net.link_into(d.targets[0])
            link = fed.name if fed is not None and fed.has_abm else None
        if link is not None and self.health.links.get(link) == HEALTHY:
            self.health.links[link] = FAILED
        if self.is_critical(d):
            return Action(CRITICAL_ALERT, link or d.subject)
        if link is not None:
            return Action(REQUEST_BYPASS, link)
        return Action(ALERT, d.subject)

    def log_result(self, d: TestDescriptor, r: MeasurementResult, t_end: float):
        ok = self.evaluate(d, r)
        parts = [f"id={d.id}", f"kind={d.kind}", f"segment={d.segment}"]
        if d.kind == "interconnect":
            cls = self.net.nodes[d.targets[0]].signal_class
            parts += [f"class={cls}", f"triggered={int(r.triggered)}"]
        else:
            parts.append(f"value={r.value:.6f}")
            fed = self.net.link_into(d.targets[0])
            if fed is not None and fed.has_abm:
                parts.append(f"via={fed.name}")
        parts += [f"ok={int(ok)}", f"t_con={r.t_con:.9f}", f"t_test={r.cost:.9f}"]
        self.log.add(t_end, "test", d.subject, " ".join(parts))

    def run_test(self, d: TestDescriptor, t: float) -> tuple[MeasurementResult, Action, float]:
        """Execute, log and act on one test starting at t; returns the end time."""
        r = self.execute_test(d, t)
        t_end = t + r.t_con + r.cost
        self.log_result(d, r, t_end)
        action = self.handle_result(d, r)
        self.apply_action(action, t_end)
        return r, action, t_end

    # -- reconfiguration -----------------------------------------------------

    def apply_action(self, action: Action, t: float):
        if action.kind == NO_ACTION:
            return
        if action.kind == CRITICAL_ALERT:
            self.log.add(t, "alert", action.subject, "critical=1")
        elif action.kind == ALERT:
            self.log.add(t, "alert", action.subject, "critical=0")
            return
        link = action.subject
        if link not in self.net.links or not self.auto_bypass:
            return
        if self.reconf.bypassed(link) or link in self.reconf.pending:
            return
        self.try_bypass(link, t)

    def try_bypass(self, link: str, t: float) -> bool:
        try:
            a = self.reconf.request(link, t)
        except NoAbmAccess as exc:
            self.log.add(t, "bypass", link, f"status=UnmetDemand reason=NoAbmAccess note={_token(exc)}")
            return False
        except (SegmentBusy, CapacityExhausted) as exc:
            self.reconf.pending.append(link)
            self.log.add(t, "bypass", link, f"status=UnmetDemand reason={type(exc).__name__}")
            return False
        self.health.links[link] = BYPASSED
        receiver = self.net.links[link].receiver
        # the receiver now sees the driver through two ABM passes, each with its own noise
        w = node_waveform(self.net, receiver, (t, t + ADC_CAPTURE))
        v = measure_dc(w, (t, t + ADC_CAPTURE), self._seed(), through_abm=False)
        v += float(self.rng.uniform(-NOISE_BOUND, NOISE_BOUND))
        self.log.add(t, "bypass", link, f"status=applied pair={a.pair_index} receiver_v={v:.6f}")
        return True

    def release_bypass(self, link: str, t: float):
        if link in self.reconf.pending:
            self.reconf.pending.remove(link)
        a = self.reconf.release(link, t)
        self.health.links[link] = HEALTHY
        if a is None:
            return
        self.log.add(t, "bypass", link, f"status=released pair={a.pair_index}")
        self.serve_pending(t)

    def serve_pending(self, t: float):
        waiting = list(self.reconf.pending)
        self.reconf.pending.clear()
        for link in waiting:
            seg = self.reconf.segment_for_link(link)
            if self.reconf.pair_free(seg.pair):
                self.try_bypass(link, t)
            else:
                self.reconf.pending.append(link)

    def probe_dc(self, node: str, t: float) -> float:
        """One ADC capture of `node` over its segment's AT1, outside the test schedule."""
        seg = self.bus.segment_of(node)
        if seg is None:
            raise NoAbmAccess(f"{node} has no analogue boundary access")
        if not self.reconf.pair_free(seg.pair):
            raise SegmentBusy(f"segment {seg.name} bus pair is in use")
        window = (t, t + ADC_CAPTURE)
        self.bus.detach_all(seg.pair)
        self.bus.attach(seg.pair, AT1, node)
        at1, _ = bus_resolve(self.bus, seg.pair, window, self._sources)
        self.bus.detach_all(seg.pair)
        return measure_dc(at1, window, self._seed(), through_abm=False)

    def inject_signal(self, node: str, w: sg.Waveform, t: float) -> bool:
        """Drive `node` from AT2 with `w`; holds the segment's pair until released."""
        seg = self.bus.segment_of(node)
        if seg is None:
            raise NoAbmAccess(f"{node} has no analogue boundary access")
        if not self.reconf.pair_free(seg.pair):
            raise SegmentBusy(f"segment {seg.name} bus pair is in use")
        self.bus.detach_all(seg.pair)
        self.bus.attach(seg.pair, AT2, node, "receive")
        self.reconf.busy[seg.pair] = f"inject:{node}"
        self.net.add_override(node, Override(since=t, waveform=w))
        self.log.add(t, "decision", node, f"action=inject pair={seg.pair} level={sg.mean(w, t, t + 1e-6):.3f}")
        return True

    def release_injection(self, node: str, t: float):
        seg = self.bus.segment_of(node)
        self.net.end_override(node, t)
        if seg is not None and self.reconf.busy.get(seg.pair) == f"inject:{node}":
            del self.reconf.busy[seg.pair]
            self.bus.detach_all(seg.pair)
        self.log.add(t, "decision", node, "action=release_injection")
        self.serve_pending(t)

    # -- startup ---------------------------------------------------------------

    def run_startup_bist(self, t: float = 0.0) -> tuple[str, float]:
        """Run every interconnect test once and decide whether the system may start."""
        critical_fail = False
        requests = []
        self.begin_sweep()
        for d in self.tests:
            if d.kind != "interconnect" or not self.segment_free(d.segment):
                continue
            r = self.execute_test(d, t)
            t = t + r.t_con + r.cost
            self.log_result(d, r, t)
            action = self.handle_result(d, r)
            if action.kind == CRITICAL_ALERT:
                critical_fail = True
                self.log.add(t, "alert", action.subject, "critical=1 phase=startup")
            if action.kind != NO_ACTION:
                requests.append(action)
        if critical_fail:
            decision = REFUSED
        elif requests:
            decision = DEGRADED
        else:
            decision = RUNNING
        self.health.start_decision = decision
        self.log.add(t, "decision", "startup", f"start={decision}")
        if decision == DEGRADED:
            for action in requests:
                self.apply_action(action, t)
        return decision, t


def _token(exc) -> str:
    return str(exc).replace(" ", "_")
