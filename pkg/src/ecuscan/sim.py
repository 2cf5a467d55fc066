"""Deterministic discrete-event loop: startup BIST, then monitor, decide and
reconfigure until the run duration, with faults, repairs, IDR rotation and
remote operation as background events."""

from __future__ import annotations

import copy
import heapq
from collections import deque

from . import signals as sg
from .ecu import DRIVER_KINDS, LOGIC_HIGH, LOGIC_THRESHOLD, POWER_LOSS, device_output_on, driver_diagnostic, motor_running
from .errors import AmbiguousProfile, LastDriver, NoAbmAccess, SegmentBusy
from .eventlog import EventLog
from .idr import detect_and_localize, exclude, mapping_at_step
from .manager import REFUSED, TopologyManager
from .scenario import Scenario
from .tap import ScanChain

POLL_PERIOD = 1e-3
EPS = 1e-12

# background event priorities at equal times
_FAULT, _REPAIR, _NOTE, _REMOTE, _IDR = range(5)


class RemoteOperator:
    """Stands in for a dead microcontroller: watches the switch, drives the motor
    through an injected bus signal and stops it on the Hall sensor status."""

    def __init__(self, sim: Simulator, t: float):
        net = sim.net
        by_kind = {}
        for d in net.devices.values():
            by_kind.setdefault(d.kind, d)
        self.sim = sim
        self.switch = by_kind.get("switch")
        self.hall = by_kind.get("hall")
        self.motor = by_kind.get("motor")
        self.state = "wait_switch"
        self.initial = None
        ok = all(d is not None and d.ports for d in (self.switch, self.hall, self.motor))
        if not ok:
            sim.log.add(t, "decision", "remote", "action=remote_unavailable reason=missing_device")
            self.state = "done"
            return
        sim.log.add(t, "decision", "remote", "action=remote_engaged")

    def poll(self, t: float) -> bool:
        """One polling step; returns False once the sequence has finished."""
        sim = self.sim
        mgr = sim.mgr
        try:
            if self.state == "wait_switch":
                level = mgr.probe_dc(self.switch.ports[0], t)
                high = level > LOGIC_THRESHOLD
                if self.initial is None:
                    self.initial = high
                elif high != self.initial:
                    sim.log.add(t, "decision", self.switch.name, f"action=switch_transition level={level:.3f}")
                    self.state = "inject"
            if self.state == "inject":
                mgr.inject_signal(self.motor.ports[0], sg.DC(LOGIC_HIGH), t)
                running = motor_running(sim.net, self.motor.name, t)
                sim.log.add(t, "decision", self.motor.name, f"state={'running' if running else 'off'}")
                self.state = "wait_sensor"
            elif self.state == "wait_sensor":
                level = mgr.probe_dc(self.hall.ports[0], t)
                if level > LOGIC_THRESHOLD:
                    sim.log.add(t, "decision", self.hall.name, f"action=sensor_status level={level:.3f}")
                    mgr.release_injection(self.motor.ports[0], t)
                    running = motor_running(sim.net, self.motor.name, t)
                    sim.log.add(t, "decision", self.motor.name, f"state={'running' if running else 'off'}")
                    self.state = "done"
        except SegmentBusy:
            pass  # try again on the next poll
        except NoAbmAccess as exc:
            sim.log.add(t, "decision", "remote", f"action=remote_unavailable reason={type(exc).__name__}")
            self.state = "done"
        return self.state != "done"


class IdrProcess:
    def __init__(self, sim: Simulator, block):
        self.sim = sim
        self.schedule = block.schedule
        self.demand = block.demand
        self.log_every = block.log_every
        self.history: deque = deque()

    def step(self, k: int, t: float):
        s = self.schedule
        net = self.sim.net
        carried = {drv: lg for lg, drv in mapping_at_step(s, k).items()}
        mid = t + 0.5 / s.frequency
        obs = {d: device_output_on(net, d, mid, bool(self.demand.get(carried.get(d), False)))
               for d in s.active}
        if self.log_every and k % self.log_every == 0:
            m = ";".join(f"{lg}:{drv}" for lg, drv in mapping_at_step(s, k).items())
            self.sim.log.add(t, "idr", "rotation", f"step={k} map={m}")
        self.history.append((k, obs))
        while len(self.history) > s.slots:
            self.history.popleft()
        if len(self.history) < s.slots:
            return
        k0 = self.history[0][0]
        try:
            suspect = detect_and_localize(s, [o for _, o in self.history], self.demand, k0)
        except AmbiguousProfile:
            self.sim.log.add(t, "idr", "rotation", f"action=ambiguous step={k}")
            self.history.clear()
            return
        if suspect is None:
            return
        # the anomaly is only certain once the observed step has ended
        end = (k + 1) / s.frequency
        try:
            self.schedule = exclude(s, suspect)
        except LastDriver:
            self.sim.note(end, "alert", suspect, "critical=0 reason=LastDriver")
        else:
            self.sim.note(end, "idr", suspect, f"action=exclude step={k} active={len(self.schedule.active)}")
        self.history.clear()


class Simulator:
    def __init__(self, scenario: Scenario, seed: int | None = None):
        s = copy.deepcopy(scenario)
        self.scenario = s
        self.net = s.net
        self.seed = s.run.seed if seed is None else seed
        self.log = EventLog()
        self.bus = s.bus()
        chain = ScanChain(s.chain) if s.chain else None
        self.mgr = TopologyManager(self.net, self.bus, chain, s.run.tck, s.run.mode, self.seed,
                                   self.log, auto_bypass=s.run.bypass)
        self.mgr.tests = list(s.tests)
        self.remote = None
        self.idr = IdrProcess(self, s.idr) if s.idr is not None else None
        self._agenda = []
        self._n = 0
        for f in s.faults:
            self._push(f.onset, _FAULT, f)
        for at, target in s.repairs:
            self._push(at, _REPAIR, target)
        if self.idr is not None:
            self._push(0.0, _IDR, 0)
        self._diag = {}

    def _push(self, t, prio, payload):
        heapq.heappush(self._agenda, (t, prio, self._n, payload))
        self._n += 1

    def note(self, t, category, subject, detail):
        """Log an event at a future time, in order with everything else."""
        self._push(t, _NOTE, (category, subject, detail))

    def _next_background(self) -> float | None:
        return self._agenda[0][0] if self._agenda else None

    def background(self, until: float):
        """Handle every background event with time <= until, in time order."""
        dur = self.scenario.run.duration
        while self._agenda and self._agenda[0][0] <= until + EPS:
            t, prio, _, payload = heapq.heappop(self._agenda)
            if prio == _FAULT:
                self._on_fault(t, payload)
            elif prio == _REPAIR:
                self._on_repair(t, payload)
            elif prio == _NOTE:
                self.log.add(t, *payload)
            elif prio == _REMOTE:
                if self.remote.poll(t) and t + POLL_PERIOD <= dur:
                    self._push(t + POLL_PERIOD, _REMOTE, None)
            else:
                k = payload
                self.idr.step(k, t)
                nxt = (k + 1) / self.idr.schedule.frequency
                if nxt <= dur:
                    self._push(nxt, _IDR, k + 1)

    def _on_fault(self, t, f):
        affects = ";".join(self.net.affected_by(f.target))
        gain = f" gain={f.gain:g}" if f.gain != 1.0 else ""
        self.log.add(t, "fault", f.target, f"kind={f.kind}{gain} affects={affects}")
        self._check_diagnostics(t)
        if f.kind == POWER_LOSS and self.net.devices[f.target].kind == "mcu" and self.remote is None:
            self.remote = RemoteOperator(self, t)
            if self.remote.state != "done":
                self._push(t, _REMOTE, None)

    def _on_repair(self, t, target):
        self.net.repair(target, t)
        self.log.add(t, "fault", target, "status=repaired")
        self._check_diagnostics(t)
        for name in self.net.affected_by(target):
            if name in self.net.links and self.mgr.reconf.bypassed(name):
                self.mgr.release_bypass(name, t)
            elif name in self.mgr.reconf.pending:
                self.mgr.reconf.pending.remove(name)
            if name in self.mgr.health.links:
                self.mgr.health.links[name] = "healthy"

    def _check_diagnostics(self, t):
        for dev in self.net.devices.values():
            if dev.kind not in DRIVER_KINDS:
                continue
            pin = driver_diagnostic(self.net, dev.name, t).status_pin
            if pin and not self._diag.get(dev.name):
                self.log.add(t, "alert", dev.name, "critical=0 reason=status_pin")
            self._diag[dev.name] = pin

    def _pick(self, t, due, rr):
        tests = self.mgr.tests
        n = len(tests)
        for k in range(n):
            i = (rr + k) % n
            d = tests[i]
            if due[d.id] <= t + EPS and self.mgr.segment_free(d.segment):
                return i
        return None

    def run(self) -> EventLog:
        dur = self.scenario.run.duration
        self.background(0.0)
        decision, t = self.mgr.run_startup_bist(0.0)
        if decision == REFUSED:
            return self.log
        tests = self.mgr.tests
        due = {d.id: t for d in tests}
        rr = 0
        last = None
        while t < dur:
            self.background(t)
            i = self._pick(t, due, rr) if tests else None
            if i is None:
                waits = [due[d.id] for d in tests if self.mgr.segment_free(d.segment) and due[d.id] > t]
                nb = self._next_background()
                if nb is not None:
                    waits.append(nb)
                if not waits:
                    break
                t = max(t, min(waits))
                continue
            if last is None or i <= last:
                self.mgr.begin_sweep()
            last = i
            d = tests[i]
            r = self.mgr.execute_test(d, t)
            t_end = t + r.t_con + r.cost
            self.background(t_end)
            self.mgr.log_result(d, r, t_end)
            self.mgr.apply_action(self.mgr.handle_result(d, r), t_end)
            due[d.id] = t + d.period
            rr = i + 1
            t = t_end
        self.background(dur)
        return self.log


def run_scenario(s: Scenario, seed: int | None = None) -> EventLog:
    return Simulator(s, seed).run()
