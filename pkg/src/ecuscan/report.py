"""Post-run summary and invariant checks, computed from the event log alone."""

from __future__ import annotations

from dataclasses import dataclass, field

from .ecu import OPEN
from .eventlog import EventLog
from .measurement import classify_detectability
from .reconfigure import capacity

CLASS_ORDER = ("digital_high", "digital_low", "pull_up", "pull_down", "pwm", "analog_ground", "hall")
DETECTABILITY_LABEL = {"Detectable": "Yes", "Intermittent": "Intermittent", "NotDetectable": "No"}


@dataclass
class FaultRecord:
    target: str
    onset: float
    affects: tuple[str, ...]
    kind: str = ""
    repaired: float | None = None
    detected: float | None = None

    @property
    def latency(self) -> float | None:
        return None if self.detected is None else self.detected - self.onset

    def active_at(self, t: float) -> bool:
        return self.onset <= t and (self.repaired is None or t < self.repaired)


@dataclass
class Report:
    start_decision: str = "NotStarted"
    tests: int = 0
    detections: int = 0
    false_alarms: int = 0
    bypasses: int = 0
    unmet_demands: int = 0
    alerts: int = 0
    faults: list[FaultRecord] = field(default_factory=list)
    loop_rate: float | None = None
    detectability: dict[str, str] = field(default_factory=dict)
    exclusions: list[str] = field(default_factory=list)

    def text(self) -> str:
        lines = [
            f"start decision: {self.start_decision}",
            f"tests run: {self.tests}",
            f"detections: {self.detections}",
            f"false alarms: {self.false_alarms}",
            f"bypasses: {self.bypasses}",
            f"unmet demands: {self.unmet_demands}",
            f"alerts: {self.alerts}",
        ]
        if self.loop_rate is not None:
            lines.append(f"test loop rate: {self.loop_rate:.3f} Hz")
        if self.exclusions:
            lines.append("excluded drivers: " + ", ".join(self.exclusions))
        if self.faults:
            lines.append("faults:")
            for f in self.faults:
                lat = "undetected" if f.latency is None else f"latency {f.latency * 1e3:.3f} ms"
                lines.append(f"  {f.target} at {f.onset:.6f} s: {lat}")
        if self.detectability:
            lines.append("detectability:")
            for cls in sorted(self.detectability, key=_class_order):
                lines.append(f"  {cls:<14} {DETECTABILITY_LABEL[self.detectability[cls]]}")
        return "\n".join(lines) + "\n"


def _class_order(cls):
    return CLASS_ORDER.index(cls) if cls in CLASS_ORDER else len(CLASS_ORDER)


def _faults(log: EventLog) -> list[FaultRecord]:
    out = []
    for e in log.select("fault"):
        f = e.fields()
        if f.get("status") == "repaired":
            for r in out:
                if r.target == e.subject and r.repaired is None:
                    r.repaired = e.time
        else:
            affects = tuple(f.get("affects", e.subject).split(";"))
            out.append(FaultRecord(e.subject, e.time, affects, f.get("kind", "")))
    return out


def _loop_rate(log: EventLog) -> float | None:
    """Sweeps per second from the spacing of repeated runs of each test."""
    seen: dict[str, list[float]] = {}
    for e in log.select("test"):
        seen.setdefault(e.fields().get("id", e.subject), []).append(e.time)
    gaps = []
    for times in seen.values():
        # skip the startup pass, whose spacing is not part of the steady loop
        times = times[1:]
        gaps.extend(b - a for a, b in zip(times, times[1:]))
    if not gaps:
        return None
    return len(gaps) / sum(gaps)


def summarize(log: EventLog) -> Report:
    rep = Report()
    rep.faults = _faults(log)
    for e in log.select("decision", "startup"):
        rep.start_decision = e.fields().get("start", rep.start_decision)
    history: dict[str, list[bool]] = {}
    for e in log.select("test"):
        rep.tests += 1
        f = e.fields()
        failed = f.get("ok") == "0"
        causes = [r for r in rep.faults if r.active_at(e.time) and e.subject in r.affects]
        if failed:
            if causes:
                for r in causes:
                    if r.detected is None:
                        r.detected = e.time
            else:
                rep.false_alarms += 1
        if "class" in f and any(r.kind == OPEN for r in causes):
            history.setdefault(f["class"], []).append(f.get("triggered") == "1")
    for e in log.select("idr"):
        if e.fields().get("action") == "exclude":
            for r in rep.faults:
                if r.target == e.subject and r.active_at(e.time) and r.detected is None:
                    r.detected = e.time
    rep.detections = sum(1 for r in rep.faults if r.detected is not None)
    for e in log.select("bypass"):
        status = e.fields().get("status")
        if status == "applied":
            rep.bypasses += 1
        elif status == "UnmetDemand":
            rep.unmet_demands += 1
    rep.alerts = len(log.select("alert"))
    rep.exclusions = [e.subject for e in log.select("idr") if e.fields().get("action") == "exclude"]
    rep.loop_rate = _loop_rate(log)
    rep.detectability = {cls: classify_detectability(cls, h) for cls, h in history.items()}
    return rep


def check_invariants(log: EventLog, segments: dict | None = None, pairs: int | None = None) -> list[str]:
    """Log-level invariants; returns human-readable violations (empty when clean)."""
    problems = []
    last = None
    for e in log:
        if last is not None and e.time < last:
            problems.append(f"time goes backwards at {e.time:.9f}")
        last = e.time
    linked: dict[str, str] = {}  # pair -> link currently bypassed
    seg_pair = {name: str(s.pair) for name, s in (segments or {}).items()}
    failed_at: dict[str, float] = {}
    faults = _faults(log)
    for e in log:
        f = e.fields()
        if e.category == "bypass" and f.get("status") == "applied":
            linked[f["pair"]] = e.subject
            if pairs is not None and len(linked) > capacity(2 * pairs):
                problems.append(f"bypass count exceeds capacity at {e.time:.9f}")
            if e.subject not in failed_at:
                problems.append(f"bypass of {e.subject} at {e.time:.9f} without a prior failed test")
        elif e.category == "bypass" and f.get("status") == "released":
            linked.pop(f.get("pair"), None)
        elif e.category == "test":
            if seg_pair.get(f.get("segment")) in linked:
                problems.append(f"test {f.get('id')} ran in linked segment {f.get('segment')} at {e.time:.9f}")
            if f.get("ok") == "0":
                failed_at.setdefault(e.subject, e.time)
                if "via" in f:
                    failed_at.setdefault(f["via"], e.time)
                fed = [r for r in faults if e.subject in r.affects]
                if fed and all(r.onset > e.time for r in fed):
                    problems.append(f"detection on {e.subject} at {e.time:.9f} precedes its fault")
    return problems
