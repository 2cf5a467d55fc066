"""Ordered simulation event records and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

CATEGORIES = ("test", "fault", "bypass", "idr", "alert", "decision")


@dataclass(frozen=True)
class Event:
    time: float
    category: str
    subject: str
    detail: str = ""

    def fields(self) -> dict[str, str]:
        """Parse ``key=value`` pairs out of the detail text."""
        out = {}
        for part in self.detail.split():
            if "=" in part:
                k, v = part.split("=", 1)
                out[k] = v
        return out


class EventLog:
    def __init__(self):
        self.events: list[Event] = []

    def add(self, time: float, category: str, subject: str, detail: str = "") -> Event:
        if category not in CATEGORIES:
            raise ValueError(f"unknown event category {category}")
        time = round(float(time), 9)
        if self.events and time < self.events[-1].time:
            raise RuntimeError(
                f"event at {time:.9f} precedes last logged event at {self.events[-1].time:.9f}")
        ev = Event(time, category, subject, detail)
        self.events.append(ev)
        return ev

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def select(self, category=None, subject=None) -> list[Event]:
        return [e for e in self.events
                if (category is None or e.category == category)
                and (subject is None or e.subject == subject)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "category", "subject", "detail"])
        for e in self.events:
            w.writerow([f"{e.time:.9f}", e.category, e.subject, e.detail])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> EventLog:
        log = cls()
        rows = csv.reader(io.StringIO(text))
        next(rows, None)
        for row in rows:
            if row:
                log.add(float(row[0]), row[1], row[2], row[3] if len(row) > 3 else "")
        return log
