"""Integrated Diagnostic Reconfiguration over replicated indicator drivers.

Logical indicators are rotated across identical physical drivers at a fixed
step rate. A stuck driver then shows up as an anomaly that follows the
rotation, which pins it down; the driver is excluded and the indicators
time-share the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import AmbiguousProfile, LastDriver

MIN_FREQUENCY = 85.0
DEFAULT_FREQUENCY = 100.0


@dataclass(frozen=True)
class RotationSchedule:
    drivers: tuple[str, ...]
    logicals: tuple[str, ...]
    frequency: float = DEFAULT_FREQUENCY
    excluded: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "drivers", tuple(self.drivers))
        object.__setattr__(self, "logicals", tuple(self.logicals))
        object.__setattr__(self, "excluded", frozenset(self.excluded))
        if not self.frequency > MIN_FREQUENCY:
            raise ValueError(f"rotation frequency must exceed {MIN_FREQUENCY:g} Hz")
        if len(set(self.drivers)) != len(self.drivers):
            raise ValueError("duplicate driver names")
        if not self.excluded <= set(self.drivers):
            raise ValueError("excluded drivers must be in the driver list")
        if len(self.drivers) - len(self.excluded) < 1:
            raise ValueError("at least one driver must remain active")

    @property
    def active(self) -> tuple[str, ...]:
        return tuple(d for d in self.drivers if d not in self.excluded)

    @property
    def slots(self) -> int:
        """Steps in one rotation period."""
        return max(len(self.logicals), len(self.active))

    @property
    def period(self) -> float:
        return self.slots / self.frequency

    def step_index(self, t: float) -> int:
        return math.floor(t * self.frequency)


def mapping_at_step(s: RotationSchedule, k: int) -> dict[str, str]:
    active = s.active
    slots = s.slots
    out = {}
    for i, logical in enumerate(s.logicals):
        slot = (i + k) % slots
        if slot < len(active):
            out[logical] = active[slot]
    return out


def rotate_mapping(s: RotationSchedule, t: float) -> dict[str, str]:
    """Logical -> driver at time t. Logicals left out are idle for this step."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return mapping_at_step(s, s.step_index(t))


def expected_driver_states(s: RotationSchedule, k: int, demand) -> dict[str, bool]:
    carried = {drv: lg for lg, drv in mapping_at_step(s, k).items()}
    return {d: bool(demand[carried[d]]) if d in carried else False for d in s.active}


def fault_profile(s: RotationSchedule, observed, demand, k0: int = 0) -> dict[str, list[int]]:
    """Per logical indicator, the phase indices where its output was wrong."""
    profile = {lg: [] for lg in s.logicals}
    for j, obs in enumerate(observed):
        k = k0 + j
        for lg, drv in mapping_at_step(s, k).items():
            if bool(obs[drv]) != bool(demand[lg]):
                profile[lg].append(k % s.slots)
    return profile


def detect_and_localize(s: RotationSchedule, observed, demand, k0: int = 0) -> str | None:
    """Name the single driver whose phases explain every anomaly, or None.

    `observed[j]` maps each active driver to its on/off state during rotation
    step k0 + j; `demand` maps each logical indicator to its wanted state.
    At least one full rotation period of steps is required.
    """
    if len(observed) < s.slots:
        raise ValueError(f"need {s.slots} steps of observations, got {len(observed)}")
    suspects = set()
    for j, obs in enumerate(observed):
        expected = expected_driver_states(s, k0 + j, demand)
        for drv, want in expected.items():
            if bool(obs[drv]) != want:
                suspects.add(drv)
    if not suspects:
        return None
    if len(suspects) > 1:
        raise AmbiguousProfile(f"anomalies follow several drivers: {sorted(suspects)}")
    return suspects.pop()


def exclude(s: RotationSchedule, driver: str) -> RotationSchedule:
    if driver not in s.drivers:
        raise ValueError(f"unknown driver {driver}")
    if driver in s.excluded:
        raise ValueError(f"{driver} is already excluded")
    if len(s.active) <= 1:
        raise LastDriver("cannot exclude the last active driver")
    return replace(s, excluded=s.excluded | {driver})


def served_fraction(s: RotationSchedule, logical: str) -> float:
    """Share of rotation steps in which `logical` has a driver."""
    served = sum(1 for k in range(s.slots) if logical in mapping_at_step(s, k))
    return served / s.slots
