"""Analytic waveform descriptors.

Node sources and bus signals are kept in closed form rather than as sample
arrays, so sampling is exact at any instant and rectangular waves expose
their transition times directly. All waveform objects are immutable.

Time zero is the start of observation: PWM sources are periodic for all
time, but no transition is ever reported at or before t = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import gammainc, gammaincinv

from .errors import UnresolvedHighZ

RISING = "rising"
FALLING = "falling"

# samples used by the numeric mean fallback (clipped signals only)
_MEAN_POINTS = 8192


class Edge(NamedTuple):
    time: float
    direction: str


class Waveform:
    """Base class of all waveform kinds."""

    def _sample(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _edges(self, t0: float, t1: float) -> list[Edge]:
        return []

    def _mean(self, t0: float, t1: float) -> float:
        n = _MEAN_POINTS
        dt = (t1 - t0) / n
        mid = t0 + dt * (np.arange(n) + 0.5)
        return float(np.mean(self._sample(mid)))

    def value_range(self) -> tuple[float, float]:
        raise NotImplementedError

    def __add__(self, other: Waveform) -> Waveform:
        return Sum(self, other)


@dataclass(frozen=True)
class DC(Waveform):
    level: float

    def _sample(self, t):
        return np.full(np.shape(t), float(self.level))

    def _mean(self, t0, t1):
        return float(self.level)

    def value_range(self):
        return (self.level, self.level)


@dataclass(frozen=True)
class Sine(Waveform):
    amplitude: float
    frequency: float
    phase: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.frequency <= 0:
            raise ValueError("sine frequency must be positive")

    def _sample(self, t):
        w = 2.0 * math.pi * self.frequency
        return self.offset + self.amplitude * np.sin(w * t + self.phase)

    def _mean(self, t0, t1):
        if self.amplitude == 0:
            return float(self.offset)
        w = 2.0 * math.pi * self.frequency
        area = (math.cos(w * t0 + self.phase) - math.cos(w * t1 + self.phase)) / w
        return self.offset + self.amplitude * area / (t1 - t0)

    def value_range(self):
        a = abs(self.amplitude)
        return (self.offset - a, self.offset + a)


@dataclass(frozen=True)
class PWM(Waveform):
    """Rectangular wave: high on [k/f, (k+duty)/f), low for the rest of the period."""

    low: float
    high: float
    frequency: float
    duty: float

    def __post_init__(self):
        if self.frequency <= 0:
            raise ValueError("PWM frequency must be positive")
        if not 0.0 < self.duty < 1.0:
            raise ValueError("PWM duty must lie strictly between 0 and 1; use pwm() for 0 or 1")

    def _period_index(self, t):
        f = self.frequency
        k = np.floor(t * f)
        # floor(t*f) can be off by one near period boundaries
        k = np.where(t < k / f, k - 1, k)
        k = np.where(t >= (k + 1) / f, k + 1, k)
        return k

    def _sample(self, t):
        k = self._period_index(t)
        is_high = t < (k + self.duty) / self.frequency
        return np.where(is_high, float(self.high), float(self.low))

    def _edges(self, t0, t1):
        f, d = self.frequency, self.duty
        up = RISING if self.high > self.low else FALLING
        down = FALLING if up == RISING else RISING
        out = []
        for k in range(math.floor(t0 * f) - 1, math.floor(t1 * f) + 2):
            rise = k / f
            fall = (k + d) / f
            if t0 <= rise < t1:
                out.append(Edge(rise, up))
            if t0 <= fall < t1:
                out.append(Edge(fall, down))
        out.sort()
        return out

    def _high_time(self, t):
        # time spent high on [0, t), extended periodically to negative t
        f = self.frequency
        k = float(self._period_index(np.asarray([t]))[0])
        return k * self.duty / f + min(t - k / f, self.duty / f)

    def _mean(self, t0, t1):
        frac = (self._high_time(t1) - self._high_time(t0)) / (t1 - t0)
        return self.low + (self.high - self.low) * frac

    def value_range(self):
        return (min(self.low, self.high), max(self.low, self.high))


@dataclass(frozen=True)
class PulseTrain(Waveform):
    """Starts at `low` and toggles between `low` and `high` at each edge time."""

    low: float
    high: float
    edge_times: tuple[float, ...]
    _times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = tuple(float(x) for x in self.edge_times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("pulse edge times must be strictly increasing")
        if times and times[0] <= 0:
            raise ValueError("pulse edge times must be positive")
        object.__setattr__(self, "edge_times", times)
        object.__setattr__(self, "_times", np.asarray(times, dtype=float))

    def _level(self, count):
        return np.where(np.asarray(count) % 2 == 0, float(self.low), float(self.high))

    def _sample(self, t):
        return self._level(np.searchsorted(self._times, t, side="right"))

    def _edges(self, t0, t1):
        up = RISING if self.high > self.low else FALLING
        down = FALLING if up == RISING else RISING
        i0 = int(np.searchsorted(self._times, t0, side="left"))
        i1 = int(np.searchsorted(self._times, t1, side="left"))
        return [Edge(float(self._times[i]), up if i % 2 == 0 else down) for i in range(i0, i1)]

    def _mean(self, t0, t1):
        points = [t0] + [e.time for e in self._edges(t0, t1) if e.time > t0] + [t1]
        area = 0.0
        for a, b in zip(points, points[1:]):
            area += float(self._sample(np.asarray([a]))[0]) * (b - a)
        return area / (t1 - t0)

    def value_range(self):
        if not self.edge_times:
            return (self.low, self.low)
        return (min(self.low, self.high), max(self.low, self.high))


@dataclass(frozen=True)
class HighZ(Waveform):
    """An undriven line. Must be resolved by a pull network or bus idle rule."""

    def _sample(self, t):
        raise UnresolvedHighZ("high-impedance line sampled without a pull or idle level")

    def _mean(self, t0, t1):
        raise UnresolvedHighZ("high-impedance line sampled without a pull or idle level")

    def value_range(self):
        raise UnresolvedHighZ("high-impedance line has no value range")


@dataclass(frozen=True)
class Sum(Waveform):
    a: Waveform
    b: Waveform

    def _sample(self, t):
        return self.a._sample(t) + self.b._sample(t)

    def _edges(self, t0, t1):
        return sorted(self.a._edges(t0, t1) + self.b._edges(t0, t1))

    def _mean(self, t0, t1):
        return self.a._mean(t0, t1) + self.b._mean(t0, t1)

    def value_range(self):
        lo_a, hi_a = self.a.value_range()
        lo_b, hi_b = self.b.value_range()
        return (lo_a + lo_b, hi_a + hi_b)


@dataclass(frozen=True)
class Scaled(Waveform):
    inner: Waveform
    gain: float

    def _sample(self, t):
        return self.gain * self.inner._sample(t)

    def _edges(self, t0, t1):
        edges = self.inner._edges(t0, t1)
        if self.gain >= 0:
            return edges
        flip = {RISING: FALLING, FALLING: RISING}
        return [Edge(e.time, flip[e.direction]) for e in edges]

    def _mean(self, t0, t1):
        return self.gain * self.inner._mean(t0, t1)

    def value_range(self):
        lo, hi = self.inner.value_range()
        a, b = self.gain * lo, self.gain * hi
        return (min(a, b), max(a, b))


@dataclass(frozen=True)
class Lowpass(Waveform):
    """A rectangular wave seen through `order` identical real poles at `cutoff`.

    Built by lowpass(); sine and DC inputs never need this wrapper.
    """

    inner: Waveform
    cutoff: float
    order: int = 1

    @property
    def tau(self) -> float:
        return 1.0 / (2.0 * math.pi * self.cutoff)

    @property
    def settle(self) -> float:
        return (40.0 + 10.0 * self.order) * self.tau

    @property
    def midpoint_delay(self) -> float:
        return float(gammaincinv(self.order, 0.5)) * self.tau

    def _sample(self, t):
        tau, settle = self.tau, self.settle
        tmin, tmax = float(np.min(t)), float(np.max(t))
        edges = self.inner._edges(tmin - settle, tmax + settle)
        y = self.inner._sample(t - settle)
        if not edges:
            return y
        times = np.asarray([e.time for e in edges])
        before = self.inner._sample(times - 0.5 * self.tau * 1e-6)
        after = self.inner._sample(times)
        steps = after - before
        hi_idx = np.searchsorted(times, t, side="right")
        lo_idx = np.searchsorted(times, t - settle, side="right")
        for j in range(int(np.max(hi_idx - lo_idx))):
            k = lo_idx + j
            live = k < hi_idx
            kk = np.where(live, k, 0)
            resp = gammainc(self.order, np.maximum(t - times[kk], 0.0) / tau)
            y = y + np.where(live, steps[kk] * resp, 0.0)
        return y

    def _edges(self, t0, t1):
        d = self.midpoint_delay
        return [Edge(e.time + d, e.direction) for e in self.inner._edges(t0 - d, t1 - d)]

    def _mean(self, t0, t1):
        # area is preserved and delayed by the mean group delay order*tau
        shift = self.order * self.tau
        return self.inner._mean(t0 - shift, t1 - shift)

    def value_range(self):
        return self.inner.value_range()


@dataclass(frozen=True)
class Clip(Waveform):
    inner: Waveform
    lo: float
    hi: float

    def _sample(self, t):
        return np.clip(self.inner._sample(t), self.lo, self.hi)

    def _edges(self, t0, t1):
        return self.inner._edges(t0, t1)

    def value_range(self):
        lo, hi = self.inner.value_range()
        return (min(max(lo, self.lo), self.hi), max(min(hi, self.hi), self.lo))


@dataclass(frozen=True)
class Switched(Waveform):
    """`before` until time `at`, `after` from `at` onward."""

    before: Waveform
    after: Waveform
    at: float

    def _sample(self, t):
        out = np.empty(np.shape(t))
        early = t < self.at
        if np.any(early):
            out[early] = self.before._sample(t[early])
        if not np.all(early):
            out[~early] = self.after._sample(t[~early])
        return out

    def _edges(self, t0, t1):
        out = []
        if t0 < self.at:
            out += self.before._edges(t0, min(t1, self.at))
        if t0 <= self.at < t1:
            try:
                v0 = float(self.before._sample(np.asarray([self.at]))[0])
                v1 = float(self.after._sample(np.asarray([self.at]))[0])
            except UnresolvedHighZ:
                v0 = v1 = 0.0
            if v1 != v0:
                out.append(Edge(self.at, RISING if v1 > v0 else FALLING))
        if t1 > self.at:
            out += self.after._edges(max(t0, self.at), t1)
        return sorted(out)

    def _mean(self, t0, t1):
        if t1 <= self.at:
            return self.before._mean(t0, t1)
        if t0 >= self.at:
            return self.after._mean(t0, t1)
        a = self.before._mean(t0, self.at) * (self.at - t0)
        b = self.after._mean(self.at, t1) * (t1 - self.at)
        return (a + b) / (t1 - t0)

    def value_range(self):
        lo_a, hi_a = self.before.value_range()
        lo_b, hi_b = self.after.value_range()
        return (min(lo_a, lo_b), max(hi_a, hi_b))


def pwm(low, high, frequency, duty) -> Waveform:
    """PWM constructor that collapses duty 0 or 1 to a DC level."""
    if duty <= 0.0:
        return DC(low)
    if duty >= 1.0:
        return DC(high)
    return PWM(low, high, frequency, duty)


def pulses(low, high, *edge_times) -> PulseTrain:
    return PulseTrain(low, high, tuple(edge_times))


def sample(w: Waveform, t):
    """Exact value of `w` at time(s) `t` (scalar or array, seconds >= 0)."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("sample time must be non-negative")
    out = w._sample(np.atleast_1d(arr))
    if arr.ndim == 0:
        return float(out[0])
    return out


def edges_in(w: Waveform, t0: float, t1: float) -> list[Edge]:
    """Transitions of `w` in [t0, t1), sorted by time."""
    if not t0 < t1:
        raise ValueError("edges_in needs t0 < t1")
    return [e for e in w._edges(t0, t1) if e.time > 0]


def mean(w: Waveform, t0: float, t1: float) -> float:
    if not t0 < t1:
        raise ValueError("mean needs t0 < t1")
    return float(w._mean(t0, t1))


def is_highz(w: Waveform) -> bool:
    if isinstance(w, HighZ):
        return True
    if isinstance(w, Sum):
        return is_highz(w.a) or is_highz(w.b)
    if isinstance(w, (Scaled, Lowpass, Clip)):
        return is_highz(w.inner)
    if isinstance(w, Switched):
        return is_highz(w.before) or is_highz(w.after)
    return False


def resolve_highz(w: Waveform, level: float) -> Waveform:
    """Replace every undriven piece of `w` with a constant `level`."""
    if isinstance(w, HighZ):
        return DC(level)
    if not is_highz(w):
        return w
    if isinstance(w, Sum):
        return Sum(resolve_highz(w.a, level), resolve_highz(w.b, level))
    if isinstance(w, Scaled):
        return Scaled(resolve_highz(w.inner, level), w.gain)
    if isinstance(w, Clip):
        return Clip(resolve_highz(w.inner, level), w.lo, w.hi)
    if isinstance(w, Lowpass):
        return Lowpass(resolve_highz(w.inner, level), w.cutoff, w.order)
    if isinstance(w, Switched):
        return Switched(resolve_highz(w.before, level), resolve_highz(w.after, level), w.at)
    return w


def scaled(w: Waveform, gain: float) -> Waveform:
    if gain == 1.0:
        return w
    if isinstance(w, DC):
        return DC(w.level * gain)
    return Scaled(w, gain)


def clip(w: Waveform, lo: float, hi: float) -> Waveform:
    """Clip to [lo, hi], dropping the wrapper when it cannot bind."""
    if isinstance(w, DC):
        return DC(min(max(w.level, lo), hi))
    rmin, rmax = w.value_range()
    if lo <= rmin and rmax <= hi:
        return w
    if rmax <= lo:
        return DC(lo)
    if rmin >= hi:
        return DC(hi)
    return Clip(w, lo, hi)


def lowpass(w: Waveform, cutoff: float) -> Waveform:
    """First-order low-pass of `w` with -3 dB point at `cutoff` Hz.

    Sines and DC stay closed-form. Rectangular waves gain a Lowpass wrapper;
    filtering an existing Lowpass at the same cutoff raises its order.
    A clip that binds is kept outside the filter, which is exact for slow
    signals and a close approximation otherwise.
    """
    if isinstance(w, HighZ):
        raise UnresolvedHighZ("cannot filter a high-impedance line")
    if isinstance(w, DC):
        return w
    if isinstance(w, Sine):
        ratio = w.frequency / cutoff
        gain = 1.0 / math.sqrt(1.0 + ratio * ratio)
        return Sine(w.amplitude * gain, w.frequency, w.phase - math.atan(ratio), w.offset)
    if isinstance(w, (PWM, PulseTrain)):
        return Lowpass(w, cutoff, 1)
    if isinstance(w, Lowpass):
        if w.cutoff != cutoff:
            raise ValueError("cascaded low-pass stages must share one cutoff")
        return Lowpass(w.inner, cutoff, w.order + 1)
    if isinstance(w, Sum):
        return Sum(lowpass(w.a, cutoff), lowpass(w.b, cutoff))
    if isinstance(w, Scaled):
        return scaled(lowpass(w.inner, cutoff), w.gain)
    if isinstance(w, Switched):
        return Switched(lowpass(w.before, cutoff), lowpass(w.after, cutoff), w.at)
    if isinstance(w, Clip):
        return clip(lowpass(w.inner, cutoff), w.lo, w.hi)
    raise TypeError(f"cannot filter {type(w).__name__}")
