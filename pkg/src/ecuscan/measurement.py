"""Test Measurement: interconnect comparator, DC/duty/spectrum readings and
detectability classification of a line from its comparator history."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import signals as sg
from .errors import NoEdges, NoSignal
from .fabric import DEFAULT_ABM, abm_transfer

ADC_CAPTURE = 7e-6
FOURIER_COST = 0.100
LOW_FREQUENCY_LIMIT = 100.0
DEFAULT_WINDOW = 0.010
NOISE_BOUND = DEFAULT_ABM.dc_noise_bound

DETECTABLE = "Detectable"
INTERMITTENT = "Intermittent"
NOT_DETECTABLE = "NotDetectable"


@dataclass
class MeasurementResult:
    test_id: str
    kind: str  # dc | interconnect | duty | spectrum
    value: float
    unit: str
    window: tuple[float, float]
    cost: float
    triggered: bool = False
    t_con: float = 0.0  # configuration time spent before the window opened

    def __post_init__(self):
        if not self.cost > 0:
            raise ValueError("measurement cost must be positive")
        if not self.window[0] <= self.window[1]:
            raise ValueError("window must be ordered")


@dataclass(frozen=True)
class ComparatorConfig:
    threshold: float = 0.1
    hf_filter_cutoff: float = 100e3

    def __post_init__(self):
        if not self.threshold > NOISE_BOUND:
            raise ValueError("comparator threshold must exceed the DC noise bound")
        if self.hf_filter_cutoff <= 0:
            raise ValueError("filter cutoff must be positive")


def _rng(seed):
    return np.random.default_rng(seed)


def diff_compare(at1: sg.Waveform, at2: sg.Waveform, cfg: ComparatorConfig = ComparatorConfig(),
                 window=(0.0, DEFAULT_WINDOW), seed=None) -> bool:
    """Differential amplifier, HF filter and comparator on one window.

    Triggers when the filtered |at1 - at2| stays above threshold for longer
    than one filter period (1 / cutoff). With a seed, each bus line gets
    independent uniform noise within the DC noise bound.
    """
    t0, t1 = window
    fc = cfg.hf_filter_cutoff
    dt = 1.0 / (fc * 50.0)
    n = max(int(math.ceil((t1 - t0) / dt)), 2)
    t = t0 + dt * np.arange(n)
    diff = sg.sample(at1, t) - sg.sample(at2, t)
    if seed is not None:
        rng = _rng(seed)
        diff = diff + rng.uniform(-NOISE_BOUND, NOISE_BOUND, n) - rng.uniform(-NOISE_BOUND, NOISE_BOUND, n)
    x = np.abs(diff)
    alpha = 1.0 - math.exp(-dt * 2.0 * math.pi * fc)
    y, _ = lfilter([alpha], [1.0, alpha - 1.0], x, zi=[x[0] * (1.0 - alpha)])
    above = y > cfg.threshold
    if not above.any():
        return False
    padded = np.concatenate(([False], above, [False]))
    changes = np.flatnonzero(np.diff(padded.astype(np.int8)))
    runs = changes[1::2] - changes[0::2]
    return bool(runs.max() * dt > 1.0 / fc)


def measure_dc(w: sg.Waveform, window, seed=None, through_abm: bool = True) -> float:
    """Mean over the window (after one ABM pass unless already applied) plus
    uniform noise in +/- the DC noise bound."""
    t0, t1 = window
    if t1 - t0 < ADC_CAPTURE * (1 - 1e-9):
        raise ValueError("DC window shorter than one ADC capture")
    if through_abm:
        w = abm_transfer(w)
    noise = _rng(seed).uniform(-NOISE_BOUND, NOISE_BOUND)
    return sg.mean(w, t0, t1) + float(noise)


def measure_duty(w: sg.Waveform, window) -> float:
    """Duty cycle from exact edge times over the complete periods in the window."""
    t0, t1 = window
    edges = sg.edges_in(w, t0, t1)
    if not edges:
        raise NoEdges("signal is constant over the window")
    rises = [e.time for e in edges if e.direction == sg.RISING]
    falls = [e.time for e in edges if e.direction == sg.FALLING]
    high = 0.0
    period = 0.0
    cycles = 0
    for r0, r1 in zip(rises, rises[1:]):
        inside = [f for f in falls if r0 < f < r1]
        if len(inside) != 1:
            continue
        high += inside[0] - r0
        period += r1 - r0
        cycles += 1
    if cycles < 2:
        raise ValueError("duty measurement needs at least two full periods in the window")
    return high / period


def measure_spectrum(w: sg.Waveform, window, seed=None, through_abm: bool = True,
                     points: int = 1 << 14) -> tuple[float, float]:
    """Dominant frequency of the sampled signal after one ABM pass.

    Returns (fundamental_hz, cost_s). Low-frequency lines (<= 100 Hz) cost at
    least the 100 ms Fourier analysis time.
    """
    t0, t1 = window
    span = t1 - t0
    xw = abm_transfer(w) if through_abm else w
    dt = span / points
    t = t0 + dt * np.arange(points)
    x = sg.sample(xw, t)
    if seed is not None:
        x = x + _rng(seed).uniform(-NOISE_BOUND, NOISE_BOUND, points)
    x = x - x.mean()
    if np.max(np.abs(x)) < 2 * NOISE_BOUND:
        raise NoSignal("no spectral line above twice the noise bound")
    mag = np.abs(np.fft.rfft(x * np.hanning(points)))
    k = int(np.argmax(mag[1:])) + 1
    shift = 0.0
    if 1 <= k < len(mag) - 1:
        a, b, c = mag[k - 1], mag[k], mag[k + 1]
        denom = a - 2 * b + c
        if denom != 0:
            shift = 0.5 * (a - c) / denom
    fundamental = float((k + shift) / span)
    if span * fundamental < 10 * (1 - 1e-3):  # slack for the interpolated estimate
        raise ValueError("spectrum window must span at least 10 fundamental periods")
    return fundamental, spectrum_cost(fundamental, span)


def spectrum_cost(fundamental: float, window_length: float) -> float:
    if fundamental <= LOW_FREQUENCY_LIMIT:
        return max(window_length, FOURIER_COST)
    return window_length


def classify_detectability(node_class: str, history) -> str:
    """Yes/Intermittent/No verdict from per-window comparator outcomes."""
    flags = [bool(h) for h in history]
    if not flags:
        raise ValueError("detectability needs at least one window")
    if all(flags):
        return DETECTABLE
    if any(flags):
        return INTERMITTENT
    return NOT_DETECTABLE
