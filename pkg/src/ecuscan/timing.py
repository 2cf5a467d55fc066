"""Analytic test-loop timing: T_total = T_con + T_test and sweep rates."""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .measurement import ADC_CAPTURE, DEFAULT_WINDOW, FOURIER_COST, spectrum_cost
from .tap import ScanChain, configure

BEST = "best"
WORST = "worst"

# reference sweep rates for 10 nodes on a 16 MHz test master
REFERENCE_BEST_RATE = 153.0
REFERENCE_WORST_RATE = 0.949


@dataclass(frozen=True)
class TimingParams:
    f_tck: float = 16e6
    adc_capture: float = ADC_CAPTURE
    fourier_cost: float = FOURIER_COST
    n_nodes: int = 10
    config_cycles_full: float = 86_080
    config_cycles_initial: float = 103_460
    mode: str = WORST

    def __post_init__(self):
        if self.mode not in (BEST, WORST):
            raise ValueError("mode must be 'best' or 'worst'")
        for name in ("f_tck", "adc_capture", "fourier_cost", "n_nodes"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.config_cycles_full < 0 or self.config_cycles_initial < 0:
            raise ValueError("config cycle counts must be non-negative")


@dataclass(frozen=True)
class TimingReport:
    t_con: float
    t_test: float
    t_total: float
    loop_rate: float


def t_con(p: TimingParams) -> float:
    """Per-test configuration time; best mode spreads one setup over the sweep."""
    if p.mode == WORST:
        return p.config_cycles_full / p.f_tck
    return p.config_cycles_initial / p.f_tck / p.n_nodes


def t_test(p: TimingParams, test_kind: str, window: float | None = None,
           fundamental: float | None = None) -> float:
    if test_kind == "dc":
        return p.adc_capture
    if test_kind in ("duty", "interconnect"):
        return window if window is not None else DEFAULT_WINDOW
    if test_kind == "spectrum":
        if fundamental is None:
            return p.fourier_cost if window is None else max(window, p.fourier_cost)
        return spectrum_cost(fundamental, window if window is not None else 10.0 / fundamental)
    raise ValueError(f"unknown test kind {test_kind}")


def t_total(p: TimingParams, test_kind: str, window: float | None = None,
            fundamental: float | None = None) -> TimingReport:
    con = t_con(p)
    test = t_test(p, test_kind, window, fundamental)
    total = con + test
    return TimingReport(con, test, total, 1.0 / (p.n_nodes * total))


def loop_rate(p: TimingParams) -> float:
    """Full sweeps per second over n_nodes tests.

    best: one setup per sweep and a DC capture per node;
    worst: a full reconfiguration and a Fourier analysis per node.
    """
    if p.mode == BEST:
        return 1.0 / (p.config_cycles_initial / p.f_tck + p.n_nodes * p.adc_capture)
    return 1.0 / (p.n_nodes * (p.config_cycles_full / p.f_tck + p.fourier_cost))


def calibrate_config_cycles(rate: float, mode: str, n_nodes: int = 10, f_tck: float = 16e6,
                            adc_capture: float = ADC_CAPTURE, fourier_cost: float = FOURIER_COST) -> float:
    """Invert loop_rate for the configuration cycle count that yields `rate`."""
    if mode == BEST:
        cycles = f_tck * (1.0 / rate - n_nodes * adc_capture)
    else:
        cycles = f_tck * (1.0 / (rate * n_nodes) - fourier_cost)
    if cycles < 0:
        raise ValueError("rate is not reachable with these parameters")
    return cycles


def calibrated_params(mode: str = WORST, **kw) -> TimingParams:
    """TimingParams whose config cycle counts reproduce the reference rates."""
    n_nodes = kw.get("n_nodes", 10)
    f_tck = kw.get("f_tck", 16e6)
    best = calibrate_config_cycles(REFERENCE_BEST_RATE, BEST, n_nodes, f_tck)
    worst = calibrate_config_cycles(REFERENCE_WORST_RATE, WORST, n_nodes, f_tck)
    kw.setdefault("config_cycles_initial", best)
    kw.setdefault("config_cycles_full", worst)
    return TimingParams(mode=mode, **kw)


def chain_config_cycles(chain: ScanChain) -> int:
    """Cycles for one full configure of every device, leaving `chain` untouched."""
    scratch = copy.deepcopy(chain)
    scratch._walked = {}
    targets = {d.name: [0] * d.boundary_cells for d in scratch.devices}
    return configure(scratch, targets)


def cycles_vs_chain_length(p: TimingParams, chain: ScanChain, mode: str, n_tests: int) -> int:
    if not chain.devices:
        raise ValueError("chain must not be empty")
    if n_tests < 1:
        raise ValueError("n_tests must be >= 1")
    one = chain_config_cycles(chain)
    return one if mode == BEST else n_tests * one
