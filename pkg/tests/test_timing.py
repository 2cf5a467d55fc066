import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecuscan.tap import DeviceScanModel, ScanChain
from ecuscan.timing import (BEST, WORST, TimingParams, calibrate_config_cycles, calibrated_params,
                            chain_config_cycles, cycles_vs_chain_length, loop_rate, t_total)


def test_t_total_dc_example():
    p = TimingParams(f_tck=16e6, config_cycles_full=5e-3 * 16e6, mode=WORST)
    r = t_total(p, "dc")
    assert r.t_total == pytest.approx(5.007e-3)
    assert r.t_total == r.t_con + r.t_test


def test_best_mode_zero_config():
    p = TimingParams(config_cycles_initial=0, mode=BEST)
    r = t_total(p, "duty", window=0.01)
    assert r.t_total == r.t_test == 0.01


def test_low_frequency_spectrum_cost():
    p = TimingParams()
    assert t_total(p, "spectrum", fundamental=10.0).t_test >= 0.1


def test_degenerate_envelope():
    p = TimingParams(n_nodes=1, config_cycles_initial=0, mode=BEST)
    assert loop_rate(p) == pytest.approx(1 / 7e-6)


def test_calibration_inverts_loop_rate():
    # oracle: solve 1/(c/16e6 + 10 * 7e-6) = 153 and 1/(10 (c/16e6 + 0.1)) = 0.949 by hand
    best = 16e6 * (1 / 153 - 10 * 7e-6)
    worst = 16e6 * (1 / (0.949 * 10) - 0.1)
    assert calibrate_config_cycles(153, BEST) == pytest.approx(best)
    assert calibrate_config_cycles(0.949, WORST) == pytest.approx(worst)
    assert loop_rate(calibrated_params(BEST)) == pytest.approx(153, rel=1e-9)
    assert loop_rate(calibrated_params(WORST)) == pytest.approx(0.949, rel=1e-9)


def test_quoted_cycle_counts_within_one_percent():
    assert loop_rate(TimingParams(mode=BEST)) == pytest.approx(153, rel=0.01)
    assert loop_rate(TimingParams(mode=WORST)) == pytest.approx(0.949, rel=0.01)


def test_params_validation():
    with pytest.raises(ValueError):
        TimingParams(mode="fast")
    with pytest.raises(ValueError):
        TimingParams(n_nodes=0)
    with pytest.raises(ValueError):
        calibrate_config_cycles(1e6, BEST)


def _chain(cells):
    return ScanChain([DeviceScanModel(f"d{i}", 4, c) for i, c in enumerate(cells)])


def test_cycles_vs_chain_length():
    ch = _chain([8, 8])
    one = chain_config_cycles(ch)
    assert one == (8 + 6) + (16 + 5)
    p = TimingParams()
    assert cycles_vs_chain_length(p, ch, BEST, 1) == cycles_vs_chain_length(p, ch, WORST, 1)
    assert cycles_vs_chain_length(p, ch, WORST, 7) == 7 * cycles_vs_chain_length(p, ch, BEST, 7)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 64), min_size=1, max_size=6), st.integers(1, 10))
def test_doubling_cells_increases_both_curves(cells, n):
    p = TimingParams()
    small, big = _chain(cells), _chain([2 * c for c in cells])
    for mode in (BEST, WORST):
        assert cycles_vs_chain_length(p, big, mode, n) > cycles_vs_chain_length(p, small, mode, n)


@settings(max_examples=80, deadline=None)
@given(cycles=st.floats(0, 1e6), nodes=st.integers(1, 50))
def test_best_not_slower_than_worst(cycles, nodes):
    b = TimingParams(n_nodes=nodes, config_cycles_initial=cycles, config_cycles_full=cycles, mode=BEST)
    w = TimingParams(n_nodes=nodes, config_cycles_initial=cycles, config_cycles_full=cycles, mode=WORST)
    assert loop_rate(b) >= loop_rate(w)


@settings(max_examples=80, deadline=None)
@given(cycles=st.floats(0, 1e6), extra=st.floats(1, 1e5), nodes=st.integers(1, 50),
       mode=st.sampled_from([BEST, WORST]))
def test_loop_rate_monotone(cycles, extra, nodes, mode):
    base = dict(config_cycles_initial=cycles, config_cycles_full=cycles, mode=mode)
    r0 = loop_rate(TimingParams(n_nodes=nodes, **base))
    more = dict(config_cycles_initial=cycles + extra, config_cycles_full=cycles + extra, mode=mode)
    assert loop_rate(TimingParams(n_nodes=nodes, **more)) < r0
    assert loop_rate(TimingParams(n_nodes=nodes + 1, **base)) < r0
    slower = TimingParams(n_nodes=nodes, adc_capture=2e-5, fourier_cost=0.2, **base)
    assert loop_rate(slower) < r0


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 200), min_size=1, max_size=5))
def test_loop_rate_degrades_with_chain_length(cells):
    short, long_ = _chain(cells), _chain(cells + [50])
    rates = []
    for ch in (short, long_):
        c = chain_config_cycles(ch)
        rates.append(loop_rate(TimingParams(config_cycles_initial=c, mode=BEST)))
    assert rates[1] < rates[0]
