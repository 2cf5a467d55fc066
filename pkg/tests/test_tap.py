import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecuscan.errors import LengthMismatch, UnknownDevice
from ecuscan.tap import (BYPASS, EXTEST, PROBE, SAMPLE_PRELOAD, DeviceScanModel, ScanChain, TapController,
                         TapState, configure, configure_cost, default_codes, scan, step_tms)

# Reference transition table written out from the standard's state diagram,
# independent of the implementation's table: state -> (tms=0, tms=1).
REFERENCE = {
    "Test-Logic-Reset": ("Run-Test/Idle", "Test-Logic-Reset"),
    "Run-Test/Idle": ("Run-Test/Idle", "Select-DR-Scan"),
    "Select-DR-Scan": ("Capture-DR", "Select-IR-Scan"),
    "Capture-DR": ("Shift-DR", "Exit1-DR"),
    "Shift-DR": ("Shift-DR", "Exit1-DR"),
    "Exit1-DR": ("Pause-DR", "Update-DR"),
    "Pause-DR": ("Pause-DR", "Exit2-DR"),
    "Exit2-DR": ("Shift-DR", "Update-DR"),
    "Update-DR": ("Run-Test/Idle", "Select-DR-Scan"),
    "Select-IR-Scan": ("Capture-IR", "Test-Logic-Reset"),
    "Capture-IR": ("Shift-IR", "Exit1-IR"),
    "Shift-IR": ("Shift-IR", "Exit1-IR"),
    "Exit1-IR": ("Pause-IR", "Update-IR"),
    "Pause-IR": ("Pause-IR", "Exit2-IR"),
    "Exit2-IR": ("Shift-IR", "Update-IR"),
    "Update-IR": ("Run-Test/Idle", "Select-DR-Scan"),
}


def walk(tms_seq, start="Run-Test/Idle"):
    state = start
    for tms in tms_seq:
        state = REFERENCE[state][tms]
    return state


def scan_tms(path, n):
    """TMS sequence for an n-bit scan from Run-Test/Idle back to Run-Test/Idle."""
    head = [1, 1, 0, 0] if path == "IR" else [1, 0, 0]
    return head + [0] * (n - 1) + [1] + [1, 0]


def oracle_configure_cycles(ir_lengths, dr_lengths):
    ir = scan_tms("IR", sum(ir_lengths))
    dr = scan_tms("DR", sum(dr_lengths))
    assert walk(ir) == "Run-Test/Idle" and walk(dr) == "Run-Test/Idle"
    return len(ir) + len(dr)


def test_transition_table_matches_reference():
    for state in TapState:
        for tms in (0, 1):
            assert step_tms(state, tms).value == REFERENCE[state.value][tms]


@pytest.mark.parametrize("state", list(TapState))
def test_five_tms_high_reaches_reset(state):
    s = state
    for _ in range(5):
        s = step_tms(s, 1)
    assert s is TapState.TEST_LOGIC_RESET


def test_scan_costs_match_walk():
    chain = ScanChain([DeviceScanModel("u1", 4, 8)])
    _, cycles = scan(chain, "IR", [1, 0, 0, 0])  # LSB first: code 1
    assert cycles == 4 + 6 == len(scan_tms("IR", 4))
    assert chain.device("u1").current_instruction == SAMPLE_PRELOAD
    _, cycles = scan(chain, "DR", [1] * 8)
    assert cycles == 8 + 5 == len(scan_tms("DR", 8))


def test_ir_capture_pattern_shifts_out():
    chain = ScanChain([DeviceScanModel("u1", 4, 3), DeviceScanModel("u2", 3, 3)])
    tdo, _ = scan(chain, "IR", [1] * 7)
    # each device captures 1 then 0 in its two bits nearest TDO
    assert tdo[:3] == [1, 0, 0] and tdo[3:] == [1, 0, 0, 0]


def test_configure_example_cost():
    chain = ScanChain([DeviceScanModel("u1", 4, 8)])
    assert configure(chain, {"u1": [0] * 8}) == 23


def test_configure_loads_targets_and_bypasses_rest():
    devs = [DeviceScanModel("a", 3, 4), DeviceScanModel("b", 5, 6), DeviceScanModel("c", 2, 2)]
    chain = ScanChain(devs)
    vec = [1, 0, 1, 1, 0, 1]
    configure(chain, {"b": vec}, EXTEST)
    assert chain.device("b").boundary_register == vec
    assert chain.device("b").current_instruction == EXTEST
    assert chain.device("a").current_instruction == BYPASS
    assert chain.device("c").current_instruction == BYPASS


def test_configure_is_idempotent_in_cost():
    chain = ScanChain([DeviceScanModel("a", 3, 4), DeviceScanModel("b", 4, 5)])
    t = {"a": [1, 0, 0, 1], "b": [0] * 5}
    first = configure(chain, t)
    again = configure(chain, t)
    assert first == again
    assert chain.snapshot() == (("PROBE", (1, 0, 0, 1)), ("PROBE", (0, 0, 0, 0, 0)))


def test_length_mismatch_and_unknown_device():
    chain = ScanChain([DeviceScanModel("a", 3, 4)])
    with pytest.raises(LengthMismatch):
        configure(chain, {"a": [1, 0]})
    with pytest.raises(UnknownDevice):
        configure(chain, {"zz": [1]})
    with pytest.raises(LengthMismatch):
        scan(chain, "IR", [1])


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_bypass_delay_equals_device_count(n):
    devs = [DeviceScanModel(f"d{i}", 3, 4) for i in range(n)]
    tap = TapController(devs)
    tap.reset()
    for tms in (0, 1, 0, 0):  # -> Run-Test/Idle -> Select-DR -> Capture-DR -> Shift-DR
        tap.clock(tms)
    out = [tap.clock(0, 1 if i == 0 else 0) for i in range(n + 3)]
    assert out.index(1) == n


def test_default_codes_are_distinct_and_bypass_all_ones():
    codes = default_codes(4)
    assert codes[BYPASS] == 0b1111
    assert codes[EXTEST] == 0 and codes[SAMPLE_PRELOAD] == 1 and codes[PROBE] == 2
    assert len(set(codes.values())) == 4


def test_trace_lines():
    chain = ScanChain([DeviceScanModel("a", 2, 1)], trace=True)
    lines = chain.tap.trace_lines()
    assert lines[0] == "0,1,0,0" and len(lines) == 6


def test_randomized_configure_cost_against_walk_oracle():
    rng = random.Random(1149)
    for _ in range(100):
        n = rng.randint(1, 6)
        devs = [DeviceScanModel(f"d{i}", rng.randint(2, 8), rng.randint(1, 40)) for i in range(n)]
        chain = ScanChain(devs)
        picked = [d for d in devs if rng.random() < 0.6]
        targets = {d.name: [rng.randint(0, 1) for _ in range(d.boundary_cells)] for d in picked}
        cost = configure(chain, targets)
        dr = [d.boundary_cells if d.name in targets else 1 for d in devs]
        assert cost == oracle_configure_cycles([d.ir_length for d in devs], dr)
        assert cost == configure_cost([d.ir_length for d in devs], dr)
        # additivity: fixed overhead plus one independent term per device
        per_device = []
        for d, dl in zip(devs, dr):
            solo = ScanChain([DeviceScanModel("x", d.ir_length, d.boundary_cells)])
            vec = {"x": [0] * d.boundary_cells} if d.name in targets else {}
            per_device.append(configure(solo, vec) - 11)
        assert cost == 11 + sum(per_device)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(2, 6), st.integers(1, 20)), min_size=1, max_size=5), st.data())
def test_scan_roundtrip_returns_to_idle(spec, data):
    chain = ScanChain([DeviceScanModel(f"d{i}", ir, cells) for i, (ir, cells) in enumerate(spec)])
    bits = data.draw(st.lists(st.integers(0, 1), min_size=chain.path_length("IR"),
                              max_size=chain.path_length("IR")))
    _, cycles = scan(chain, "IR", bits)
    assert chain.tap.state is TapState.RUN_TEST_IDLE
    assert cycles == len(bits) + 6


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=30))
def test_dr_shift_is_a_fifo(vec):
    chain = ScanChain([DeviceScanModel("a", 3, len(vec))])
    configure(chain, {"a": vec})
    tdo, _ = scan(chain, "DR", [0] * len(vec))
    assert tdo == vec  # the previously loaded vector is captured and shifted out
