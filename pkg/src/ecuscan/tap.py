"""IEEE 1149.1 TAP controller, scan chain shifting and TCK cost accounting.

Bits are shifted least-significant first: for a single device, after a scan
of ``bits`` the register holds ``bits[i]`` at position ``i`` and position 0
sits at the TDO end. TDI enters device 0 and TDO leaves the last device, so
the first bits shifted end up in the last device.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .errors import LengthMismatch, UnknownDevice


class TapState(Enum):
    TEST_LOGIC_RESET = "Test-Logic-Reset"
    RUN_TEST_IDLE = "Run-Test/Idle"
    SELECT_DR_SCAN = "Select-DR-Scan"
    CAPTURE_DR = "Capture-DR"
    SHIFT_DR = "Shift-DR"
    EXIT1_DR = "Exit1-DR"
    PAUSE_DR = "Pause-DR"
    EXIT2_DR = "Exit2-DR"
    UPDATE_DR = "Update-DR"
    SELECT_IR_SCAN = "Select-IR-Scan"
    CAPTURE_IR = "Capture-IR"
    SHIFT_IR = "Shift-IR"
    EXIT1_IR = "Exit1-IR"
    PAUSE_IR = "Pause-IR"
    EXIT2_IR = "Exit2-IR"
    UPDATE_IR = "Update-IR"


S = TapState

# (state) -> (successor on TMS=0, successor on TMS=1)
_NEXT = {
    S.TEST_LOGIC_RESET: (S.RUN_TEST_IDLE, S.TEST_LOGIC_RESET),
    S.RUN_TEST_IDLE: (S.RUN_TEST_IDLE, S.SELECT_DR_SCAN),
    S.SELECT_DR_SCAN: (S.CAPTURE_DR, S.SELECT_IR_SCAN),
    S.CAPTURE_DR: (S.SHIFT_DR, S.EXIT1_DR),
    S.SHIFT_DR: (S.SHIFT_DR, S.EXIT1_DR),
    S.EXIT1_DR: (S.PAUSE_DR, S.UPDATE_DR),
    S.PAUSE_DR: (S.PAUSE_DR, S.EXIT2_DR),
    S.EXIT2_DR: (S.SHIFT_DR, S.UPDATE_DR),
    S.UPDATE_DR: (S.RUN_TEST_IDLE, S.SELECT_DR_SCAN),
    S.SELECT_IR_SCAN: (S.CAPTURE_IR, S.TEST_LOGIC_RESET),
    S.CAPTURE_IR: (S.SHIFT_IR, S.EXIT1_IR),
    S.SHIFT_IR: (S.SHIFT_IR, S.EXIT1_IR),
    S.EXIT1_IR: (S.PAUSE_IR, S.UPDATE_IR),
    S.PAUSE_IR: (S.PAUSE_IR, S.EXIT2_IR),
    S.EXIT2_IR: (S.SHIFT_IR, S.UPDATE_IR),
    S.UPDATE_IR: (S.RUN_TEST_IDLE, S.SELECT_DR_SCAN),
}


def step_tms(state: TapState, tms: int) -> TapState:
    return _NEXT[state][1 if tms else 0]


BYPASS = "BYPASS"
SAMPLE_PRELOAD = "SAMPLE/PRELOAD"
EXTEST = "EXTEST"
PROBE = "PROBE"
INSTRUCTIONS = (EXTEST, SAMPLE_PRELOAD, PROBE, BYPASS)


def default_codes(ir_length: int) -> dict[str, int]:
    """BYPASS is all ones; the others count up from zero."""
    codes = {name: i for i, name in enumerate((EXTEST, SAMPLE_PRELOAD, PROBE))}
    codes[BYPASS] = (1 << ir_length) - 1
    return codes


def to_bits(value: int, width: int) -> list[int]:
    return [(value >> i) & 1 for i in range(width)]


def from_bits(bits) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))


@dataclass
class DeviceScanModel:
    name: str
    ir_length: int
    boundary_cells: int
    codes: dict[str, int] = field(default_factory=dict)
    current_instruction: str = BYPASS
    boundary_register: list[int] = field(default_factory=list)
    # shift stages; the update latches are current_instruction and boundary_register
    _ir_shift: deque = field(default_factory=deque, repr=False)
    _dr_shift: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        if self.ir_length < 2:
            raise ValueError("instruction register needs at least 2 bits")
        if self.boundary_cells < 1:
            raise ValueError("device needs at least one boundary cell")
        if not self.codes:
            self.codes = default_codes(self.ir_length)
        if len(set(self.codes.values())) != len(self.codes):
            raise ValueError(f"duplicate instruction codes on {self.name}")
        if not self.boundary_register:
            self.boundary_register = [0] * self.boundary_cells
        self._ir_shift = deque([0] * self.ir_length)
        self._dr_shift = deque()

    @property
    def bypass_selected(self) -> bool:
        return self.current_instruction not in (EXTEST, SAMPLE_PRELOAD, PROBE)

    @property
    def dr_length(self) -> int:
        return 1 if self.bypass_selected else self.boundary_cells

    def decode(self, code: int) -> str:
        for name, value in self.codes.items():
            if value == code:
                return name
        return BYPASS  # unassigned opcodes behave as BYPASS

    def reset(self):
        self.current_instruction = BYPASS

    def capture_ir(self):
        # mandatory 01 in the two bits nearest TDO
        self._ir_shift = deque([1, 0] + [0] * (self.ir_length - 2))

    def capture_dr(self):
        if self.bypass_selected:
            self._dr_shift = deque([0])
        else:
            self._dr_shift = deque(self.boundary_register)

    def shift(self, register: deque, tdi: int) -> int:
        tdo = register.popleft()
        register.append(tdi)
        return tdo

    def update_ir(self):
        self.current_instruction = self.decode(from_bits(self._ir_shift))

    def update_dr(self):
        if not self.bypass_selected:
            self.boundary_register = list(self._dr_shift)


class TapController:
    """Clock-level model of one TAP driving a chain of devices."""

    def __init__(self, devices: list[DeviceScanModel], trace: bool = False):
        self.devices = devices
        self.state = S.TEST_LOGIC_RESET
        self.cycles = 0
        self.trace: list[tuple[int, int, int, int]] | None = [] if trace else None
        for dev in devices:
            dev.reset()

    def clock(self, tms: int, tdi: int = 0) -> int:
        """One TCK: act on the current state, then move to its successor."""
        tdo = 0
        if self.state is S.SHIFT_DR:
            bit = tdi
            for dev in self.devices:
                bit = dev.shift(dev._dr_shift, bit)
            tdo = bit
        elif self.state is S.SHIFT_IR:
            bit = tdi
            for dev in self.devices:
                bit = dev.shift(dev._ir_shift, bit)
            tdo = bit
        nxt = step_tms(self.state, tms)
        if self.trace is not None:
            self.trace.append((self.cycles, tms, tdi, tdo))
        self.cycles += 1
        self.state = nxt
        self._enter(nxt)
        return tdo

    def _enter(self, state):
        if state is S.TEST_LOGIC_RESET:
            for dev in self.devices:
                dev.reset()
        elif state is S.CAPTURE_IR:
            for dev in self.devices:
                dev.capture_ir()
        elif state is S.CAPTURE_DR:
            for dev in self.devices:
                dev.capture_dr()
        elif state is S.UPDATE_IR:
            for dev in self.devices:
                dev.update_ir()
        elif state is S.UPDATE_DR:
            for dev in self.devices:
                dev.update_dr()

    def reset(self):
        for _ in range(5):
            self.clock(1)

    def trace_lines(self) -> list[str]:
        return [f"{c},{tms},{tdi},{tdo}" for c, tms, tdi, tdo in self.trace or []]


class ScanChain:
    """Devices in TDI-to-TDO order plus the controller that drives them."""

    def __init__(self, devices: list[DeviceScanModel], trace: bool = False):
        names = [d.name for d in devices]
        if len(set(names)) != len(names):
            raise ValueError("duplicate device names in chain")
        self.devices = devices
        self.tap = TapController(devices, trace=trace)
        self.tap.reset()
        self.tap.clock(0)  # park in Run-Test/Idle
        self._walked: dict[tuple, int] = {}

    def device(self, name: str) -> DeviceScanModel:
        for dev in self.devices:
            if dev.name == name:
                return dev
        raise UnknownDevice(name)

    def path_length(self, path: str) -> int:
        if path == "IR":
            return sum(d.ir_length for d in self.devices)
        return sum(d.dr_length for d in self.devices)

    @property
    def total_cells(self) -> int:
        return sum(d.boundary_cells for d in self.devices)

    def snapshot(self):
        return tuple((d.current_instruction, tuple(d.boundary_register)) for d in self.devices)


def scan(chain: ScanChain, path: str, tdi_bits) -> tuple[list[int], int]:
    """Shift `tdi_bits` through the IR or DR path from Run-Test/Idle and back.

    Returns (tdo_bits, tck_cycles).
    """
    tap = chain.tap
    if tap.state is not S.RUN_TEST_IDLE:
        raise RuntimeError(f"scan must start in Run-Test/Idle, not {tap.state.value}")
    if path not in ("IR", "DR"):
        raise ValueError("path must be 'IR' or 'DR'")
    bits = [int(b) for b in tdi_bits]
    length = chain.path_length(path)
    if len(bits) != length:
        raise LengthMismatch(f"{path} path is {length} bits, got {len(bits)}")

    start = tap.cycles
    tap.clock(1)  # -> Select-DR-Scan
    if path == "IR":
        tap.clock(1)  # -> Select-IR-Scan
    tap.clock(0)  # -> Capture
    tap.clock(0)  # -> Shift
    tdo = []
    for i, bit in enumerate(bits):
        tdo.append(tap.clock(1 if i == len(bits) - 1 else 0, bit))
    if not bits:
        tap.clock(1)  # -> Exit1 without shifting
    tap.clock(1)  # -> Update
    tap.clock(0)  # -> Run-Test/Idle
    return tdo, tap.cycles - start


def _chain_vector(per_device: list[list[int]]) -> list[int]:
    out = []
    for bits in reversed(per_device):
        out.extend(bits)
    return out


def configure(chain: ScanChain, targets, instruction: str = PROBE) -> int:
    """Apply boundary vectors to the named devices; all others go to BYPASS.

    Always performs a full IR scan followed by a full DR scan, even when the
    chain already holds the requested state. Returns TCK cycles spent.
    """
    for name, vec in targets.items():
        dev = chain.device(name)
        if len(vec) != dev.boundary_cells:
            raise LengthMismatch(f"{name} has {dev.boundary_cells} cells, got {len(vec)}")
    if instruction not in (EXTEST, PROBE, SAMPLE_PRELOAD):
        raise ValueError(f"cannot configure with {instruction}")

    ir_vec = []
    dr_vec = []
    for dev in chain.devices:
        if dev.name in targets:
            ir_vec.append(to_bits(dev.codes[instruction], dev.ir_length))
            dr_vec.append([int(b) for b in targets[dev.name]])
        else:
            ir_vec.append(to_bits(dev.codes[BYPASS], dev.ir_length))
            dr_vec.append([0])
    ir_bits = _chain_vector(ir_vec)
    dr_bits = _chain_vector(dr_vec)

    # the outcome and cost of a configure never depend on prior register state
    key = (tuple(ir_bits), tuple(dr_bits))
    if key in chain._walked and chain.tap.trace is None:
        for dev in chain.devices:
            if dev.name in targets:
                dev.current_instruction = instruction
                dev.boundary_register = [int(b) for b in targets[dev.name]]
            else:
                dev.current_instruction = BYPASS
        cost = chain._walked[key]
        chain.tap.cycles += cost
        return cost

    _, ir_cost = scan(chain, "IR", ir_bits)
    _, dr_cost = scan(chain, "DR", dr_bits)
    chain._walked[key] = ir_cost + dr_cost
    return ir_cost + dr_cost


def configure_cost(ir_lengths, dr_lengths) -> int:
    """Closed-form TCK count of one IR scan plus one DR scan."""
    return (sum(ir_lengths) + 6) + (sum(dr_lengths) + 5)
