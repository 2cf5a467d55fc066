"""Analogue boundary modules, AT1/AT2 bus pairs and STA400 mux emulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import signals as sg
from .errors import BadChannel, BusConflict

AT1 = "AT1"
AT2 = "AT2"
IDLE_LEVEL = 0.0


@dataclass(frozen=True)
class AbmSwitchState:
    core_disconnect: bool = False  # SD
    to_at1: bool = False  # SB1
    to_at2: bool = False  # SB2
    to_vh: bool = False  # SH
    to_vl: bool = False  # SL
    to_ground: bool = False  # SG
    bypass_link: bool = False

    def __post_init__(self):
        if self.to_vh + self.to_vl + self.to_ground > 1:
            raise ValueError("at most one of SH, SL, SG may be closed")
        if self.to_at1 and self.to_at2 and not self.bypass_link:
            raise ValueError("SB1 and SB2 together only in bypass-link mode")


@dataclass(frozen=True)
class AbmTransferModel:
    v_max: float = 3.92
    v_min: float = -0.640
    cutoff: float = 1e6
    dc_noise_bound: float = 0.010

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")

    def gain(self, frequency: float) -> float:
        r = frequency / self.cutoff
        return 1.0 / math.sqrt(1.0 + r * r)

    def phase(self, frequency: float) -> float:
        return -math.atan(frequency / self.cutoff)


DEFAULT_ABM = AbmTransferModel()


def abm_transfer(w: sg.Waveform, model: AbmTransferModel = DEFAULT_ABM) -> sg.Waveform:
    """Single-pole low-pass at the model cutoff followed by rail clipping.

    The returned waveform is noiseless; measurement adds the DC noise when
    it samples.
    """
    return sg.clip(sg.lowpass(w, model.cutoff), model.v_min, model.v_max)


@dataclass
class Segment:
    name: str
    pair: int
    nodes: tuple[str, ...]


@dataclass
class Attachment:
    node: str
    line: str
    role: str  # "drive": node signal onto the line; "receive": line drives the node


@dataclass
class AnalogBus:
    pairs: int
    segments: dict[str, Segment] = field(default_factory=dict)
    attachments: dict[int, list[Attachment]] = field(default_factory=dict)
    linked: dict[int, bool] = field(default_factory=dict)
    model: AbmTransferModel = DEFAULT_ABM
    abm_states: dict[str, AbmSwitchState] = field(default_factory=dict)

    def __post_init__(self):
        if self.pairs < 1:
            raise ValueError("need at least one bus pair")
        for i in range(self.pairs):
            self.attachments.setdefault(i, [])
            self.linked.setdefault(i, False)
        owners = {}
        for seg in self.segments.values():
            if not 0 <= seg.pair < self.pairs:
                raise ValueError(f"segment {seg.name} names missing pair {seg.pair}")
            for node in seg.nodes:
                if node in owners:
                    raise ValueError(f"node {node} in segments {owners[node]} and {seg.name}")
                owners[node] = seg.name
        used = [s.pair for s in self.segments.values()]
        if len(used) != len(set(used)):
            raise ValueError("each segment must own its own bus pair")

    @property
    def bus_lines(self) -> int:
        return 2 * self.pairs

    def segment_of(self, node: str) -> Segment | None:
        for seg in self.segments.values():
            if node in seg.nodes:
                return seg
        return None

    def has_access(self, node: str) -> bool:
        return self.segment_of(node) is not None

    def attach(self, pair: int, line: str, node: str, role: str = "drive"):
        if line not in (AT1, AT2):
            raise ValueError(f"unknown bus line {line}")
        self.attachments[pair].append(Attachment(node, line, role))
        st = self.abm_states.get(node, AbmSwitchState())
        st = replace(st, to_at1=st.to_at1 or line == AT1, to_at2=st.to_at2 or line == AT2,
                     core_disconnect=st.core_disconnect or role == "receive",
                     bypass_link=st.bypass_link or self.linked[pair])
        self.abm_states[node] = st

    def detach_all(self, pair: int):
        for att in self.attachments[pair]:
            self.abm_states.pop(att.node, None)
        self.attachments[pair] = []
        self.linked[pair] = False

    def link(self, pair: int):
        self.linked[pair] = True

    def drivers(self, pair: int, line: str) -> list[str]:
        return [a.node for a in self.attachments[pair] if a.line == line and a.role == "drive"]


def bus_resolve(bus: AnalogBus, pair_index: int, t_window, sources) -> tuple[sg.Waveform, sg.Waveform]:
    """Waveforms seen on AT1 and AT2 of one pair.

    `sources` maps node name to its waveform over `t_window` (a mapping or a
    callable ``(node, window) -> Waveform``). Undriven lines sit at the idle
    level; a linked pair carries its single driver on both lines.
    """
    if not 0 <= pair_index < bus.pairs:
        raise IndexError(f"bus has {bus.pairs} pairs")

    def source(node):
        w = sources(node, t_window) if callable(sources) else sources[node]
        return sg.resolve_highz(w, IDLE_LEVEL)

    d1 = bus.drivers(pair_index, AT1)
    d2 = bus.drivers(pair_index, AT2)
    if bus.linked[pair_index]:
        both = d1 + d2
        if len(both) > 1:
            raise BusConflict(f"linked pair {pair_index} has drivers {both}")
        if not both:
            return sg.DC(IDLE_LEVEL), sg.DC(IDLE_LEVEL)
        w = abm_transfer(source(both[0]), bus.model)
        return w, w
    lines = []
    for line, drv in ((AT1, d1), (AT2, d2)):
        if len(drv) > 1:
            raise BusConflict(f"{line} of pair {pair_index} driven by {drv}")
        lines.append(abm_transfer(source(drv[0]), bus.model) if drv else sg.DC(IDLE_LEVEL))
    return lines[0], lines[1]


CORE = "core"
AT1_TAP = "at1_tap"
AT2_TAP = "at2_tap"
INJECT = "inject"
ROUTES = (CORE, AT1_TAP, AT2_TAP, INJECT)


@dataclass(frozen=True)
class Sta400Block:
    """Two-channel mux spliced into driver-to-load signal paths."""

    channel_select: tuple[str, str] = (CORE, CORE)
    model: AbmTransferModel = DEFAULT_ABM

    def load_signal(self, channel: int, driver: sg.Waveform, at2: sg.Waveform | None = None) -> sg.Waveform:
        mode = self.channel_select[_check_channel(channel)]
        if mode == INJECT:
            if at2 is None:
                raise ValueError("inject routing needs the AT2 signal")
            return abm_transfer(at2, self.model)
        return driver

    def tap_signal(self, channel: int, driver: sg.Waveform) -> tuple[str | None, sg.Waveform | None]:
        """Bus line and waveform the channel contributes, if any."""
        mode = self.channel_select[_check_channel(channel)]
        if mode == AT1_TAP:
            return AT1, abm_transfer(driver, self.model)
        if mode == AT2_TAP:
            return AT2, abm_transfer(driver, self.model)
        return None, None


def _check_channel(channel):
    if channel not in (0, 1):
        raise BadChannel(f"STA400 has channels 0 and 1, not {channel}")
    return channel


def route_sta400(block: Sta400Block, channel: int, mode: str) -> Sta400Block:
    _check_channel(channel)
    if mode not in ROUTES:
        raise ValueError(f"unknown routing {mode}")
    sel = list(block.channel_select)
    sel[channel] = mode
    return replace(block, channel_select=tuple(sel))
