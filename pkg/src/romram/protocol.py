"""Read protocols: ROM-only, the two RAM-only variants, and dual-context.

Each mode is a small state machine built from the same primitives: drive a
phase plan (SL level + RWL pulse), let the bit-line evolve, strobe an ideal
comparator once.  The dual-context mode chains two phases, re-pre-charging
the bit-line in between and selecting the phase-II source-line level from
the phase-I result.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .device import DeviceParams
from .dynamics import BatchTraces, BitCell, SimConfig, VoltageTrace, simulate_read_event
from .waveforms import ControlWaveforms


class ProtocolError(ValueError):
    """A mode configuration or precondition is violated."""


class Mode(enum.Enum):
    ROM_ONLY = "rom_only"
    RAM_ONLY_RELIABILITY = "ram_only_reliability"
    RAM_ONLY_DELAY = "ram_only_delay"
    DUAL_CONTEXT = "dual_context"


class Polarity(enum.Enum):
    DISCHARGE_MEANS_ONE = "discharge_means_one"


@dataclass(frozen=True)
class SenseConfig:
    """Ideal strobed comparator: reference level plus strobe instant.

    ``t_strobe`` is measured from the RWL rise, which is t = 0 of the phase
    waveform.
    """

    v_ref: float
    t_strobe: float


@dataclass(frozen=True)
class PhasePlan:
    """Per-phase control settings for one read event."""

    vsl: float
    rwl_pulse: float
    sense: SenseConfig
    polarity: Polarity = Polarity.DISCHARGE_MEANS_ONE
    precharge_interval: float = 0.5e-9  # settle time granted before RWL rises

    @property
    def duration(self) -> float:
        return max(self.rwl_pulse, self.sense.t_strobe)

    def waveform(self, vdd: float) -> ControlWaveforms:
        return ControlWaveforms.read_pulse(vdd, self.vsl, self.rwl_pulse, self.duration)

    def with_sense(self, sense: SenseConfig) -> "PhasePlan":
        return replace(self, sense=sense)

    def validate(self, cfg: SimConfig) -> None:
        if abs(self.vsl) > cfg.reliability_limit:
            raise ProtocolError(
                f"|vsl| = {abs(self.vsl)} V exceeds reliability limit {cfg.reliability_limit} V"
            )
        if not (0.0 < self.sense.v_ref < cfg.vdd):
            raise ProtocolError(f"v_ref = {self.sense.v_ref} V must lie strictly inside (0, vdd)")
        if not (0.0 < self.sense.t_strobe <= self.duration):
            raise ProtocolError(
                f"t_strobe = {self.sense.t_strobe} s outside (0, {self.duration} s]"
            )
        if self.rwl_pulse < 0.0 or self.precharge_interval < 0.0:
            raise ProtocolError("rwl_pulse and precharge_interval must be >= 0")


@dataclass(frozen=True)
class ModeConfig:
    """A fully specified operating mode (phase plans plus sensing settings)."""

    mode: Mode
    phase1: PhasePlan
    phase2_if_ram0: PhasePlan | None = None
    phase2_if_ram1: PhasePlan | None = None
    sl_granularity: str = "per_column"  # dual-context arrays: per_column | per_array

    def validate(self, cfg: SimConfig, params: DeviceParams) -> None:
        self.phase1.validate(cfg)
        if self.mode is Mode.ROM_ONLY:
            if self.phase1.vsl >= 0.0:
                raise ProtocolError("ROM-only mode requires a negative source line")
        elif self.mode is Mode.RAM_ONLY_RELIABILITY:
            if self.phase1.vsl != 0.0:
                raise ProtocolError("reliability-friendly RAM mode requires a grounded source line")
        elif self.mode is Mode.RAM_ONLY_DELAY:
            if self.phase1.vsl >= 0.0:
                raise ProtocolError("delay-friendly RAM mode requires a negative source line")
        elif self.mode is Mode.DUAL_CONTEXT:
            if self.phase1.vsl != 0.0:
                raise ProtocolError("dual-context phase I requires a grounded source line")
            if self.phase2_if_ram0 is None or self.phase2_if_ram1 is None:
                raise ProtocolError("dual-context mode requires both phase-II plans")
            self.phase2_if_ram0.validate(cfg)
            self.phase2_if_ram1.validate(cfg)
            if self.phase2_if_ram0.vsl >= 0.0:
                raise ProtocolError("phase II for RAM=0 requires a negative source line")
            if self.phase2_if_ram1.vsl <= 0.0:
                raise ProtocolError("phase II for RAM=1 requires a positive source line")
            # gate condition: |vsl| must exceed the low threshold so the
            # low-Vt device turns on while the high-Vt one stays off
            if abs(self.phase2_if_ram0.vsl) <= params.vt_low:
                raise ProtocolError(
                    f"|phase-II vsl| = {abs(self.phase2_if_ram0.vsl)} V does not exceed "
                    f"the low threshold {params.vt_low} V"
                )
        if self.sl_granularity not in ("per_column", "per_array"):
            raise ProtocolError(f"unknown sl_granularity {self.sl_granularity!r}")


def sense(trace: VoltageTrace, sc: SenseConfig) -> int:
    """Strobe the comparator: 1 when the bit-line discharged below the reference.

    Linear interpolation between trace samples; exact equality resolves to 0.
    """
    try:
        v = trace.value_at(sc.t_strobe)
    except ValueError as exc:
        raise ProtocolError(f"strobe outside trace range: {exc}") from exc
    return 1 if v < sc.v_ref else 0


def sense_batch(traces: BatchTraces, sc: SenseConfig) -> np.ndarray:
    """Vectorized comparator over a batch of lanes."""
    try:
        v = traces.values_at(sc.t_strobe)
    except ValueError as exc:
        raise ProtocolError(f"strobe outside trace range: {exc}") from exc
    return (v < sc.v_ref).astype(np.uint8)


def sl_select(ram_bit: int, mc: ModeConfig) -> PhasePlan:
    """Dual-context phase-II plan chosen by the phase-I RAM bit."""
    if mc.mode is not Mode.DUAL_CONTEXT:
        raise ProtocolError("sl_select is only defined for the dual-context mode")
    if ram_bit not in (0, 1):
        raise ProtocolError("ram_bit must be 0 or 1")
    plan = mc.phase2_if_ram0 if ram_bit == 0 else mc.phase2_if_ram1
    assert plan is not None  # guaranteed by ModeConfig.validate
    return plan


def read_rom_only(
    cell: BitCell, mc: ModeConfig, cfg: SimConfig, params: DeviceParams
) -> int:
    """ROM-only read; the array must have been initialized with q = 0."""
    if mc.mode is not Mode.ROM_ONLY:
        raise ProtocolError(f"mode is {mc.mode}, not ROM-only")
    if cell.q != 0:
        raise ProtocolError("ROM-only mode requires q = 0 (enter ROM-only mode first)")
    trace = simulate_read_event(cell, mc.phase1.waveform(cfg.vdd), cfg, params)
    return sense(trace, mc.phase1.sense)


def read_ram_only(
    cell: BitCell, mc: ModeConfig, cfg: SimConfig, params: DeviceParams
) -> int:
    """RAM-only read, reliability-friendly or delay-friendly variant."""
    if mc.mode not in (Mode.RAM_ONLY_RELIABILITY, Mode.RAM_ONLY_DELAY):
        raise ProtocolError(f"mode is {mc.mode}, not a RAM-only variant")
    trace = simulate_read_event(cell, mc.phase1.waveform(cfg.vdd), cfg, params)
    return sense(trace, mc.phase1.sense)


def read_dual_context(
    cell: BitCell, mc: ModeConfig, cfg: SimConfig, params: DeviceParams
) -> tuple[int, int]:
    """Two-phase read returning (RAM bit, ROM bit) without disturbing the cell.

    Phase I senses the RAM bit with a grounded source line; the bit-line is
    then re-pre-charged and phase II drives the source line negative or
    positive according to the phase-I result before sensing the ROM bit.
    """
    if mc.mode is not Mode.DUAL_CONTEXT:
        raise ProtocolError(f"mode is {mc.mode}, not dual-context")
    trace1 = simulate_read_event(cell, mc.phase1.waveform(cfg.vdd), cfg, params)
    ram = sense(trace1, mc.phase1.sense)
    plan2 = sl_select(ram, mc)
    trace2 = simulate_read_event(cell, plan2.waveform(cfg.vdd), cfg, params)
    rom = sense(trace2, plan2.sense)
    return ram, rom
