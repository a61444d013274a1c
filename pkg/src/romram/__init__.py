"""Transient simulator and analysis toolkit for a ROM-augmented 8T SRAM cell.

The read port of an 8T SRAM cell is built from either high- or low-threshold
devices; the flavor encodes a fixed ROM bit next to the ordinary RAM bit.
This package models the read bit-line transient, the sensing protocols that
recover one or both bits (context-switching and dual-context modes), and
the Monte-Carlo robustness and performance analysis around them.
"""
from .analysis import (
    BaselineCell,
    CalibrationInfeasible,
    CalibrationResult,
    McConfig,
    MetricsReport,
    YieldReport,
    calibrate,
    measure_metrics,
    run_monte_carlo,
)
from .device import (
    DeviceInstance,
    DeviceParams,
    InvalidDeviceParams,
    VariationSpec,
    VtFlavor,
    drain_current,
    sample_device,
)
from .dynamics import (
    BatchTraces,
    BitCell,
    ReliabilityWarning,
    SimConfig,
    SimulationError,
    VoltageTrace,
    leakage_power,
    simulate_read_batch,
    simulate_read_event,
)
from .memory import (
    AddressError,
    ArrayConfig,
    MemoryArray,
    RomImage,
    build_array,
    enter_rom_only_mode,
    read_word,
    write_ram,
)
from .protocol import (
    Mode,
    ModeConfig,
    PhasePlan,
    ProtocolError,
    SenseConfig,
    read_dual_context,
    read_ram_only,
    read_rom_only,
    sense,
    sl_select,
)
from .waveforms import ControlWaveforms, WaveformError

__version__ = "0.1.0"
