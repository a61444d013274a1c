"""Array-level container: ROM image programming, RAM state, word reads/writes.

The ROM image fixes each cell's read-port flavor at build time and can never
change afterwards; the RAM plane is ordinary mutable state.  Reads go
through the transient protocol per column, with every column of a row
sharing the same control waveform (the source line is modelled per column
in dual-context mode by default, switchable to a per-array two-pass scheme).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .device import DeviceInstance, DeviceParams, VariationSpec, VtFlavor, sample_delta_vt
from .dynamics import BitCell, SimConfig, simulate_stack_batch
from .protocol import Mode, ModeConfig, ProtocolError, sense_batch, sl_select


class AddressError(IndexError):
    """Row or column outside the array."""


class RomImageError(ValueError):
    """A ROM image file or matrix is malformed."""


@dataclass(frozen=True)
class ArrayConfig:
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")

    @property
    def word_width(self) -> int:
        return self.cols


class RomImage:
    """Immutable rows x cols matrix of ROM bits."""

    def __init__(self, bits: np.ndarray):
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise RomImageError("ROM image must be a 2-D matrix")
        if not np.isin(bits, (0, 1)).all():
            raise RomImageError("ROM image entries must be 0 or 1")
        bits = bits.copy()
        bits.flags.writeable = False
        self._bits = bits

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def shape(self) -> tuple[int, int]:
        return self._bits.shape

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RomImage) and np.array_equal(self._bits, other._bits)

    @classmethod
    def checkerboard(cls, rows: int, cols: int) -> "RomImage":
        r, c = np.indices((rows, cols))
        return cls(((r + c) % 2).astype(np.uint8))

    @classmethod
    def from_text(cls, text: str) -> "RomImage":
        """One row per line, characters '0'/'1'."""
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise RomImageError("empty ROM image")
        width = len(lines[0])
        rows = []
        for i, ln in enumerate(lines):
            if len(ln) != width:
                raise RomImageError(f"line {i + 1} has {len(ln)} bits, expected {width}")
            if set(ln) - {"0", "1"}:
                raise RomImageError(f"line {i + 1} contains characters other than 0/1")
            rows.append([int(ch) for ch in ln])
        return cls(np.array(rows, dtype=np.uint8))

    @classmethod
    def from_hex(cls, text: str, cols: int) -> "RomImage":
        """One row per line as hex digits, row-major, most significant bit first.

        Bit (r, c) is bit number ``cols - 1 - c`` of row r's value: column 0
        maps to the most significant bit of the line.
        """
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise RomImageError("empty ROM image")
        digits = (cols + 3) // 4
        rows = []
        for i, ln in enumerate(lines):
            if ln.lower().startswith("0x"):
                ln = ln[2:]
            if len(ln) != digits:
                raise RomImageError(
                    f"line {i + 1} has {len(ln)} hex digits, expected {digits} for {cols} columns"
                )
            try:
                value = int(ln, 16)
            except ValueError as exc:
                raise RomImageError(f"line {i + 1} is not valid hex: {ln!r}") from exc
            if value >= 1 << cols:
                raise RomImageError(f"line {i + 1} value exceeds {cols} bits")
            rows.append([(value >> (cols - 1 - c)) & 1 for c in range(cols)])
        return cls(np.array(rows, dtype=np.uint8))

    @classmethod
    def from_file(cls, path: str | Path, cols: int | None = None) -> "RomImage":
        """Load a .hex file (requires ``cols``) or a 0/1 text file."""
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".hex":
            if cols is None:
                raise RomImageError("hex ROM images need the column count")
            return cls.from_hex(text, cols)
        return cls.from_text(text)

    def to_text(self) -> str:
        return "\n".join("".join(str(b) for b in row) for row in self._bits) + "\n"

    def to_hex(self) -> str:
        rows, cols = self._bits.shape
        digits = (cols + 3) // 4
        out = []
        for r in range(rows):
            value = 0
            for c in range(cols):
                value = (value << 1) | int(self._bits[r, c])
            out.append(format(value, f"0{digits}x"))
        return "\n".join(out) + "\n"


class MemoryArray:
    """Single-writer array of CS/DC cells with per-device variation draws.

    Concurrent readers are safe; writes and mode entries require exclusive
    access.  The ROM plane (flavor matrix and device thresholds) is fixed at
    construction.
    """

    def __init__(
        self,
        config: ArrayConfig,
        rom: RomImage,
        variation: VariationSpec,
        params: DeviceParams | None = None,
    ):
        if rom.shape != (config.rows, config.cols):
            raise RomImageError(
                f"ROM image shape {rom.shape} does not match array "
                f"{(config.rows, config.cols)}"
            )
        self.config = config
        self.rom = rom
        self.variation = variation
        n = config.rows * config.cols
        # draw_index = (row*cols + col)*2 + device_position, position 0 = upper
        draws = sample_delta_vt(variation, np.arange(2 * n, dtype=np.uint64))
        self._delta_up = draws[0::2].reshape(config.rows, config.cols)
        self._delta_lo = draws[1::2].reshape(config.rows, config.cols)
        self._q = np.zeros((config.rows, config.cols), dtype=np.uint8)
        self.rom_only_mode = False

    # -- state access ------------------------------------------------------

    def _check_address(self, row: int, col: int | None = None) -> None:
        if not (0 <= row < self.config.rows):
            raise AddressError(f"row {row} outside [0, {self.config.rows})")
        if col is not None and not (0 <= col < self.config.cols):
            raise AddressError(f"col {col} outside [0, {self.config.cols})")

    def flavor(self, row: int, col: int) -> VtFlavor:
        self._check_address(row, col)
        return VtFlavor.LOW_VT if self.rom.bits[row, col] else VtFlavor.HIGH_VT

    def cell(self, row: int, col: int) -> BitCell:
        self._check_address(row, col)
        fl = self.flavor(row, col)
        return BitCell(
            q=int(self._q[row, col]),
            rom_flavor=fl,
            upper_device=DeviceInstance(fl, float(self._delta_up[row, col])),
            lower_device=DeviceInstance(fl, float(self._delta_lo[row, col])),
        )

    @property
    def ram_state(self) -> np.ndarray:
        return self._q.copy()

    def ram_word(self, row: int) -> list[int]:
        self._check_address(row)
        return [int(b) for b in self._q[row]]

    # -- mutation ----------------------------------------------------------

    def write_ram(self, row: int, col: int, bit: int) -> None:
        """Write one RAM bit through the (behavioral) write port."""
        self._check_address(row, col)
        if bit not in (0, 1):
            raise ValueError("bit must be 0 or 1")
        self._q[row, col] = bit
        self.rom_only_mode = False

    def load_ram(self, text: str) -> None:
        """Restore the whole RAM plane from the 0/1 text format."""
        image = RomImage.from_text(text)
        if image.shape != (self.config.rows, self.config.cols):
            raise RomImageError("RAM dump shape does not match the array")
        self._q = image.bits.copy()
        self.rom_only_mode = False

    def dump_ram(self) -> str:
        return RomImage(self._q).to_text()

    def enter_rom_only_mode(self) -> None:
        """Surrender RAM contents (all q = 0) and mark the array ROM-only."""
        self._q[:, :] = 0
        self.rom_only_mode = True

    # -- transient reads ----------------------------------------------------

    def _row_arrays(
        self, row: int, params: DeviceParams, cfg: SimConfig
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        flavors = self.rom.bits[row]
        vt_nom = np.where(flavors == 1, params.vt_low, params.vt_high)
        vt_up = vt_nom + self._delta_up[row]
        vt_lo = vt_nom + self._delta_lo[row]
        gate = self._q[row].astype(float) * cfg.vdd
        return vt_up, vt_lo, gate

    def read_word(
        self,
        mode_config: ModeConfig,
        row: int,
        cfg: SimConfig,
        params: DeviceParams,
    ) -> list[int] | tuple[list[int], list[int]]:
        """Word-wide read of one row under the given mode.

        Returns the RAM word, the ROM word, or ``(ram_word, rom_word)`` for
        the dual-context mode.
        """
        self._check_address(row)
        mode_config.validate(cfg, params)
        if mode_config.mode is Mode.ROM_ONLY and not self.rom_only_mode:
            raise ProtocolError("array is not in ROM-only mode (RAM was not surrendered)")
        vt_up, vt_lo, gate = self._row_arrays(row, params, cfg)
        plan1 = mode_config.phase1
        traces1 = simulate_stack_batch(
            vt_up, vt_lo, gate, plan1.waveform(cfg.vdd), cfg, params
        )
        bits1 = sense_batch(traces1, plan1.sense)
        if mode_config.mode is not Mode.DUAL_CONTEXT:
            return [int(b) for b in bits1]

        rom_bits = np.zeros_like(bits1)
        if mode_config.sl_granularity == "per_column":
            # each column's phase-II SL level follows its own phase-I bit
            for ram_bit in (0, 1):
                sel = bits1 == ram_bit
                if not sel.any():
                    continue
                plan2 = sl_select(ram_bit, mode_config)
                traces2 = simulate_stack_batch(
                    vt_up[sel], vt_lo[sel], gate[sel], plan2.waveform(cfg.vdd), cfg, params
                )
                rom_bits[sel] = sense_batch(traces2, plan2.sense)
        else:
            # shared source line: run phase II twice (negative then positive
            # pass); every column latches its result during the pass that
            # matches its phase-I bit
            for ram_bit in (0, 1):
                plan2 = sl_select(ram_bit, mode_config)
                traces2 = simulate_stack_batch(
                    vt_up, vt_lo, gate, plan2.waveform(cfg.vdd), cfg, params
                )
                pass_bits = sense_batch(traces2, plan2.sense)
                sel = bits1 == ram_bit
                rom_bits[sel] = pass_bits[sel]
        return [int(b) for b in bits1], [int(b) for b in rom_bits]


def build_array(
    config: ArrayConfig,
    rom: RomImage,
    variation: VariationSpec,
    params: DeviceParams | None = None,
) -> MemoryArray:
    """Assemble an array: flavors from the ROM image, q = 0 everywhere."""
    return MemoryArray(config, rom, variation, params)


def write_ram(array: MemoryArray, row: int, col: int, bit: int) -> None:
    array.write_ram(row, col, bit)


def enter_rom_only_mode(array: MemoryArray) -> None:
    array.enter_rom_only_mode()


def read_word(
    array: MemoryArray,
    mode_config: ModeConfig,
    row: int,
    cfg: SimConfig,
    params: DeviceParams,
) -> list[int] | tuple[list[int], list[int]]:
    return array.read_word(mode_config, row, cfg, params)
