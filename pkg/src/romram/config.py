"""The run-configuration document: schema, validation, core-object builders.

One self-describing YAML (or JSON) document carries every knob of a run.
Unknown keys are rejected and all dimensioned values must be unit strings
("0.8 V", "20 fF", "6 ns"), so documents stay unambiguous and
version-controllable.  Scalar leaves can be overridden from the command
line with dotted paths (``sim.dt_max=5 ps``).
"""
from __future__ import annotations

from pathlib import Path
from typing import Annotated

import yaml
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError

from .analysis import BaselineCell, McConfig, parse_case
from .device import DeviceParams, VariationSpec
from .dynamics import SimConfig
from .protocol import Mode, ModeConfig, PhasePlan, Polarity, SenseConfig
from .units import parse_quantity

MODE_NAMES = tuple(m.value for m in Mode)


class ConfigError(ValueError):
    """The configuration document is malformed."""


def _dim(dimension: str):
    def convert(value):
        return parse_quantity(value, dimension)

    return BeforeValidator(convert)


Voltage = Annotated[float, _dim("voltage")]
Time = Annotated[float, _dim("time")]
Capacitance = Annotated[float, _dim("capacitance")]
Current = Annotated[float, _dim("current")]
Temperature = Annotated[float, _dim("temperature")]
Power = Annotated[float, _dim("power")]
VoltagePerDecade = Annotated[float, _dim("voltage_per_decade")]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_default=True)


class DeviceSection(_Strict):
    vt_low: Voltage = "0.23 V"
    vt_high: Voltage = "0.65 V"
    subthreshold_swing: VoltagePerDecade = "80 mV/dec"
    transconductance_k: float = 8e-4  # A/V^2
    dibl_factor: float = 0.0
    off_floor_current: Current = "1 pA"
    temperature: Temperature = "300 K"

    def build(self) -> DeviceParams:
        return DeviceParams(
            vt_low=self.vt_low,
            vt_high=self.vt_high,
            subthreshold_swing=self.subthreshold_swing,
            transconductance_k=self.transconductance_k,
            dibl_factor=self.dibl_factor,
            off_floor_current=self.off_floor_current,
            temperature=self.temperature,
        )


class SimSection(_Strict):
    vdd: Voltage = "0.8 V"
    c_bl: Capacitance = "20 fF"
    dt_max: Time = "250 ps"
    voltage_tolerance: Voltage = "0.2 mV"
    reliability_limit: Voltage = "1.3 V"
    output_points: int = 41

    def build(self) -> SimConfig:
        return SimConfig(
            vdd=self.vdd,
            c_bl=self.c_bl,
            dt_max=self.dt_max,
            voltage_tolerance=self.voltage_tolerance,
            reliability_limit=self.reliability_limit,
            output_points=self.output_points,
        )


class VariationSection(_Strict):
    sigma_vt: Voltage = "25 mV"
    seed: int = 1
    distribution: str = "gaussian"

    def build(self) -> VariationSpec:
        return VariationSpec(
            sigma_vt=self.sigma_vt, seed=self.seed, distribution=self.distribution
        )


class PhaseSection(_Strict):
    vsl: Voltage
    rwl_pulse: Time = "6 ns"
    v_ref: Voltage = "0.4 V"
    t_strobe: Time = "3 ns"
    precharge_interval: Time = "0.5 ns"

    def build(self) -> PhasePlan:
        return PhasePlan(
            vsl=self.vsl,
            rwl_pulse=self.rwl_pulse,
            sense=SenseConfig(v_ref=self.v_ref, t_strobe=self.t_strobe),
            polarity=Polarity.DISCHARGE_MEANS_ONE,
            precharge_interval=self.precharge_interval,
        )


class SingleModeSection(_Strict):
    phase1: PhaseSection


class DualModeSection(_Strict):
    phase1: PhaseSection
    phase2_if_ram0: PhaseSection
    phase2_if_ram1: PhaseSection
    sl_granularity: str = "per_column"


class ModesSection(_Strict):
    rom_only: SingleModeSection
    ram_only_reliability: SingleModeSection
    ram_only_delay: SingleModeSection
    dual_context: DualModeSection


class ArraySection(_Strict):
    rows: int = 8
    cols: int = 8
    rom_image: str | None = None  # path to a 0/1 text or .hex file; None = checkerboard


class McSection(_Strict):
    samples_per_case: int = 5000
    calibration_samples: int = 500
    cases: list[str] = Field(default_factory=lambda: ["00", "01", "10", "11"])
    min_margin: Voltage = "10 mV"
    yield_threshold: float = 1.0
    workers: int = 1
    chunk_size: int = 1024


class BaselineSection(_Strict):
    vt_mid: Voltage = "0.44 V"
    core_leakage: Power = "20 nW"
    rwl_pulse: Time = "6 ns"

    def build(self) -> BaselineCell:
        return BaselineCell(
            vt=self.vt_mid, core_leakage=self.core_leakage, rwl_pulse=self.rwl_pulse
        )


class OutputSection(_Strict):
    directory: str = "out"


class RunConfig(_Strict):
    """The complete, versioned input document."""

    device: DeviceSection = Field(default_factory=DeviceSection)
    sim: SimSection = Field(default_factory=SimSection)
    variation: VariationSection = Field(default_factory=VariationSection)
    modes: ModesSection
    array: ArraySection = Field(default_factory=ArraySection)
    mc: McSection = Field(default_factory=McSection)
    baseline: BaselineSection = Field(default_factory=BaselineSection)
    output: OutputSection = Field(default_factory=OutputSection)

    # -- builders ------------------------------------------------------------

    def device_params(self) -> DeviceParams:
        return self.device.build()

    def sim_config(self) -> SimConfig:
        return self.sim.build()

    def variation_spec(self) -> VariationSpec:
        return self.variation.build()

    def mc_config(self) -> McConfig:
        return McConfig(
            samples_per_case=self.mc.samples_per_case,
            variation=self.variation.build(),
            cases=tuple(parse_case(c) for c in self.mc.cases),
            calibration_samples=self.mc.calibration_samples,
            min_margin=self.mc.min_margin,
            yield_threshold=self.mc.yield_threshold,
            workers=self.mc.workers,
            chunk_size=self.mc.chunk_size,
        )

    def baseline_cell(self) -> BaselineCell:
        return self.baseline.build()

    def build_memory_array(self, base_path: Path | None = None):
        """Assemble the configured array; ROM image from file or checkerboard."""
        from .memory import ArrayConfig, RomImage, build_array

        array_cfg = ArrayConfig(rows=self.array.rows, cols=self.array.cols)
        if self.array.rom_image is None:
            rom = RomImage.checkerboard(self.array.rows, self.array.cols)
        else:
            path = Path(self.array.rom_image)
            if base_path is not None and not path.is_absolute():
                path = base_path / path
            rom = RomImage.from_file(path, cols=self.array.cols)
        return build_array(array_cfg, rom, self.variation.build(), self.device.build())

    def mode_config(self, name: str) -> ModeConfig:
        if name not in MODE_NAMES:
            raise ConfigError(f"unknown mode {name!r}; expected one of {MODE_NAMES}")
        section = getattr(self.modes, name)
        if isinstance(section, DualModeSection):
            mode_cfg = ModeConfig(
                mode=Mode(name),
                phase1=section.phase1.build(),
                phase2_if_ram0=section.phase2_if_ram0.build(),
                phase2_if_ram1=section.phase2_if_ram1.build(),
                sl_granularity=section.sl_granularity,
            )
        else:
            mode_cfg = ModeConfig(mode=Mode(name), phase1=section.phase1.build())
        mode_cfg.validate(self.sim_config(), self.device_params())
        return mode_cfg

    def mode_configs(self) -> dict[str, ModeConfig]:
        return {name: self.mode_config(name) for name in MODE_NAMES}


def apply_override(document: dict, path: str, raw_value: str) -> None:
    """Set a scalar leaf addressed by a dotted path; the value parses as YAML."""
    keys = path.split(".")
    node = document
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"override path {path!r}: no section {key!r}")
        node = node[key]
    if not isinstance(node, dict):
        raise ConfigError(f"override path {path!r} does not address a mapping leaf")
    try:
        value = yaml.safe_load(raw_value)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override value {raw_value!r} is not valid YAML: {exc}") from exc
    if isinstance(value, (dict, list)):
        raise ConfigError(f"override {path!r} must be a scalar, got {type(value).__name__}")
    node[keys[-1]] = value


def load_document(path: str | Path) -> dict:
    """Parse the YAML document; syntax errors keep their line numbers."""
    text = Path(path).read_text()
    return parse_document(text, source=str(path))


def parse_document(text: str, source: str = "<config>") -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return data


def validate_config(document: dict, overrides: dict[str, str] | None = None) -> RunConfig:
    """Apply overrides and validate the document against the schema."""
    if overrides:
        for path, value in overrides.items():
            apply_override(document, path, value)
    try:
        return RunConfig.model_validate(document)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            lines.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines)) from exc


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> RunConfig:
    return validate_config(load_document(path), overrides)
