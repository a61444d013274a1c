"""Request/response bodies of the simulation service."""
from __future__ import annotations

from pydantic import BaseModel, Field


class BaseRequest(BaseModel):
    """Every command carries the full config document plus scalar overrides."""

    config: dict = Field(description="run-configuration document (parsed YAML/JSON)")
    overrides: dict[str, str] = Field(
        default_factory=dict, description="dotted-path scalar overrides"
    )


class SimulateRequest(BaseRequest):
    case: str = Field(description="2-bit case code: 00, 01, 10 or 11")
    mode: str
    vsl: str | None = Field(default=None, description="source-line override, e.g. '-0.10 V'")
    duration: str | None = Field(default=None, description="event window override, e.g. '0.8 ns'")
    phase: int = 1


class McRequest(BaseRequest):
    mode: str
    calibrate_first: bool = False


class CalibrateRequest(BaseRequest):
    mode: str


class Table1Request(BaseRequest):
    modes: list[str] | None = Field(
        default=None, description="mode names; 'baseline' yields the all-ones row"
    )


class SweepRequest(BaseRequest):
    parameter: str = Field(description="one of vsl, v_ref, sigma_vt, c_bl")
    values: list[float] = Field(description="sweep points in SI units")
    mode: str


class FilePayload(BaseModel):
    name: str
    content: str


class RunResponse(BaseModel):
    status: str = Field(description="ok | threshold_failed | infeasible")
    files: list[FilePayload]
    info: dict
