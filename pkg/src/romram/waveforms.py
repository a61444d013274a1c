"""Piecewise-constant control waveforms for one read event.

A read event drives two controls: the read word line (RWL, gate of the
upper read-port device) and the shared source line (SL, bottom of the
stack).  Both are piecewise-constant; segment boundaries are the only
places a level may change.
"""
from __future__ import annotations

from dataclasses import dataclass, field


class WaveformError(ValueError):
    """Segment times or levels violate the waveform contract."""


@dataclass(frozen=True)
class ControlWaveforms:
    """Segment start times plus RWL/SL levels per segment, covering [0, duration]."""

    times: tuple[float, ...]  # segment starts, times[0] == 0, strictly increasing
    rwl: tuple[float, ...]    # volts, one per segment
    vsl: tuple[float, ...]    # volts, one per segment
    duration: float

    def __post_init__(self) -> None:
        if self.duration <= 0.0:
            raise WaveformError("duration must be > 0")
        if not self.times or self.times[0] != 0.0:
            raise WaveformError("first segment must start at t = 0")
        if len(self.times) != len(self.rwl) or len(self.times) != len(self.vsl):
            raise WaveformError("times, rwl and vsl must have equal lengths")
        for a, b in zip(self.times, self.times[1:]):
            if b <= a:
                raise WaveformError("segment times must be strictly increasing")
        if self.times[-1] >= self.duration:
            raise WaveformError("last segment must start before duration")

    def levels_at(self, t: float) -> tuple[float, float]:
        """(rwl, vsl) in effect at time t."""
        idx = 0
        for i, start in enumerate(self.times):
            if start <= t:
                idx = i
            else:
                break
        return self.rwl[idx], self.vsl[idx]

    def boundaries(self) -> list[float]:
        """Interior segment boundaries (excludes 0 and duration)."""
        return [t for t in self.times if 0.0 < t < self.duration]

    def validate_levels(self, vdd: float, reliability_limit: float) -> None:
        """RWL levels must be 0 or vdd; SL levels must respect the stress limit."""
        for level in self.rwl:
            if level not in (0.0, vdd):
                raise WaveformError(f"rwl level {level} V is neither 0 nor vdd={vdd} V")
        for level in self.vsl:
            if abs(level) > reliability_limit:
                raise WaveformError(
                    f"|vsl| = {abs(level)} V exceeds the reliability limit "
                    f"{reliability_limit} V"
                )

    @classmethod
    def read_pulse(
        cls, vdd: float, vsl: float, rwl_pulse: float, duration: float | None = None
    ) -> "ControlWaveforms":
        """RWL high on [0, rwl_pulse), low after; SL constant.

        A zero-width pulse produces an event with RWL low throughout.
        """
        if duration is None:
            duration = rwl_pulse
        if rwl_pulse <= 0.0:
            return cls(times=(0.0,), rwl=(0.0,), vsl=(vsl,), duration=duration)
        if rwl_pulse >= duration:
            return cls(times=(0.0,), rwl=(vdd,), vsl=(vsl,), duration=duration)
        return cls(
            times=(0.0, rwl_pulse), rwl=(vdd, 0.0), vsl=(vsl, vsl), duration=duration
        )
