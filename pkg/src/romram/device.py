"""Compact NMOS drain-current model with two threshold flavors.

A single smooth expression covers subthreshold conduction (exponential in
gate voltage with a configurable swing) and strong inversion (square law),
saturating in drain-source voltage.  The read port of every bit-cell is two
of these devices in series; the flavor of the pair encodes the ROM bit
(high threshold = 0, low threshold = 1).

Local threshold variation is sampled with a counter-based scheme (Philox),
so a draw is a pure function of (seed, draw_index) no matter how many
workers evaluate it or in what order.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

BOLTZMANN_OVER_Q = 8.617333262e-5  # V/K
LN10 = math.log(10.0)

# thermal limit of the subthreshold swing at 300 K, with 1% slack
_MIN_SWING = 0.060 * 0.99


class InvalidDeviceParams(ValueError):
    """Device parameters violate a model invariant."""


class VtFlavor(enum.Enum):
    """Threshold flavor of a read-port device; doubles as the stored ROM bit."""

    HIGH_VT = 0  # ROM bit 0
    LOW_VT = 1   # ROM bit 1

    @property
    def rom_bit(self) -> int:
        return self.value


@dataclass(frozen=True)
class DeviceParams:
    """Technology parameters shared by all read-port devices.

    Defaults are representative of a low-voltage FD-SOI node; they are
    configuration, not measured data.  ``transconductance_k`` is the
    square-law coefficient before division by the slope factor.
    """

    vt_low: float = 0.23          # V, nominal threshold of the low-Vt flavor
    vt_high: float = 0.65         # V, nominal threshold of the high-Vt flavor
    subthreshold_swing: float = 0.080  # V/decade
    transconductance_k: float = 8e-4   # A/V^2
    dibl_factor: float = 0.0      # threshold shift per volt of vds
    off_floor_current: float = 1e-12   # A, leakage floor at full vds
    temperature: float = 300.0    # K

    def __post_init__(self) -> None:
        if not (self.vt_high > self.vt_low > 0.0):
            raise InvalidDeviceParams(
                f"need vt_high > vt_low > 0, got {self.vt_high} / {self.vt_low}"
            )
        if self.subthreshold_swing < _MIN_SWING:
            raise InvalidDeviceParams(
                f"subthreshold swing {self.subthreshold_swing} V/dec is below the "
                f"300 K thermal limit ({_MIN_SWING:.4f} V/dec)"
            )
        if self.transconductance_k <= 0.0:
            raise InvalidDeviceParams("transconductance_k must be > 0")
        if self.off_floor_current <= 0.0:
            raise InvalidDeviceParams("off_floor_current must be > 0")
        if self.temperature <= 0.0:
            raise InvalidDeviceParams("temperature must be > 0")
        if self.dibl_factor < 0.0:
            raise InvalidDeviceParams("dibl_factor must be >= 0")

    @property
    def thermal_voltage(self) -> float:
        return BOLTZMANN_OVER_Q * self.temperature

    @property
    def slope_factor(self) -> float:
        """Subthreshold slope factor n = swing / (U_T ln 10)."""
        return self.subthreshold_swing / (self.thermal_voltage * LN10)

    @property
    def specific_current(self) -> float:
        """Current prefactor 2 n k U_T^2 of the interpolation."""
        return 2.0 * self.slope_factor * self.transconductance_k * self.thermal_voltage**2

    def vt_nominal(self, flavor: VtFlavor) -> float:
        return self.vt_low if flavor is VtFlavor.LOW_VT else self.vt_high


@dataclass(frozen=True)
class DeviceInstance:
    """One read-port transistor: a flavor plus its sampled local Vt shift."""

    flavor: VtFlavor
    delta_vt: float = 0.0


@dataclass(frozen=True)
class VariationSpec:
    """Local threshold-variation model: zero-mean Gaussian, counter-based draws."""

    sigma_vt: float = 0.025  # V
    seed: int = 1
    distribution: str = "gaussian"

    def __post_init__(self) -> None:
        if self.sigma_vt < 0.0:
            raise InvalidDeviceParams("sigma_vt must be >= 0")
        if self.distribution != "gaussian":
            raise InvalidDeviceParams(f"unsupported distribution {self.distribution!r}")


def _softplus(x: np.ndarray | float) -> np.ndarray:
    # log(1 + e^x), stable in both tails
    return np.logaddexp(0.0, x)


def _channel_current(
    vgs: np.ndarray | float,
    vds: np.ndarray | float,
    vt_eff: np.ndarray | float,
    params: DeviceParams,
) -> np.ndarray:
    """Smooth forward-minus-reverse interpolation current (clamped to vds >= 0)."""
    ut = params.thermal_voltage
    n = params.slope_factor
    vds = np.maximum(vds, 0.0)
    u_f = (np.asarray(vgs, dtype=float) - vt_eff) / (n * ut)
    u_r = u_f - vds / ut
    i_norm = _softplus(0.5 * u_f) ** 2 - _softplus(0.5 * u_r) ** 2
    floor = params.off_floor_current * -np.expm1(-vds / ut)
    return params.specific_current * i_norm + floor


def drain_current_raw(
    vgs: np.ndarray | float,
    vds: np.ndarray | float,
    vt_base: np.ndarray | float,
    params: DeviceParams,
) -> np.ndarray:
    """Vectorized current for devices whose pre-DIBL threshold is ``vt_base``."""
    vds = np.maximum(vds, 0.0)
    vt_eff = vt_base - params.dibl_factor * vds
    return _channel_current(vgs, vds, vt_eff, params)


def drain_current(
    vgs: float, vds: float, device: DeviceInstance, params: DeviceParams
) -> float:
    """Drain current of a single device in the pull-down direction.

    The expression is continuous and monotone in both terminal voltages:
    exponential below threshold (slope = subthreshold swing), square-law
    above, smoothly saturating in vds, floored at ``off_floor_current``.
    """
    if vds < 0.0:
        raise ValueError("drain_current models the pull-down direction only (vds >= 0)")
    vt_base = params.vt_nominal(device.flavor) + device.delta_vt
    return float(drain_current_raw(vgs, vds, vt_base, params))


def _philox_words(seed: int, draw_indices: np.ndarray) -> np.ndarray:
    """First 64-bit word of the Philox block at counter=draw_index, per index.

    Dense index ranges are generated in one bulk pass; a draw's value depends
    only on (seed, draw_index).
    """
    draw_indices = np.asarray(draw_indices, dtype=np.uint64)
    if draw_indices.size == 0:
        return np.empty(0, dtype=np.uint64)
    lo = int(draw_indices.min())
    hi = int(draw_indices.max())
    span = hi - lo + 1
    if span <= 4 * draw_indices.size:  # dense: one stream, stride 4 words/block
        bg = np.random.Philox(key=seed)
        bg.advance(lo)
        raw = bg.random_raw(4 * span)
        return raw[(draw_indices - np.uint64(lo)) * np.uint64(4)]
    out = np.empty(draw_indices.size, dtype=np.uint64)
    for i, idx in enumerate(draw_indices):
        bg = np.random.Philox(key=seed)
        bg.advance(int(idx))
        out[i] = bg.random_raw(1)[0]
    return out


def _standard_normal_at(seed: int, draw_indices: np.ndarray) -> np.ndarray:
    words = _philox_words(seed, draw_indices)
    # map to the open unit interval, then through the inverse normal CDF
    u = (words >> np.uint64(11)).astype(np.float64) * 2.0**-53 + 2.0**-54
    return ndtri(u)


def sample_delta_vt(spec: VariationSpec, draw_indices: np.ndarray | int) -> np.ndarray:
    """Threshold shifts for one or more draw indices; pure in (seed, index)."""
    scalar = np.isscalar(draw_indices)
    idx = np.atleast_1d(np.asarray(draw_indices, dtype=np.uint64))
    if spec.sigma_vt == 0.0:
        out = np.zeros(idx.shape)
    else:
        out = spec.sigma_vt * _standard_normal_at(spec.seed, idx)
    return out[0] if scalar else out


def sample_device(
    flavor: VtFlavor,
    spec: VariationSpec,
    draw_index: int,
    params: DeviceParams | None = None,
) -> DeviceInstance:
    """Sample one device instance deterministically from (seed, draw_index).

    When ``params`` is given, draws that would push the effective threshold
    to zero or below are rejected and redrawn from the remaining words of
    the same Philox block (at sigma values of practical interest this is a
    once-in-1e20 event).
    """
    delta = float(sample_delta_vt(spec, draw_index))
    if params is not None and spec.sigma_vt > 0.0:
        vt_nom = params.vt_nominal(flavor)
        retry = 1
        while vt_nom + delta <= 0.0:
            if retry > 3:
                raise InvalidDeviceParams(
                    f"could not sample a positive threshold at draw {draw_index}"
                )
            bg = np.random.Philox(key=spec.seed)
            bg.advance(int(draw_index))
            word = bg.random_raw(4)[retry]
            u = (int(word) >> 11) * 2.0**-53 + 2.0**-54
            delta = spec.sigma_vt * float(ndtri(u))
            retry += 1
    return DeviceInstance(flavor=flavor, delta_vt=delta)
