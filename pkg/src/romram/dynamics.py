"""Transient simulation of one bit-cell read event.

The pre-charged read bit-line (capacitance ``c_bl``) discharges through the
two-device read stack.  The internal stack node carries no capacitance: at
every right-hand-side evaluation it is solved quasi-statically by bisection
so the upper and lower devices carry equal current.  Integration is an
explicit Heun scheme with step-doubling error control, adaptive per lane,
so a batch of cells produces bit-identical results however it is split.

The physical path runs through a compiled per-lane kernel; an injected
``stack_current_fn`` (used to cross-check the integrator against closed
forms) takes a slower vectorized path with the same stepping rule.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

# this box's TBB is too old for numba's TBB layer; numba falls back on its
# own, so the advisory warning is pure noise
warnings.filterwarnings("ignore", message=".*TBB_INTERFACE_VERSION.*")

from numba import njit, prange

from .device import (
    DeviceInstance,
    DeviceParams,
    VariationSpec,
    VtFlavor,
    drain_current_raw,
    sample_device,
)
from .waveforms import ControlWaveforms

RAIL_EPS = 1e-12     # V; lanes this close to the SL rail are frozen
H_MIN = 1e-18        # s; smallest step the controller may take
_BISECT_MAX = 48     # hard cap on node-solve bisection iterations
_NODE_TOL_FRACTION = 1e-2   # node solved to voltage_tolerance times this
_NODE_TOL_CEIL = 1e-6       # V, but never looser than this
_MAX_STEPS = 200_000  # per lane per grid interval

# current function signature: (v_rbl_array, rwl_level, vsl_level) -> amperes
StackCurrentFn = Callable[[np.ndarray, float, float], np.ndarray]


class SimulationError(RuntimeError):
    """The transient integrator failed to advance."""


class ReliabilityWarning(UserWarning):
    """A terminal pair exceeded the configured voltage stress limit."""


@dataclass(frozen=True)
class SimConfig:
    """Numerical settings of the bit-line transient."""

    vdd: float = 0.8                 # V
    c_bl: float = 20e-15             # F, read bit-line capacitance
    dt_max: float = 250e-12          # s, upper bound on any accepted step
    voltage_tolerance: float = 2e-4  # V, accuracy target for a whole event
    reliability_limit: float = 1.3   # V, max |V| across any terminal pair
    output_points: int = 41          # trace samples on the uniform grid

    @property
    def node_tolerance(self) -> float:
        """Bisection tolerance on the internal stack node."""
        return min(self.voltage_tolerance * _NODE_TOL_FRACTION, _NODE_TOL_CEIL)

    def __post_init__(self) -> None:
        if self.vdd <= 0 or self.c_bl <= 0 or self.dt_max <= 0 or self.voltage_tolerance <= 0:
            raise ValueError("vdd, c_bl, dt_max and voltage_tolerance must all be > 0")
        if self.output_points < 2:
            raise ValueError("output_points must be >= 2")


@dataclass(frozen=True)
class BitCell:
    """One CS/DC cell: a writable RAM bit plus the immutable read-port flavor."""

    q: int
    rom_flavor: VtFlavor
    upper_device: DeviceInstance
    lower_device: DeviceInstance

    def __post_init__(self) -> None:
        if self.q not in (0, 1):
            raise ValueError("q must be 0 or 1")
        if (
            self.upper_device.flavor is not self.rom_flavor
            or self.lower_device.flavor is not self.rom_flavor
        ):
            raise ValueError("both read-port devices must share the cell's ROM flavor")

    @property
    def rom_bit(self) -> int:
        return self.rom_flavor.rom_bit

    @property
    def case_code(self) -> int:
        """2-bit case label: MSB = RAM bit, LSB = ROM bit."""
        return 2 * self.q + self.rom_bit

    def with_q(self, q: int) -> "BitCell":
        return replace(self, q=q)

    @classmethod
    def nominal(cls, q: int, flavor: VtFlavor) -> "BitCell":
        return cls(
            q=q,
            rom_flavor=flavor,
            upper_device=DeviceInstance(flavor),
            lower_device=DeviceInstance(flavor),
        )

    @classmethod
    def sampled(
        cls,
        q: int,
        flavor: VtFlavor,
        spec: VariationSpec,
        base_draw_index: int,
        params: DeviceParams | None = None,
    ) -> "BitCell":
        """Cell whose devices use draws ``base_draw_index`` (upper) and +1 (lower)."""
        return cls(
            q=q,
            rom_flavor=flavor,
            upper_device=sample_device(flavor, spec, base_draw_index, params),
            lower_device=sample_device(flavor, spec, base_draw_index + 1, params),
        )


@dataclass(frozen=True)
class VoltageTrace:
    """Read bit-line voltage over one event plus its supply bookkeeping."""

    times: np.ndarray         # s, shared sample grid, increasing
    v_rbl: np.ndarray         # V
    energy_drawn: float       # J, pre-charge restore plus SL-rail work
    supply_charge: float      # C, charge the VDD rail must restore

    def value_at(self, t: float) -> float:
        """Linear interpolation between samples."""
        if t < self.times[0] or t > self.times[-1]:
            raise ValueError(f"t = {t} s outside the trace range")
        return float(np.interp(t, self.times, self.v_rbl))

    @property
    def final_voltage(self) -> float:
        return float(self.v_rbl[-1])

    def crossing_time(self, v_ref: float) -> float | None:
        """First time the trace falls below ``v_ref`` (linear interp), else None."""
        below = self.v_rbl < v_ref
        if not below.any():
            return None
        k = int(np.argmax(below))
        if k == 0:
            return float(self.times[0])
        v0, v1 = self.v_rbl[k - 1], self.v_rbl[k]
        t0, t1 = self.times[k - 1], self.times[k]
        return float(t0 + (v0 - v_ref) * (t1 - t0) / (v0 - v1))


@dataclass(frozen=True)
class BatchTraces:
    """Traces of many cells read under one shared waveform (one row per lane)."""

    times: np.ndarray          # (T,)
    v_rbl: np.ndarray          # (n, T)
    energy_drawn: np.ndarray   # (n,)
    supply_charge: np.ndarray  # (n,)

    def lane(self, i: int) -> VoltageTrace:
        return VoltageTrace(
            self.times,
            self.v_rbl[i],
            float(self.energy_drawn[i]),
            float(self.supply_charge[i]),
        )

    def values_at(self, t: float) -> np.ndarray:
        """Per-lane bit-line voltage at time t (linear interpolation)."""
        if t < self.times[0] or t > self.times[-1]:
            raise ValueError(f"t = {t} s outside the trace range")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        if k >= self.times.size - 1:
            return self.v_rbl[:, -1].copy()
        t0, t1 = self.times[k], self.times[k + 1]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self.v_rbl[:, k] + w * self.v_rbl[:, k + 1]


# --------------------------------------------------------------------------
# compiled per-lane kernels (physical path)
# --------------------------------------------------------------------------

@njit(cache=True)
def _softplus(x: float) -> float:
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def _device_i(
    vgs: float, vds: float, vt_base: float,
    ispec: float, nut: float, ut: float, dibl: float, ifloor: float,
) -> float:
    if vds < 0.0:
        vds = 0.0
    vt_eff = vt_base - dibl * vds
    uf2 = 0.5 * (vgs - vt_eff) / nut
    ur2 = uf2 - 0.5 * vds / ut
    a = _softplus(uf2)
    b = _softplus(ur2)
    return ispec * (a * a - b * b) + ifloor * (-math.expm1(-vds / ut))


@njit(cache=True)
def _stack_i(
    v: float, rwl: float, vsl: float, gate_lo: float, vtu: float, vtl: float,
    ispec: float, nut: float, ut: float, dibl: float, ifloor: float,
    node_tol: float,
) -> float:
    if v <= vsl:
        return 0.0
    lo = vsl
    hi = v
    vgs_lo = gate_lo - vsl
    for _ in range(_BISECT_MAX):
        if hi - lo <= node_tol:
            break
        vm = 0.5 * (lo + hi)
        iu = _device_i(rwl - vm, v - vm, vtu, ispec, nut, ut, dibl, ifloor)
        il = _device_i(vgs_lo, vm - vsl, vtl, ispec, nut, ut, dibl, ifloor)
        if iu > il:
            lo = vm
        else:
            hi = vm
    vm = 0.5 * (lo + hi)
    iu = _device_i(rwl - vm, v - vm, vtu, ispec, nut, ut, dibl, ifloor)
    il = _device_i(vgs_lo, vm - vsl, vtl, ispec, nut, ut, dibl, ifloor)
    return 0.5 * (iu + il)


@njit(cache=True, parallel=True)
def _integrate_interval(
    volt: np.ndarray, h: np.ndarray,
    t0: float, t1: float, rwl: float, vsl: float,
    gate_lo: np.ndarray, vtu: np.ndarray, vtl: np.ndarray,
    ispec: float, nut: float, ut: float, dibl: float, ifloor: float,
    c_bl: float, dt_max: float, vtol: float, total_dur: float, node_tol: float,
) -> int:
    """Advance every lane from t0 to t1 in place; returns 0 or 1+index of a stalled lane.

    Lanes are fully independent scalar recurrences, so the parallel schedule
    cannot change any lane's result.
    """
    n = volt.size
    fail = 0
    for i in prange(n):
        v = volt[i]
        hl = h[i]
        gl = gate_lo[i]
        vu = vtu[i]
        vl = vtl[i]
        t = t0
        steps = 0
        while t < t1:
            steps += 1
            if steps > _MAX_STEPS:
                fail = i + 1
                break
            if v - vsl < RAIL_EPS:
                t = t1
                break
            ht = hl
            if ht > dt_max:
                ht = dt_max
            if ht > t1 - t:
                ht = t1 - t
            if ht < H_MIN:
                ht = H_MIN
            k1 = -_stack_i(v, rwl, vsl, gl, vu, vl, ispec, nut, ut, dibl, ifloor, node_tol) / c_bl
            k2 = -_stack_i(v + ht * k1, rwl, vsl, gl, vu, vl, ispec, nut, ut, dibl, ifloor, node_tol) / c_bl
            v_big = v + 0.5 * ht * (k1 + k2)
            h2 = 0.5 * ht
            k2a = -_stack_i(v + h2 * k1, rwl, vsl, gl, vu, vl, ispec, nut, ut, dibl, ifloor, node_tol) / c_bl
            v_h1 = v + 0.5 * h2 * (k1 + k2a)
            if v_h1 < vsl:
                v_h1 = vsl
            k1b = -_stack_i(v_h1, rwl, vsl, gl, vu, vl, ispec, nut, ut, dibl, ifloor, node_tol) / c_bl
            k2b = -_stack_i(v_h1 + h2 * k1b, rwl, vsl, gl, vu, vl, ispec, nut, ut, dibl, ifloor, node_tol) / c_bl
            v_h2 = v_h1 + 0.5 * h2 * (k1b + k2b)
            err = abs(v_big - v_h2)
            tol = vtol * (ht / total_dur) + 1e-15
            if err <= tol or ht <= H_MIN * 1.001:
                v = v_h2 if v_h2 > vsl else vsl
                t = t + ht
                if t > t1:
                    t = t1
            if err > 0.0:
                fac = 0.9 * (tol / err) ** (1.0 / 3.0)
                if fac > 2.0:
                    fac = 2.0
                elif fac < 0.2:
                    fac = 0.2
            else:
                fac = 2.0
            hl = ht * fac
            if hl > dt_max:
                hl = dt_max
            if hl < H_MIN:
                hl = H_MIN
        volt[i] = v
        h[i] = hl
    return fail


def solve_stack_current(
    v_rbl: np.ndarray,
    rwl: float,
    vsl: float,
    gate_lo: np.ndarray,
    vt_up: np.ndarray,
    vt_lo: np.ndarray,
    params: DeviceParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Series current and internal node voltage of the read stack.

    Bisects the internal node between the SL rail and the bit-line until the
    upper device (gate = RWL) and lower device (gate = stored bit) carry
    equal current.  Returns zero current where the bit-line sits at the rail.
    """
    v_rbl = np.asarray(v_rbl, dtype=float)
    lo = np.full(v_rbl.shape, vsl)
    hi = np.maximum(v_rbl, vsl)
    vgs_lo = np.asarray(gate_lo, dtype=float) - vsl
    for _ in range(_BISECT_MAX):
        vm = 0.5 * (lo + hi)
        i_up = drain_current_raw(rwl - vm, v_rbl - vm, vt_up, params)
        i_dn = drain_current_raw(vgs_lo, vm - vsl, vt_lo, params)
        raise_vm = i_up > i_dn
        lo = np.where(raise_vm, vm, lo)
        hi = np.where(raise_vm, hi, vm)
    vm = 0.5 * (lo + hi)
    i_up = drain_current_raw(rwl - vm, v_rbl - vm, vt_up, params)
    i_dn = drain_current_raw(vgs_lo, vm - vsl, vt_lo, params)
    current = np.where(v_rbl <= vsl, 0.0, 0.5 * (i_up + i_dn))
    return current, vm


def stack_current_split(
    v_rbl: np.ndarray,
    rwl: float,
    vsl: float,
    gate_lo: np.ndarray,
    vt_up: np.ndarray,
    vt_lo: np.ndarray,
    params: DeviceParams,
) -> tuple[np.ndarray, np.ndarray]:
    """(I_upper, I_lower) at the solved internal node, for continuity checks."""
    v_rbl = np.asarray(v_rbl, dtype=float)
    _, vm = solve_stack_current(v_rbl, rwl, vsl, gate_lo, vt_up, vt_lo, params)
    i_up = drain_current_raw(rwl - vm, v_rbl - vm, vt_up, params)
    i_dn = drain_current_raw(np.asarray(gate_lo, float) - vsl, vm - vsl, vt_lo, params)
    return i_up, i_dn


def _grid_times(wave: ControlWaveforms, cfg: SimConfig) -> np.ndarray:
    base = np.linspace(0.0, wave.duration, cfg.output_points)
    extra = np.asarray(wave.boundaries(), dtype=float)
    return np.unique(np.concatenate([base, extra]))


def _check_reliability(wave: ControlWaveforms, cfg: SimConfig, gate_lo_max: float) -> None:
    """Static worst-case terminal-stress check over all segments."""
    worst = 0.0
    for rwl, vsl in zip(wave.rwl, wave.vsl):
        worst = max(
            worst,
            abs(rwl - vsl),          # upper gate to rail
            abs(gate_lo_max - vsl),  # lower gate to source
            abs(cfg.vdd - vsl),      # full stack drop at pre-charge
            abs(rwl - cfg.vdd),      # upper gate to drain
        )
    if worst > cfg.reliability_limit:
        warnings.warn(
            f"terminal stress {worst:.3f} V exceeds reliability limit "
            f"{cfg.reliability_limit:.3f} V",
            ReliabilityWarning,
            stacklevel=3,
        )


def _integrate_interval_custom(
    volt: np.ndarray,
    h: np.ndarray,
    t0: float,
    t1: float,
    rwl: float,
    vsl: float,
    fn: StackCurrentFn,
    cfg: SimConfig,
    total_dur: float,
) -> None:
    """Vectorized fallback stepper used when a current model is injected."""
    n = volt.size
    t = np.full(n, t0)

    def f(v: np.ndarray) -> np.ndarray:
        return -np.asarray(fn(v, rwl, vsl), dtype=float) / cfg.c_bl

    for _ in range(_MAX_STEPS):
        active = t < t1
        if not active.any():
            return
        railed = active & (volt - vsl < RAIL_EPS)
        if railed.any():
            t = np.where(railed, t1, t)
            active &= ~railed
            if not active.any():
                return
        h_try = np.maximum(np.minimum(np.minimum(h, cfg.dt_max), t1 - t), H_MIN)
        k1 = f(volt)
        k2 = f(volt + h_try * k1)
        v_big = volt + 0.5 * h_try * (k1 + k2)
        h2 = 0.5 * h_try
        k2a = f(volt + h2 * k1)
        v_h1 = np.maximum(volt + 0.5 * h2 * (k1 + k2a), vsl)
        k1b = f(v_h1)
        k2b = f(v_h1 + h2 * k1b)
        v_h2 = v_h1 + 0.5 * h2 * (k1b + k2b)
        err = np.abs(v_big - v_h2)
        tol = cfg.voltage_tolerance * (h_try / total_dur) + 1e-15
        accept = active & ((err <= tol) | (h_try <= H_MIN * 1.001))
        volt[...] = np.where(accept, np.maximum(v_h2, vsl), volt)
        t = np.where(accept, np.minimum(t + h_try, t1), t)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(err > 0.0, 0.9 * np.cbrt(tol / err), 2.0)
        fac = np.clip(np.nan_to_num(fac, nan=0.2), 0.2, 2.0)
        h[...] = np.where(active, np.clip(h_try * fac, H_MIN, cfg.dt_max), h)
    raise SimulationError(f"integrator stalled in [{t0:.3e}, {t1:.3e}] s")


def simulate_stack_batch(
    vt_up: np.ndarray,
    vt_lo: np.ndarray,
    gate_lo: np.ndarray,
    wave: ControlWaveforms,
    cfg: SimConfig,
    params: DeviceParams,
    stack_current_fn: StackCurrentFn | None = None,
) -> BatchTraces:
    """Integrate the bit-line ODE for a batch of lanes sharing one waveform.

    Each lane carries its own threshold pair and lower-gate level.  Steps are
    accepted per lane, so a lane's trajectory never depends on what else is
    in the batch.
    """
    wave.validate_levels(cfg.vdd, float("inf"))  # rwl levels; SL stress warned below
    vt_up = np.ascontiguousarray(vt_up, dtype=float)
    vt_lo = np.ascontiguousarray(vt_lo, dtype=float)
    gate_lo = np.ascontiguousarray(gate_lo, dtype=float)
    n = vt_up.size
    _check_reliability(wave, cfg, float(gate_lo.max()) if n else cfg.vdd)

    grid = _grid_times(wave, cfg)
    volt = np.full(n, cfg.vdd)
    v_out = np.empty((n, grid.size))
    v_out[:, 0] = volt
    h = np.full(n, cfg.dt_max)
    e_sl = np.zeros(n)

    for k in range(grid.size - 1):
        t0, t1 = float(grid[k]), float(grid[k + 1])
        rwl, vsl = wave.levels_at(0.5 * (t0 + t1))
        v_seg0 = volt.copy()
        if stack_current_fn is None:
            stalled = _integrate_interval(
                volt, h, t0, t1, rwl, vsl, gate_lo, vt_up, vt_lo,
                params.specific_current,
                params.slope_factor * params.thermal_voltage,
                params.thermal_voltage,
                params.dibl_factor,
                params.off_floor_current,
                cfg.c_bl, cfg.dt_max, cfg.voltage_tolerance, wave.duration,
                cfg.node_tolerance,
            )
            if stalled:
                raise SimulationError(
                    f"integrator stalled on lane {stalled - 1} in [{t0:.3e}, {t1:.3e}] s"
                )
        else:
            _integrate_interval_custom(
                volt, h, t0, t1, rwl, vsl, stack_current_fn, cfg, wave.duration
            )
        e_sl += abs(vsl) * cfg.c_bl * (v_seg0 - volt)
        v_out[:, k + 1] = volt

    if not np.isfinite(v_out).all():
        raise SimulationError("non-finite bit-line voltage produced")
    charge = cfg.c_bl * (cfg.vdd - volt)
    energy = cfg.vdd * charge + e_sl
    return BatchTraces(times=grid, v_rbl=v_out, energy_drawn=energy, supply_charge=charge)


def _cell_arrays(
    cells: Sequence[BitCell], cfg: SimConfig, params: DeviceParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    vt_up = np.array(
        [params.vt_nominal(c.rom_flavor) + c.upper_device.delta_vt for c in cells]
    )
    vt_lo = np.array(
        [params.vt_nominal(c.rom_flavor) + c.lower_device.delta_vt for c in cells]
    )
    gate = np.array([c.q * cfg.vdd for c in cells], dtype=float)
    return vt_up, vt_lo, gate


def simulate_read_batch(
    cells: Sequence[BitCell],
    wave: ControlWaveforms,
    cfg: SimConfig,
    params: DeviceParams,
    stack_current_fn: StackCurrentFn | None = None,
) -> BatchTraces:
    """Shared-waveform read event over a sequence of cells."""
    vt_up, vt_lo, gate = _cell_arrays(cells, cfg, params)
    return simulate_stack_batch(vt_up, vt_lo, gate, wave, cfg, params, stack_current_fn)


def simulate_read_event(
    cell: BitCell,
    wave: ControlWaveforms,
    cfg: SimConfig,
    params: DeviceParams,
    stack_current_fn: StackCurrentFn | None = None,
) -> VoltageTrace:
    """Single-cell read event; equals lane 0 of a one-lane batch by construction."""
    return simulate_read_batch([cell], wave, cfg, params, stack_current_fn).lane(0)


def leakage_power(
    cell: BitCell,
    cfg: SimConfig,
    params: DeviceParams,
    core_leakage: float = 0.0,
) -> float:
    """Standby read-port leakage (RWL low, SL grounded, bit-line at vdd).

    The series off-current of the stack times vdd, plus a constant for the
    six-transistor storage core that is identical for every cell.
    """
    vt_up, vt_lo, gate = _cell_arrays([cell], cfg, params)
    current, _ = solve_stack_current(
        np.array([cfg.vdd]), 0.0, 0.0, gate, vt_up, vt_lo, params
    )
    return float(current[0]) * cfg.vdd + core_leakage
