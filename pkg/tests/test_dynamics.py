"""Transient-engine contracts: oracles, conservation, convergence, invariance."""
import warnings

import numpy as np
import pytest

from romram.device import DeviceParams, VariationSpec, VtFlavor, sample_delta_vt
from romram.dynamics import (
    BitCell,
    ReliabilityWarning,
    SimConfig,
    VoltageTrace,
    leakage_power,
    simulate_read_batch,
    simulate_read_event,
    simulate_stack_batch,
    solve_stack_current,
    stack_current_split,
)
from romram.waveforms import ControlWaveforms

from conftest import nominal_cells


class TestBitCell:
    def test_case_codes(self):
        codes = [c.case_code for c in nominal_cells()]
        assert codes == [0, 1, 2, 3]

    def test_flavor_mismatch_rejected(self):
        from romram.device import DeviceInstance

        with pytest.raises(ValueError):
            BitCell(0, VtFlavor.LOW_VT, DeviceInstance(VtFlavor.HIGH_VT), DeviceInstance(VtFlavor.LOW_VT))

    def test_bad_q_rejected(self):
        with pytest.raises(ValueError):
            BitCell.nominal(2, VtFlavor.LOW_VT)


class TestGatedOff:
    def test_rwl_low_droop_below_1mv(self, cfg, params):
        wave = ControlWaveforms.read_pulse(cfg.vdd, 0.0, 0.0, duration=6e-9)
        for cell in nominal_cells():
            trace = simulate_read_event(cell, wave, cfg, params)
            assert cfg.vdd - trace.final_voltage <= 1e-3
            assert trace.v_rbl[0] == cfg.vdd


class TestDischargeOrdering:
    def test_four_case_ordering_at_minus_100mv(self, cfg, params):
        # strict case-00 > case-01 > case-10 > case-11 at every sampled t > 0
        wave = ControlWaveforms.read_pulse(cfg.vdd, -0.10, 0.8e-9)
        batch = simulate_read_batch(nominal_cells(), wave, cfg, params)
        for k in range(1, batch.times.size):
            column = batch.v_rbl[:, k]
            assert column[0] > column[1] > column[2] > column[3], (
                f"ordering broken at t={batch.times[k]:.3e}s: {column}"
            )


class TestLinearStubOracle:
    def test_constant_current_matches_closed_form(self, cfg, params):
        i0 = 5e-6
        wave = ControlWaveforms.read_pulse(cfg.vdd, 0.0, 2e-9)

        def stub(v, rwl, vsl):
            return np.full_like(v, i0)

        cell = BitCell.nominal(1, VtFlavor.LOW_VT)
        trace = simulate_read_event(cell, wave, cfg, params, stack_current_fn=stub)
        expected = cfg.vdd - i0 * trace.times / cfg.c_bl
        assert np.abs(trace.v_rbl - expected).max() < 1e-3

    def test_stub_receives_levels(self, cfg, params):
        seen = []

        def stub(v, rwl, vsl):
            seen.append((rwl, vsl))
            return np.zeros_like(v)

        wave = ControlWaveforms.read_pulse(cfg.vdd, -0.2, 1e-9, duration=2e-9)
        simulate_read_event(BitCell.nominal(0, VtFlavor.LOW_VT), wave, cfg, params, stack_current_fn=stub)
        assert (cfg.vdd, -0.2) in seen and (0.0, -0.2) in seen


class TestEnergyAccounting:
    def test_grounded_sl_equality(self, cfg, params):
        wave = ControlWaveforms.read_pulse(cfg.vdd, 0.0, 4e-9)
        trace = simulate_read_event(BitCell.nominal(1, VtFlavor.HIGH_VT), wave, cfg, params)
        restore = cfg.c_bl * cfg.vdd * (cfg.vdd - trace.final_voltage)
        assert trace.energy_drawn == pytest.approx(restore, rel=1e-3)
        assert trace.supply_charge == pytest.approx(
            cfg.c_bl * (cfg.vdd - trace.final_voltage), rel=1e-12
        )

    def test_sl_rail_adds_energy(self, cfg, params):
        wave = ControlWaveforms.read_pulse(cfg.vdd, -0.45, 4e-9)
        trace = simulate_read_event(BitCell.nominal(0, VtFlavor.LOW_VT), wave, cfg, params)
        restore = cfg.c_bl * cfg.vdd * (cfg.vdd - trace.final_voltage)
        assert trace.energy_drawn >= restore
        expected_sl = 0.45 * cfg.c_bl * (cfg.vdd - trace.final_voltage)
        assert trace.energy_drawn == pytest.approx(restore + expected_sl, rel=1e-9)


class TestRefinement:
    def test_halving_dt_max_converges(self, cfg, params):
        # coarse output grid so dt_max is the binding step cap
        from dataclasses import replace

        wave = ControlWaveforms.read_pulse(cfg.vdd, -0.10, 3e-9)
        coarse = replace(cfg, output_points=7)
        fine = replace(coarse, dt_max=coarse.dt_max / 2)
        changed = False
        for cell in nominal_cells():
            a = simulate_read_event(cell, wave, coarse, params)
            b = simulate_read_event(cell, wave, fine, params)
            assert abs(a.final_voltage - b.final_voltage) < cfg.voltage_tolerance
            changed = changed or not np.array_equal(a.v_rbl, b.v_rbl)
        assert changed


class TestStackSolve:
    def test_current_continuity_along_trace(self, cfg, params):
        wave = ControlWaveforms.read_pulse(cfg.vdd, -0.10, 2e-9)
        cell = BitCell.nominal(1, VtFlavor.HIGH_VT)
        trace = simulate_read_event(cell, wave, cfg, params)
        vt = params.vt_high
        for v in trace.v_rbl[:: 8]:
            i_up, i_dn = stack_current_split(
                np.array([v]), cfg.vdd, -0.10, np.array([cfg.vdd]),
                np.array([vt]), np.array([vt]), params,
            )
            assert abs(i_up[0] - i_dn[0]) <= 1e-3 * max(i_up[0], 1e-12) + 1e-15

    def test_zero_at_rail(self, cfg, params):
        current, _ = solve_stack_current(
            np.array([-0.1]), cfg.vdd, -0.1, np.array([cfg.vdd]),
            np.array([0.23]), np.array([0.23]), params,
        )
        assert current[0] == 0.0


class TestTraceInvariants:
    @pytest.mark.parametrize("vsl", [-0.45, -0.10, 0.0, 0.20])
    def test_bounds_and_monotonicity(self, cfg, params, vsl):
        wave = ControlWaveforms.read_pulse(cfg.vdd, vsl, 6e-9)
        batch = simulate_read_batch(nominal_cells(), wave, cfg, params)
        assert np.all(batch.v_rbl[:, 0] == cfg.vdd)
        assert np.all(np.diff(batch.v_rbl, axis=1) <= 0)  # RWL high: never recharges
        assert np.all(batch.v_rbl >= min(0.0, vsl))

    def test_positive_sl_floor_is_vsl(self, cfg, params):
        wave = ControlWaveforms.read_pulse(cfg.vdd, 0.20, 12e-9)
        trace = simulate_read_event(BitCell.nominal(1, VtFlavor.LOW_VT), wave, cfg, params)
        assert trace.final_voltage >= 0.20 - 1e-12
        assert trace.final_voltage == pytest.approx(0.20, abs=2e-3)


class TestBatchDeterminism:
    def test_single_equals_batch_lane(self, cfg, params):
        wave = ControlWaveforms.read_pulse(cfg.vdd, -0.10, 2e-9)
        cells = nominal_cells()
        batch = simulate_read_batch(cells, wave, cfg, params)
        for i, cell in enumerate(cells):
            single = simulate_read_event(cell, wave, cfg, params)
            assert np.array_equal(single.v_rbl, batch.v_rbl[i])
            assert single.energy_drawn == batch.energy_drawn[i]

    def test_chunk_split_bitwise_identical(self, cfg, params, variation):
        n = 64
        d = sample_delta_vt(variation, np.arange(2 * n))
        vt_up = params.vt_high + d[0::2]
        vt_lo = params.vt_high + d[1::2]
        gate = np.full(n, cfg.vdd)
        wave = ControlWaveforms.read_pulse(cfg.vdd, 0.0, 3e-9)
        whole = simulate_stack_batch(vt_up, vt_lo, gate, wave, cfg, params)
        parts = [
            simulate_stack_batch(vt_up[i : i + 13], vt_lo[i : i + 13], gate[i : i + 13], wave, cfg, params)
            for i in range(0, n, 13)
        ]
        stitched = np.vstack([p.v_rbl for p in parts])
        assert np.array_equal(whole.v_rbl, stitched)
        assert np.array_equal(whole.energy_drawn, np.concatenate([p.energy_drawn for p in parts]))


class TestReliabilityWarning:
    def test_warns_when_limit_tightened(self, params):
        tight = SimConfig(reliability_limit=1.0)
        wave = ControlWaveforms.read_pulse(tight.vdd, -0.45, 1e-9)
        with pytest.warns(ReliabilityWarning):
            simulate_read_event(BitCell.nominal(0, VtFlavor.LOW_VT), wave, tight, params)

    def test_silent_with_default_limit(self, cfg, params):
        wave = ControlWaveforms.read_pulse(cfg.vdd, -0.45, 1e-9)
        with warnings.catch_warnings():
            warnings.simplefilter("error", ReliabilityWarning)
            simulate_read_event(BitCell.nominal(0, VtFlavor.LOW_VT), wave, cfg, params)


class TestLeakage:
    def test_low_vt_leaks_more(self, cfg, params):
        low = leakage_power(BitCell.nominal(0, VtFlavor.LOW_VT), cfg, params)
        high = leakage_power(BitCell.nominal(0, VtFlavor.HIGH_VT), cfg, params)
        assert low > high

    def test_balanced_mean_is_exact_average(self, cfg, params):
        low = leakage_power(BitCell.nominal(0, VtFlavor.LOW_VT), cfg, params, core_leakage=20e-9)
        high = leakage_power(BitCell.nominal(0, VtFlavor.HIGH_VT), cfg, params, core_leakage=20e-9)
        flavors = [VtFlavor.LOW_VT, VtFlavor.HIGH_VT] * 8
        mean = np.mean(
            [leakage_power(BitCell.nominal(0, f), cfg, params, core_leakage=20e-9) for f in flavors]
        )
        assert mean == pytest.approx((low + high) / 2, rel=1e-12)

    def test_balanced_ratio_to_midpoint_baseline(self, cfg, params, run_config):
        baseline = run_config.baseline_cell()
        core = baseline.core_leakage
        bparams = baseline.device_params(params)
        low = leakage_power(BitCell.nominal(0, VtFlavor.LOW_VT), cfg, params)
        high = leakage_power(BitCell.nominal(0, VtFlavor.HIGH_VT), cfg, params)
        base = leakage_power(BitCell.nominal(0, VtFlavor.LOW_VT), cfg, bparams)
        ratio = (core + (low + high) / 2) / (core + base)
        assert 0.95 <= ratio <= 1.05


class TestVoltageTrace:
    def test_value_at_interpolates(self):
        trace = VoltageTrace(
            times=np.array([0.0, 1e-9, 2e-9]), v_rbl=np.array([0.8, 0.6, 0.2]),
            energy_drawn=0.0, supply_charge=0.0,
        )
        assert trace.value_at(0.5e-9) == pytest.approx(0.7)
        with pytest.raises(ValueError):
            trace.value_at(3e-9)

    def test_crossing_time(self):
        trace = VoltageTrace(
            times=np.array([0.0, 1e-9, 2e-9]), v_rbl=np.array([0.8, 0.6, 0.2]),
            energy_drawn=0.0, supply_charge=0.0,
        )
        assert trace.crossing_time(0.4) == pytest.approx(1.5e-9)
        assert trace.crossing_time(0.1) is None
