"""CLI contract: exit codes, byte-stable outputs, library equivalence."""
import shutil
from pathlib import Path

import pytest
from click.testing import CliRunner

from romram.cli import main

from conftest import DEFAULT_CONFIG


@pytest.fixture
def fast_config(tmp_path):
    """Copy of the shipped config with small sample counts."""
    text = DEFAULT_CONFIG.read_text()
    target = tmp_path / "config.yaml"
    target.write_text(text)
    return target


def invoke(args, **kwargs):
    runner = CliRunner()
    return runner.invoke(main, args, catch_exceptions=False, **kwargs)


def fast_args(config, out_dir):
    return [
        "-c", str(config), "-o", str(out_dir),
        "--set", "mc.samples_per_case=60",
        "--set", "mc.calibration_samples=60",
    ]


class TestExitCodes:
    def test_missing_config_is_usage_error(self, tmp_path):
        result = invoke(["-o", str(tmp_path), "mc", "--mode", "rom_only"],
                        env={"ROMRAM_CONFIG": None})
        assert result.exit_code == 1

    def test_bad_config_file_exits_1(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("sim:\n  vdd: '0.8 s'\n")
        result = invoke(["-c", str(bad), "-o", str(tmp_path), "mc", "--mode", "rom_only"])
        assert result.exit_code == 1

    def test_unknown_mode_exits_1(self, fast_config, tmp_path):
        result = invoke(fast_args(fast_config, tmp_path) + ["mc", "--mode", "warp"])
        assert result.exit_code == 1

    def test_success_exits_0(self, fast_config, tmp_path):
        result = invoke(fast_args(fast_config, tmp_path) + ["mc", "--mode", "rom_only"])
        assert result.exit_code == 0, result.output

    def test_threshold_failure_exits_2(self, fast_config, tmp_path):
        result = invoke(
            fast_args(fast_config, tmp_path)
            + ["--set", "variation.sigma_vt=200 mV", "mc", "--mode", "ram_only_delay"]
        )
        assert result.exit_code == 2
        report = (tmp_path / "mc_ram_only_delay.csv").read_text()
        fractions = [float(line.split(",")[5]) for line in report.splitlines()[1:]]
        assert min(fractions) < 1.0  # failing-case diagnostics present

    def test_calibration_infeasible_exits_3(self, fast_config, tmp_path):
        result = invoke(
            fast_args(fast_config, tmp_path)
            + ["--set", "modes.rom_only.phase1.vsl=-0.05 V", "calibrate", "--mode", "rom_only"]
        )
        assert result.exit_code == 3


class TestByteStability:
    def test_mc_rerun_identical(self, fast_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert invoke(fast_args(fast_config, out1) + ["mc", "--mode", "rom_only"]).exit_code == 0
        assert invoke(fast_args(fast_config, out2) + ["mc", "--mode", "rom_only"]).exit_code == 0
        for name in ("mc_rom_only.csv", "mc_rom_only_endpoints.csv", "mc_rom_only_envelope.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_worker_count_does_not_change_bytes(self, fast_config, tmp_path):
        out1, out2 = tmp_path / "w1", tmp_path / "w4"
        invoke(fast_args(fast_config, out1) + ["mc", "--mode", "ram_only_delay"])
        invoke(
            fast_args(fast_config, out2)
            + ["--set", "mc.workers=4", "--set", "mc.chunk_size=16", "mc", "--mode", "ram_only_delay"]
        )
        assert (out1 / "mc_ram_only_delay.csv").read_bytes() == (out2 / "mc_ram_only_delay.csv").read_bytes()
        assert (out1 / "mc_ram_only_delay_endpoints.csv").read_bytes() == (
            out2 / "mc_ram_only_delay_endpoints.csv"
        ).read_bytes()


class TestSimulate:
    def test_trace_matches_library(self, fast_config, tmp_path):
        result = invoke(
            fast_args(fast_config, tmp_path)
            + ["simulate", "--case", "11", "--mode", "ram_only_delay",
               "--vsl", "-0.10 V", "--duration", "0.8 ns"]
        )
        assert result.exit_code == 0
        import numpy as np

        from romram.config import load_config
        from romram.device import VtFlavor
        from romram.dynamics import BitCell, simulate_read_event
        from romram.units import parse_quantity
        from romram.waveforms import ControlWaveforms

        config = load_config(fast_config)
        cfg = config.sim_config()
        window = parse_quantity("0.8 ns", "time")
        vsl = parse_quantity("-0.10 V", "voltage")
        wave = ControlWaveforms.read_pulse(cfg.vdd, vsl, window, window)
        trace = simulate_read_event(
            BitCell.nominal(1, VtFlavor.LOW_VT), wave, cfg, config.device_params()
        )
        lines = (tmp_path / "trace_ram_only_delay_case11.csv").read_text().strip().splitlines()[1:]
        got = np.array([[float(x) for x in line.split(",")] for line in lines])
        assert np.array_equal(got[:, 0], trace.times)
        assert np.array_equal(got[:, 1], trace.v_rbl)

    def test_zero_width_pulse_flat_trace(self, fast_config, tmp_path):
        # grounded source line: an unpulsed RWL leaves only leakage droop
        result = invoke(
            fast_args(fast_config, tmp_path)
            + ["--set", "modes.ram_only_reliability.phase1.rwl_pulse=0 ns",
               "simulate", "--case", "11", "--mode", "ram_only_reliability"]
        )
        assert result.exit_code == 0
        lines = (
            (tmp_path / "trace_ram_only_reliability_case11.csv").read_text().strip().splitlines()[1:]
        )
        voltages = {float(line.split(",")[1]) for line in lines}
        assert max(voltages) - min(voltages) < 1e-3  # leakage droop only

    def test_fastest_case_is_11(self, fast_config, tmp_path):
        finals = {}
        for case in ("00", "01", "10", "11"):
            invoke(
                fast_args(fast_config, tmp_path)
                + ["simulate", "--case", case, "--mode", "ram_only_delay",
                   "--vsl", "-0.10 V", "--duration", "0.8 ns"]
            )
            lines = (
                (tmp_path / f"trace_ram_only_delay_case{case}.csv").read_text().strip().splitlines()
            )
            finals[case] = float(lines[-1].split(",")[1])
        assert finals["11"] < finals["10"] < finals["01"] < finals["00"]


class TestSweep:
    def test_single_point_matches_calibrated_mc(self, fast_config, tmp_path):
        sweep_dir, mc_dir = tmp_path / "sweep", tmp_path / "mc"
        r1 = invoke(
            fast_args(fast_config, sweep_dir)
            + ["sweep", "--parameter", "vsl", "--mode", "rom_only", "--values", "-0.45 V"]
        )
        assert r1.exit_code == 0
        r2 = invoke(
            fast_args(fast_config, mc_dir) + ["mc", "--mode", "rom_only", "--calibrate"]
        )
        assert r2.exit_code == 0
        sweep_row = (sweep_dir / "sweep_vsl_rom_only.csv").read_text().strip().splitlines()[1]
        cells = sweep_row.split(",")
        mc_rows = (mc_dir / "mc_rom_only.csv").read_text().strip().splitlines()[1:]
        mc_fractions = {line.split(",")[0]: float(line.split(",")[5]) for line in mc_rows}
        assert float(cells[4]) == min(mc_fractions.values())  # worst fraction agrees
        for pair in cells[5].split(";"):
            case, frac = pair.split("=")
            assert float(frac) == mc_fractions[case]

    def test_empty_range_header_only(self, fast_config, tmp_path):
        result = invoke(
            fast_args(fast_config, tmp_path)
            + ["sweep", "--parameter", "vsl", "--mode", "rom_only", "--values", ""]
        )
        assert result.exit_code == 0
        content = (tmp_path / "sweep_vsl_rom_only.csv").read_text()
        assert content.count("\n") == 1

    def test_bad_unit_usage_error(self, fast_config, tmp_path):
        result = invoke(
            fast_args(fast_config, tmp_path)
            + ["sweep", "--parameter", "vsl", "--mode", "rom_only", "--values", "0.1 F"]
        )
        assert result.exit_code == 1


class TestEnvVar:
    def test_config_from_environment(self, fast_config, tmp_path):
        result = invoke(
            ["-o", str(tmp_path), "--set", "mc.samples_per_case=20",
             "--set", "mc.calibration_samples=20", "mc", "--mode", "rom_only"],
            env={"ROMRAM_CONFIG": str(fast_config)},
        )
        assert result.exit_code == 0
