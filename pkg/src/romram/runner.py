"""High-level run recipes shared by the HTTP service and the CLI.

Each recipe is a pure function of a validated :class:`RunConfig` plus its
command parameters and returns a :class:`RunResult` holding the produced
file payloads, so callers only decide where bytes go.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import (
    CalibrationInfeasible,
    calibrate,
    case_flavor,
    case_label,
    case_q,
    measure_metrics,
    parse_case,
    run_monte_carlo,
)
from .config import MODE_NAMES, ConfigError, RunConfig
from .dynamics import BitCell, simulate_read_event
from .protocol import Mode, ModeConfig, sl_select
from .units import parse_quantity
from .waveforms import ControlWaveforms

STATUS_OK = "ok"
STATUS_THRESHOLD_FAILED = "threshold_failed"
STATUS_INFEASIBLE = "infeasible"


@dataclass
class RunResult:
    status: str
    files: dict[str, str] = field(default_factory=dict)
    info: dict = field(default_factory=dict)


def _trace_csv(times: np.ndarray, v_rbl: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("time_s,v_rbl_V\n")
    for t, v in zip(times, v_rbl):
        buf.write(f"{float(t)!r},{float(v)!r}\n")
    return buf.getvalue()


def run_simulate(
    config: RunConfig,
    case: str | int,
    mode_name: str,
    vsl: str | float | None = None,
    duration: str | float | None = None,
    phase: int = 1,
) -> RunResult:
    """Single-event bit-line trace for one case under a mode's phase plan.

    This is a waveform-inspection tool: the case's literal (q, flavor) pair
    is simulated even where the full protocol would first force q to zero.
    ``vsl`` and ``duration`` override the plan for discharge studies.
    """
    code = parse_case(case)
    mode_cfg = config.mode_config(mode_name)
    if phase == 1:
        plan = mode_cfg.phase1
    elif phase == 2 and mode_cfg.mode is Mode.DUAL_CONTEXT:
        plan = sl_select(case_q(code), mode_cfg)
    else:
        raise ConfigError(f"mode {mode_name} has no phase {phase}")
    if vsl is not None:
        level = parse_quantity(vsl, "voltage") if isinstance(vsl, str) else float(vsl)
        plan = replace(plan, vsl=level)
    cfg = config.sim_config()
    params = config.device_params()
    if duration is not None:
        window = parse_quantity(duration, "time") if isinstance(duration, str) else float(duration)
        wave = ControlWaveforms.read_pulse(
            cfg.vdd, plan.vsl, min(plan.rwl_pulse, window) if plan.rwl_pulse > 0 else 0.0, window
        )
    else:
        wave = plan.waveform(cfg.vdd)
    cell = BitCell.nominal(case_q(code), case_flavor(code))
    trace = simulate_read_event(cell, wave, cfg, params)
    name = f"trace_{mode_name}_case{case_label(code)}.csv"
    return RunResult(
        status=STATUS_OK,
        files={name: _trace_csv(trace.times, trace.v_rbl)},
        info={
            "final_voltage_V": trace.final_voltage,
            "energy_J": trace.energy_drawn,
            "supply_charge_C": trace.supply_charge,
            "vsl_V": plan.vsl,
        },
    )


def run_calibrate(config: RunConfig, mode_name: str) -> RunResult:
    """Maximin (v_ref, t_strobe) for every phase of one mode."""
    template = config.mode_config(mode_name)
    cfg = config.sim_config()
    params = config.device_params()
    mc = config.mc_config()
    try:
        result = calibrate(template, cfg, params, mc)
    except CalibrationInfeasible as exc:
        return RunResult(
            status=STATUS_INFEASIBLE,
            info={"reason": str(exc), "best_margin_V": exc.best_margin, "mode": mode_name},
        )
    buf = io.StringIO()
    buf.write("phase,v_ref_V,t_strobe_s,worst_margin_V\n")
    for name, point in result.points.items():
        buf.write(f"{name},{point.v_ref!r},{point.t_strobe!r},{point.margin!r}\n")
    return RunResult(
        status=STATUS_OK,
        files={f"calibration_{mode_name}.csv": buf.getvalue()},
        info={
            "mode": mode_name,
            "points": {
                name: {"v_ref_V": p.v_ref, "t_strobe_s": p.t_strobe, "margin_V": p.margin}
                for name, p in result.points.items()
            },
        },
    )


def _calibrated_mode(config: RunConfig, mode_name: str) -> ModeConfig:
    template = config.mode_config(mode_name)
    result = calibrate(
        template, config.sim_config(), config.device_params(), config.mc_config()
    )
    return result.mode_config


def run_mc(
    config: RunConfig, mode_name: str, calibrate_first: bool = False
) -> RunResult:
    """Monte-Carlo yield run for one mode; fails when any case misses the threshold."""
    cfg = config.sim_config()
    params = config.device_params()
    mc = config.mc_config()
    try:
        mode_cfg = _calibrated_mode(config, mode_name) if calibrate_first else config.mode_config(mode_name)
    except CalibrationInfeasible as exc:
        return RunResult(
            status=STATUS_INFEASIBLE,
            info={"reason": str(exc), "best_margin_V": exc.best_margin, "mode": mode_name},
        )
    report = run_monte_carlo(mode_cfg, mc, cfg, params)
    ok = report.passes(mc.yield_threshold)
    files = {
        f"mc_{mode_name}.csv": report.to_csv(),
        f"mc_{mode_name}_endpoints.csv": report.endpoints_csv(),
        f"mc_{mode_name}_envelope.csv": report.envelope_csv(),
        f"mc_{mode_name}_summary.txt": report.summary(),
    }
    info = {
        "mode": mode_name,
        "worst_fraction": report.worst_fraction,
        "fractions": {case_label(c): report.case_fraction(c) for c in report.case_correct},
        "threshold": mc.yield_threshold,
    }
    return RunResult(
        status=STATUS_OK if ok else STATUS_THRESHOLD_FAILED, files=files, info=info
    )


def run_table1(config: RunConfig, modes: list[str] | None = None) -> RunResult:
    """Normalized delay/energy/leakage table over calibrated modes."""
    cfg = config.sim_config()
    params = config.device_params()
    mc = config.mc_config()
    names = modes if modes is not None else list(MODE_NAMES)
    calibrated: dict[str, ModeConfig | None] = {}
    try:
        for name in names:
            if name == "baseline":
                calibrated[name] = None
                continue
            if name not in MODE_NAMES:
                raise ConfigError(f"unknown mode {name!r}")
            calibrated[name] = _calibrated_mode(config, name)
        report = measure_metrics(calibrated, cfg, params, config.baseline_cell(), mc)
    except CalibrationInfeasible as exc:
        return RunResult(
            status=STATUS_INFEASIBLE,
            info={"reason": str(exc), "best_margin_V": exc.best_margin},
        )
    return RunResult(
        status=STATUS_OK,
        files={"table1.csv": report.to_csv(), "table1_summary.txt": report.summary()},
        info={
            "delay_normalized": {m: report.delay_norm(m) for m in report.mode_order},
            "energy_normalized": {m: report.energy_norm(m) for m in report.mode_order},
            "leakage_normalized": report.leakage_norm,
        },
    )


SWEEP_PARAMETERS = ("vsl", "v_ref", "sigma_vt", "c_bl")


def _apply_sweep_value(document: dict, parameter: str, value: float, mode_name: str) -> None:
    if parameter == "vsl":
        document["modes"][mode_name]["phase1"]["vsl"] = f"{value:.9g} V"
    elif parameter == "v_ref":
        document["modes"][mode_name]["phase1"]["v_ref"] = f"{value:.9g} V"
    elif parameter == "sigma_vt":
        document["variation"]["sigma_vt"] = f"{value:.9g} V"
    elif parameter == "c_bl":
        document["sim"]["c_bl"] = f"{value:.9g} F"
    else:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")


def run_sweep(
    config_document: dict,
    parameter: str,
    values: list[float],
    mode_name: str,
) -> RunResult:
    """One calibrate-plus-MC row per sweep point.

    ``v_ref`` sweeps apply the value literally and skip calibration; all
    other parameters re-calibrate the mode at every point.
    """
    import copy

    from .config import validate_config

    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
    buf = io.StringIO()
    buf.write(
        "parameter,value,feasible,worst_margin_V,worst_fraction,case_fractions,passed\n"
    )
    rows_info = []
    for value in values:
        document = copy.deepcopy(config_document)
        _apply_sweep_value(document, parameter, float(value), mode_name)
        config = validate_config(document)
        cfg = config.sim_config()
        params = config.device_params()
        mc = config.mc_config()
        if parameter == "v_ref":
            mode_cfg = config.mode_config(mode_name)
            feasible = True
            margin = float("nan")
        else:
            try:
                result = calibrate(config.mode_config(mode_name), cfg, params, mc)
                mode_cfg = result.mode_config
                feasible = True
                margin = result.worst_margin
            except CalibrationInfeasible as exc:
                buf.write(
                    f"{parameter},{float(value)!r},0,{exc.best_margin!r},,,0\n"
                )
                rows_info.append(
                    {"value": float(value), "feasible": False, "margin_V": exc.best_margin}
                )
                continue
        report = run_monte_carlo(mode_cfg, mc, cfg, params, collect_envelopes=False)
        fractions = ";".join(
            f"{case_label(c)}={report.case_fraction(c)!r}" for c in sorted(report.case_correct)
        )
        passed = int(report.passes(mc.yield_threshold))
        buf.write(
            f"{parameter},{float(value)!r},{int(feasible)},{margin!r},"
            f"{report.worst_fraction!r},{fractions},{passed}\n"
        )
        rows_info.append(
            {
                "value": float(value),
                "feasible": True,
                "margin_V": margin,
                "worst_fraction": report.worst_fraction,
                "passed": bool(passed),
            }
        )
    return RunResult(
        status=STATUS_OK,
        files={f"sweep_{parameter}_{mode_name}.csv": buf.getvalue()},
        info={"rows": rows_info, "parameter": parameter, "mode": mode_name},
    )
