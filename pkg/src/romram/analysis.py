"""Monte-Carlo verification, sense calibration, and normalized metrics.

Every sampled quantity is a pure function of the variation seed and a
per-case draw stream, so reports are reproducible bit for bit no matter how
the batch is chunked or parallelized.
"""
from __future__ import annotations

import concurrent.futures
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .device import DeviceParams, VariationSpec, VtFlavor, sample_delta_vt
from .dynamics import (
    BatchTraces,
    SimConfig,
    SimulationError,
    simulate_stack_batch,
    solve_stack_current,
)
from .protocol import Mode, ModeConfig, PhasePlan, SenseConfig
from .waveforms import ControlWaveforms

CASE_CODES = (0, 1, 2, 3)

# draw streams: MC cells live far above array draws (which start at 0)
_MC_STREAM_BASE = 1 << 48
_BASELINE_STREAM_BASE = 1 << 49


class CalibrationInfeasible(RuntimeError):
    """No (v_ref, t_strobe) point separates the mode's cases by the margin."""

    def __init__(self, message: str, best_margin: float):
        super().__init__(message)
        self.best_margin = best_margin


class MetricsError(RuntimeError):
    """A nominal case never crosses its calibrated reference."""


def case_label(case: int) -> str:
    return format(case, "02b")


def case_q(case: int) -> int:
    return (case >> 1) & 1


def case_flavor(case: int) -> VtFlavor:
    return VtFlavor.LOW_VT if case & 1 else VtFlavor.HIGH_VT


def parse_case(text: str | int) -> int:
    if isinstance(text, int):
        case = text
    else:
        s = text.strip().lower().removeprefix("case-").removeprefix("0b")
        if s in ("00", "01", "10", "11"):
            case = int(s, 2)
        else:
            case = int(s)
    if case not in CASE_CODES:
        raise ValueError(f"case must be one of 00/01/10/11, got {text!r}")
    return case


@dataclass(frozen=True)
class McConfig:
    """Monte-Carlo run settings."""

    samples_per_case: int = 5000
    variation: VariationSpec = field(default_factory=VariationSpec)
    cases: tuple[int, ...] = CASE_CODES
    calibration_samples: int = 500
    min_margin: float = 0.010      # V, below this calibration declares infeasible
    yield_threshold: float = 1.0   # correct-read fraction demanded per case
    workers: int = 1
    chunk_size: int = 1024

    def __post_init__(self) -> None:
        if self.samples_per_case < 1 or self.calibration_samples < 1:
            raise ValueError("sample counts must be >= 1")
        for c in self.cases:
            if c not in CASE_CODES:
                raise ValueError(f"unknown case code {c}")
        if self.workers < 1 or self.chunk_size < 1:
            raise ValueError("workers and chunk_size must be >= 1")


def mc_case_deltas(
    variation: VariationSpec, case: int, n: int, stream_base: int = _MC_STREAM_BASE
) -> tuple[np.ndarray, np.ndarray]:
    """(upper, lower) threshold shifts for n sampled cells of one case."""
    base = stream_base | (case << 40)
    draws = sample_delta_vt(variation, base + np.arange(2 * n, dtype=np.uint64))
    return draws[0::2], draws[1::2]


def _case_vt_arrays(
    params: DeviceParams, case: int, d_up: np.ndarray, d_lo: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    vt = params.vt_nominal(case_flavor(case))
    return vt + d_up, vt + d_lo


def _simulate_case_phase(
    case: int,
    q: int,
    plan: PhasePlan,
    d_up: np.ndarray,
    d_lo: np.ndarray,
    cfg: SimConfig,
    params: DeviceParams,
    sel: np.ndarray | None = None,
) -> BatchTraces:
    vt_up, vt_lo = _case_vt_arrays(params, case, d_up, d_lo)
    if sel is not None:
        vt_up, vt_lo = vt_up[sel], vt_lo[sel]
    gate = np.full(vt_up.size, q * cfg.vdd)
    return simulate_stack_batch(vt_up, vt_lo, gate, plan.waveform(cfg.vdd), cfg, params)


def _mode_cases(mode_cfg: ModeConfig, requested: tuple[int, ...]) -> tuple[int, ...]:
    """Operating cases of a mode (ROM-only forces q = 0, leaving two cases)."""
    if mode_cfg.mode is Mode.ROM_ONLY:
        return tuple(sorted({c & 1 for c in requested}))
    return tuple(requested)


def _expected_bits(mode: Mode, case: int) -> dict[int, int]:
    """Expected comparator output per phase (phase -> bit)."""
    q, rom = case_q(case), case & 1
    if mode is Mode.ROM_ONLY:
        return {1: rom}
    if mode in (Mode.RAM_ONLY_RELIABILITY, Mode.RAM_ONLY_DELAY):
        return {1: q}
    return {1: q, 2: rom}


@dataclass(frozen=True)
class PhaseYield:
    """Comparator statistics of one case at one phase."""

    case: int
    phase: int
    expected_bit: int
    n: int
    n_correct: int
    v_ref: float
    t_strobe: float
    v_min: float
    v_max: float
    v_mean: float
    v_std: float
    worst_margin: float
    n_errors: int

    @property
    def fraction(self) -> float:
        return self.n_correct / self.n


@dataclass
class YieldReport:
    """Per-case Monte-Carlo outcome of one mode."""

    mode: str
    sigma_vt: float
    seed: int
    samples_per_case: int
    rows: list[PhaseYield]
    case_correct: dict[int, np.ndarray]       # per-sample overall correctness
    endpoints: dict[tuple[int, int], np.ndarray]  # (case, phase) -> strobe voltages
    ram_bits: dict[int, np.ndarray] = field(default_factory=dict)  # DC phase-I reads
    envelopes: dict[tuple[int, int], dict[str, np.ndarray]] = field(default_factory=dict)

    def case_fraction(self, case: int) -> float:
        correct = self.case_correct[case]
        return float(np.count_nonzero(correct)) / correct.size

    @property
    def worst_fraction(self) -> float:
        if not self.case_correct:
            return 1.0
        return min(self.case_fraction(c) for c in self.case_correct)

    def passes(self, threshold: float) -> bool:
        return self.worst_fraction >= threshold

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(
            "case,phase,expected_bit,samples,correct,fraction,v_ref_V,t_strobe_s,"
            "v_min_V,v_max_V,v_mean_V,v_std_V,worst_margin_V,errors\n"
        )
        for r in self.rows:
            buf.write(
                f"{case_label(r.case)},{r.phase},{r.expected_bit},{r.n},{r.n_correct},"
                f"{r.fraction!r},{r.v_ref!r},{r.t_strobe!r},{r.v_min!r},{r.v_max!r},"
                f"{r.v_mean!r},{r.v_std!r},{r.worst_margin!r},{r.n_errors}\n"
            )
        return buf.getvalue()

    def endpoints_csv(self) -> str:
        buf = io.StringIO()
        buf.write("case,phase,sample,v_strobe_V,correct\n")
        for (case, phase) in sorted(self.endpoints):
            v = self.endpoints[(case, phase)]
            ok = self.case_correct[case]
            for i in range(v.size):
                buf.write(f"{case_label(case)},{phase},{i},{v[i]!r},{int(ok[i])}\n")
        return buf.getvalue()

    def envelope_csv(self) -> str:
        """Per-case min/mean/max bit-line envelopes versus time (phase 1)."""
        keys = sorted(k for k in self.envelopes if k[1] == 1)
        if not keys:
            return "time_s\n"
        times = self.envelopes[keys[0]]["times"]
        header = "time_s," + ",".join(
            f"case{case_label(c)}_{w}_V" for c, _ in keys for w in ("min", "mean", "max")
        )
        buf = io.StringIO()
        buf.write(header + "\n")
        for i in range(times.size):
            cells = [repr(float(times[i]))]
            for key in keys:
                env = self.envelopes[key]
                cells += [
                    repr(float(env["min"][i])),
                    repr(float(env["mean"][i])),
                    repr(float(env["max"][i])),
                ]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def summary(self) -> str:
        lines = [
            f"mode: {self.mode}",
            f"samples per case: {self.samples_per_case}",
            f"sigma_vt: {self.sigma_vt} V   seed: {self.seed}",
        ]
        for case in sorted(self.case_correct):
            lines.append(f"case-{case_label(case)}: correct fraction {self.case_fraction(case)!r}")
        for r in self.rows:
            lines.append(
                f"  case-{case_label(r.case)} phase {r.phase}: expected {r.expected_bit}, "
                f"{r.n_correct}/{r.n} correct, worst margin {r.worst_margin:+.6f} V "
                f"(v_ref {r.v_ref:.6f} V, strobe {r.t_strobe:.3e} s)"
            )
        return "\n".join(lines) + "\n"


def _margin(values: np.ndarray, v_ref: float, expected: int) -> np.ndarray:
    """Signed sense margin: positive means the comparator lands correctly."""
    return (v_ref - values) if expected == 1 else (values - v_ref)


def _phase_rows_from_values(
    case: int,
    phase: int,
    expected: int,
    values: np.ndarray,
    sc: SenseConfig,
    n_errors: int,
) -> tuple[PhaseYield, np.ndarray]:
    bits = (values < sc.v_ref).astype(np.uint8)
    correct = bits == expected
    margins = _margin(values, sc.v_ref, expected)
    row = PhaseYield(
        case=case,
        phase=phase,
        expected_bit=expected,
        n=values.size,
        n_correct=int(np.count_nonzero(correct)),
        v_ref=sc.v_ref,
        t_strobe=sc.t_strobe,
        v_min=float(values.min()),
        v_max=float(values.max()),
        v_mean=float(values.mean()),
        v_std=float(values.std()),
        worst_margin=float(margins.min()),
        n_errors=n_errors,
    )
    return row, correct


def _envelope(traces: BatchTraces) -> dict[str, np.ndarray]:
    return {
        "times": traces.times.copy(),
        "min": traces.v_rbl.min(axis=0),
        "mean": traces.v_rbl.mean(axis=0),
        "max": traces.v_rbl.max(axis=0),
    }


def _chunked_phase_values(
    case: int,
    q: int,
    plan: PhasePlan,
    d_up: np.ndarray,
    d_lo: np.ndarray,
    cfg: SimConfig,
    params: DeviceParams,
    mc: McConfig,
    collect_envelope: bool,
) -> tuple[np.ndarray, np.ndarray, int, dict[str, np.ndarray] | None]:
    """Strobe voltages and energies for one case/phase, chunked and optionally parallel.

    Lanes are independent, so concatenating chunk results is bit-identical to
    one big batch.  Failed chunks fall back to lane-at-a-time simulation and
    report per-sample errors as NaN endpoints.
    """
    n = d_up.size
    chunks = [
        (i, slice(i, min(i + mc.chunk_size, n))) for i in range(0, n, mc.chunk_size)
    ]

    def run(chunk: slice):
        try:
            traces = _simulate_case_phase(
                case, q, plan, d_up[chunk], d_lo[chunk], cfg, params
            )
            values = traces.values_at(plan.sense.t_strobe)
            energy = traces.energy_drawn
            env = _envelope(traces) if collect_envelope else None
            return values, energy, 0, env
        except SimulationError:
            m = d_up[chunk].size
            values = np.empty(m)
            energy = np.empty(m)
            errors = 0
            for j in range(m):
                sub = slice(chunk.start + j, chunk.start + j + 1)
                try:
                    tr = _simulate_case_phase(
                        case, q, plan, d_up[sub], d_lo[sub], cfg, params
                    )
                    values[j] = tr.values_at(plan.sense.t_strobe)[0]
                    energy[j] = tr.energy_drawn[0]
                except SimulationError:
                    values[j] = np.nan
                    energy[j] = np.nan
                    errors += 1
            return values, energy, errors, None

    if mc.workers > 1 and len(chunks) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=mc.workers) as pool:
            results = list(pool.map(run, [c for _, c in chunks]))
    else:
        results = [run(c) for _, c in chunks]

    values = np.concatenate([r[0] for r in results])
    energy = np.concatenate([r[1] for r in results])
    errors = sum(r[2] for r in results)
    envs = [r[3] for r in results if r[3] is not None]
    envelope = None
    if collect_envelope and envs and len(envs) == len(results):
        weights = np.array([r[0].size for r in results], dtype=float)
        envelope = {
            "times": envs[0]["times"],
            "min": np.min([e["min"] for e in envs], axis=0),
            "max": np.max([e["max"] for e in envs], axis=0),
            "mean": np.sum([e["mean"] * w for e, w in zip(envs, weights)], axis=0)
            / weights.sum(),
        }
    return values, energy, errors, envelope


def run_monte_carlo(
    mode_cfg: ModeConfig,
    mc: McConfig,
    cfg: SimConfig,
    params: DeviceParams,
    collect_envelopes: bool = True,
) -> YieldReport:
    """Sample fresh cells per case, run the mode's read, tally correctness.

    Cells are deterministic in (seed, case, sample index); execution order
    and worker count cannot change any number in the report.
    """
    mode_cfg.validate(cfg, params)
    cases = _mode_cases(mode_cfg, mc.cases)
    n = mc.samples_per_case
    rows: list[PhaseYield] = []
    case_correct: dict[int, np.ndarray] = {}
    endpoints: dict[tuple[int, int], np.ndarray] = {}
    envelopes: dict[tuple[int, int], dict[str, np.ndarray]] = {}
    ram_bits: dict[int, np.ndarray] = {}

    for case in cases:
        d_up, d_lo = mc_case_deltas(mc.variation, case, n)
        q = 0 if mode_cfg.mode is Mode.ROM_ONLY else case_q(case)
        expected = _expected_bits(mode_cfg.mode, case)

        plan1 = mode_cfg.phase1
        v1, _, err1, env1 = _chunked_phase_values(
            case, q, plan1, d_up, d_lo, cfg, params, mc, collect_envelopes
        )
        finite1 = np.nan_to_num(v1, nan=cfg.vdd)  # errored lanes read as stuck-high
        row1, correct1 = _phase_rows_from_values(
            case, 1, expected[1], finite1, plan1.sense, err1
        )
        rows.append(row1)
        endpoints[(case, 1)] = finite1
        if env1 is not None:
            envelopes[(case, 1)] = env1
        correct = correct1 & np.isfinite(v1)

        if mode_cfg.mode is Mode.DUAL_CONTEXT:
            bits1 = (finite1 < plan1.sense.v_ref).astype(np.uint8)
            ram_bits[case] = bits1
            v2 = np.full(n, np.nan)
            err2 = 0
            for branch_bit in (0, 1):
                sel = bits1 == branch_bit
                if not sel.any():
                    continue
                plan2 = mode_cfg.phase2_if_ram0 if branch_bit == 0 else mode_cfg.phase2_if_ram1
                bv, _, be, benv = _chunked_phase_values(
                    case, q, plan2, d_up[sel], d_lo[sel], cfg, params, mc,
                    collect_envelope=collect_envelopes and bool(sel.all()),
                )
                v2[sel] = bv
                err2 += be
                if benv is not None:
                    envelopes[(case, 2)] = benv
            # the plan actually used per sample follows the sensed phase-I bit;
            # margins are reported against the majority (nominal) branch plan
            nominal_plan2 = mode_cfg.phase2_if_ram0 if q == 0 else mode_cfg.phase2_if_ram1
            finite2 = np.nan_to_num(v2, nan=cfg.vdd)
            row2, correct2 = _phase_rows_from_values(
                case, 2, expected[2], finite2, nominal_plan2.sense, err2
            )
            rows.append(row2)
            endpoints[(case, 2)] = finite2
            correct = correct & correct2 & np.isfinite(v2)

        case_correct[case] = correct

    return YieldReport(
        mode=mode_cfg.mode.value,
        sigma_vt=mc.variation.sigma_vt,
        seed=mc.variation.seed,
        samples_per_case=n,
        rows=rows,
        case_correct=case_correct,
        endpoints=endpoints,
        ram_bits=ram_bits,
        envelopes=envelopes,
    )


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationPoint:
    v_ref: float
    t_strobe: float
    margin: float


@dataclass(frozen=True)
class CalibrationResult:
    mode_config: ModeConfig
    points: dict[str, CalibrationPoint]  # phase name -> chosen point

    @property
    def worst_margin(self) -> float:
        return min(p.margin for p in self.points.values())


def _cluster_bounds(
    traces: dict[int, BatchTraces], expect: dict[int, int], t: float
) -> tuple[float, float]:
    """(lowest stay-high voltage, highest must-discharge voltage) at time t."""
    hi_floor = np.inf
    lo_ceil = -np.inf
    for case, bt in traces.items():
        v = bt.values_at(t)
        if expect[case] == 0:
            hi_floor = min(hi_floor, float(v.min()))
        else:
            lo_ceil = max(lo_ceil, float(v.max()))
    return hi_floor, lo_ceil


def _margin_at(
    traces: dict[int, BatchTraces], expect: dict[int, int], t: float, vdd: float
) -> tuple[float, float]:
    """(best margin, v_ref) at time t with v_ref constrained inside (0, vdd)."""
    hi_floor, lo_ceil = _cluster_bounds(traces, expect, t)
    v_ref = float(np.clip(0.5 * (hi_floor + lo_ceil), 1e-4, vdd - 1e-4))
    return min(hi_floor - v_ref, v_ref - lo_ceil), v_ref


def _calibrate_phase(
    traces: dict[int, BatchTraces],
    expect: dict[int, int],
    cfg: SimConfig,
    refine_iters: int = 40,
) -> CalibrationPoint:
    """Maximin (v_ref, t_strobe): grid scan plus local bisection refinement.

    For a fixed t the optimal reference is the clamped cluster midpoint, so
    the search is one-dimensional in t.  The margin is piecewise linear in t
    between grid samples; ternary refinement polishes the flanks of the best
    grid point.
    """
    grid = next(iter(traces.values())).times
    margins = []
    for k in range(1, grid.size):
        m, _ = _margin_at(traces, expect, float(grid[k]), cfg.vdd)
        margins.append(m)
    best_k = int(np.argmax(margins)) + 1
    t_best = float(grid[best_k])
    m_best, _ = _margin_at(traces, expect, t_best, cfg.vdd)

    lo = float(grid[max(best_k - 1, 1)])
    hi = float(grid[min(best_k + 1, grid.size - 1)])
    a, b = lo, hi
    for _ in range(refine_iters):
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        f1, _ = _margin_at(traces, expect, m1, cfg.vdd)
        f2, _ = _margin_at(traces, expect, m2, cfg.vdd)
        if f1 < f2:
            a = m1
        else:
            b = m2
    t_ref = 0.5 * (a + b)
    m_ref, _ = _margin_at(traces, expect, t_ref, cfg.vdd)
    if m_ref > m_best:
        t_best, m_best = t_ref, m_ref
    margin, v_ref = _margin_at(traces, expect, t_best, cfg.vdd)
    return CalibrationPoint(v_ref=v_ref, t_strobe=t_best, margin=margin)


def _phase_contexts(mode_cfg: ModeConfig) -> list[tuple[str, PhasePlan, dict[int, int], int | None]]:
    """(name, plan, case->expected bit, forced q) per phase of the mode."""
    mode = mode_cfg.mode
    if mode is Mode.ROM_ONLY:
        return [("phase1", mode_cfg.phase1, {0: 0, 1: 1}, 0)]
    if mode in (Mode.RAM_ONLY_RELIABILITY, Mode.RAM_ONLY_DELAY):
        return [("phase1", mode_cfg.phase1, {0: 0, 1: 0, 2: 1, 3: 1}, None)]
    return [
        ("phase1", mode_cfg.phase1, {0: 0, 1: 0, 2: 1, 3: 1}, None),
        ("phase2_if_ram0", mode_cfg.phase2_if_ram0, {0: 0, 1: 1}, None),
        ("phase2_if_ram1", mode_cfg.phase2_if_ram1, {2: 0, 3: 1}, None),
    ]


def calibrate(
    template: ModeConfig,
    cfg: SimConfig,
    params: DeviceParams,
    mc: McConfig,
) -> CalibrationResult:
    """Fix v_ref and t_strobe of every phase by maximin margin search.

    Raises :class:`CalibrationInfeasible` when the best achievable worst-case
    margin does not exceed ``mc.min_margin``.
    """
    n = mc.calibration_samples
    points: dict[str, CalibrationPoint] = {}
    new_phases: dict[str, PhasePlan] = {}
    for name, plan, expect, forced_q in _phase_contexts(template):
        traces: dict[int, BatchTraces] = {}
        for case in expect:
            d_up, d_lo = mc_case_deltas(mc.variation, case, n)
            q = forced_q if forced_q is not None else case_q(case)
            traces[case] = _simulate_case_phase(case, q, plan, d_up, d_lo, cfg, params)
        point = _calibrate_phase(traces, expect, cfg)
        if point.margin <= mc.min_margin:
            raise CalibrationInfeasible(
                f"{template.mode.value}/{name}: best worst-case margin "
                f"{point.margin * 1e3:.3f} mV does not exceed {mc.min_margin * 1e3:.1f} mV",
                best_margin=point.margin,
            )
        points[name] = point
        new_phases[name] = plan.with_sense(
            SenseConfig(v_ref=point.v_ref, t_strobe=point.t_strobe)
        )
    calibrated = replace(
        template,
        phase1=new_phases["phase1"],
        phase2_if_ram0=new_phases.get("phase2_if_ram0", template.phase2_if_ram0),
        phase2_if_ram1=new_phases.get("phase2_if_ram1", template.phase2_if_ram1),
    )
    calibrated.validate(cfg, params)
    return CalibrationResult(mode_config=calibrated, points=points)


# --------------------------------------------------------------------------
# normalized metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BaselineCell:
    """Standard 8T reference cell: one mid-way threshold, grounded-SL reads."""

    vt: float = 0.44
    core_leakage: float = 20e-9  # W, constant storage-core leakage per cell
    rwl_pulse: float = 6e-9

    def device_params(self, params: DeviceParams) -> DeviceParams:
        # single flavor: route everything through the low-Vt slot
        return replace(params, vt_low=self.vt, vt_high=self.vt + 1.0)

    def plan(self, sense: SenseConfig | None = None) -> PhasePlan:
        return PhasePlan(
            vsl=0.0,
            rwl_pulse=self.rwl_pulse,
            sense=sense or SenseConfig(v_ref=0.4, t_strobe=self.rwl_pulse / 2),
        )


@dataclass
class MetricsReport:
    """Raw and normalized read delay, read energy and standby leakage."""

    mode_order: list[str]
    delay_s: dict[str, float]
    energy_j: dict[str, float]
    leakage_w: float
    baseline_delay_s: float
    baseline_energy_j: float
    baseline_leakage_w: float

    def delay_norm(self, mode: str) -> float:
        return self.delay_s[mode] / self.baseline_delay_s

    def energy_norm(self, mode: str) -> float:
        return self.energy_j[mode] / self.baseline_energy_j

    @property
    def leakage_norm(self) -> float:
        return self.leakage_w / self.baseline_leakage_w

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(
            "mode,read_delay_per_bit_s,read_energy_per_bit_j,leakage_power_w,"
            "delay_normalized,energy_normalized,leakage_normalized\n"
        )
        for mode in self.mode_order:
            if mode == "baseline":
                leak, leak_norm = self.baseline_leakage_w, 1.0
            else:
                leak, leak_norm = self.leakage_w, self.leakage_norm
            buf.write(
                f"{mode},{self.delay_s[mode]!r},{self.energy_j[mode]!r},"
                f"{leak!r},{self.delay_norm(mode)!r},"
                f"{self.energy_norm(mode)!r},{leak_norm!r}\n"
            )
        return buf.getvalue()

    def summary(self) -> str:
        lines = [
            "normalized performance (baseline: standard grounded-SL read)",
            f"baseline delay {self.baseline_delay_s:.4e} s, "
            f"energy {self.baseline_energy_j:.4e} J, "
            f"leakage {self.baseline_leakage_w:.4e} W",
        ]
        for mode in self.mode_order:
            lines.append(
                f"{mode}: delay {self.delay_norm(mode):.3f}x  "
                f"energy {self.energy_norm(mode):.3f}x  "
                f"leakage {self.leakage_norm:.3f}x"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SeparabilityStudy:
    """Endpoint distributions of a case pair (or quad) at one SL level."""

    vsl: float
    t_strobe: float
    v_ref: float
    margin: float
    feasible: bool
    endpoints: dict[int, np.ndarray]
    envelopes: dict[int, dict[str, np.ndarray]]

    def envelope_csv(self) -> str:
        keys = sorted(self.envelopes)
        times = self.envelopes[keys[0]]["times"]
        header = "time_s," + ",".join(
            f"case{case_label(c)}_{w}_V" for c in keys for w in ("min", "mean", "max")
        )
        buf = io.StringIO()
        buf.write(header + "\n")
        for i in range(times.size):
            cells = [repr(float(times[i]))]
            for c in keys:
                env = self.envelopes[c]
                cells += [repr(float(env[w][i])) for w in ("min", "mean", "max")]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def separability_study(
    vsl: float,
    expect: dict[int, int],
    cfg: SimConfig,
    params: DeviceParams,
    mc: McConfig,
    rwl_pulse: float = 6e-9,
    forced_q: dict[int, int] | None = None,
) -> SeparabilityStudy:
    """Discharge a set of cases at one SL level and measure their separability.

    This is the raw bit-line study behind the V_SL choice: it reports the
    maximin sense point and whether the margin clears ``mc.min_margin``,
    plus per-case endpoint samples and envelopes for plotting.
    """
    plan = PhasePlan(
        vsl=vsl, rwl_pulse=rwl_pulse, sense=SenseConfig(v_ref=cfg.vdd / 2, t_strobe=rwl_pulse)
    )
    traces: dict[int, BatchTraces] = {}
    for case in expect:
        d_up, d_lo = mc_case_deltas(mc.variation, case, mc.samples_per_case)
        q = forced_q[case] if forced_q else case_q(case)
        traces[case] = _simulate_case_phase(case, q, plan, d_up, d_lo, cfg, params)
    point = _calibrate_phase(traces, expect, cfg)
    endpoints = {c: bt.values_at(point.t_strobe) for c, bt in traces.items()}
    envelopes = {c: _envelope(bt) for c, bt in traces.items()}
    return SeparabilityStudy(
        vsl=vsl,
        t_strobe=point.t_strobe,
        v_ref=point.v_ref,
        margin=point.margin,
        feasible=point.margin > mc.min_margin,
        endpoints=endpoints,
        envelopes=envelopes,
    )


def export_report(report: "YieldReport | MetricsReport", path) -> list:
    """Write a report as CSV plus a human-readable summary next to it.

    Returns the written paths; writes are atomic (temp file then rename).
    """
    import os
    import tempfile
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    written = []
    targets = {path: report.to_csv(), path.with_suffix(".txt"): report.summary()}
    if isinstance(report, YieldReport):
        targets[path.with_name(path.stem + "_endpoints.csv")] = report.endpoints_csv()
    for target, content in targets.items():
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{target.name}.")
        try:
            with os.fdopen(fd, "w") as handle:
                handle.write(content)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        written.append(target)
    return written


def _nominal_trace(
    vt: float,
    q: int,
    plan: PhasePlan,
    cfg: SimConfig,
    params: DeviceParams,
    trim_to_strobe: bool = False,
):
    if trim_to_strobe:
        wave = ControlWaveforms.read_pulse(
            cfg.vdd, plan.vsl, plan.sense.t_strobe, plan.sense.t_strobe
        )
    else:
        wave = plan.waveform(cfg.vdd)
    bt = simulate_stack_batch(
        np.array([vt]), np.array([vt]), np.array([q * cfg.vdd]), wave, cfg, params
    )
    return bt.lane(0)


def _phase_delay(
    plan: PhasePlan,
    expect: dict[int, int],
    forced_q: int | None,
    cfg: SimConfig,
    params: DeviceParams,
) -> float:
    """Worst nominal crossing time among the cases that must trip the comparator."""
    worst = 0.0
    for case, bit in expect.items():
        if bit != 1:
            continue
        q = forced_q if forced_q is not None else case_q(case)
        vt = params.vt_nominal(case_flavor(case))
        trace = _nominal_trace(vt, q, plan, cfg, params)
        t_cross = trace.crossing_time(plan.sense.v_ref)
        if t_cross is None:
            raise MetricsError(
                f"nominal case-{case_label(case)} never crosses v_ref = {plan.sense.v_ref} V"
            )
        worst = max(worst, t_cross)
    return worst


def _mode_delay(mode_cfg: ModeConfig, cfg: SimConfig, params: DeviceParams) -> float:
    total = 0.0
    for _, plan, expect, forced_q in _phase_contexts(mode_cfg):
        total += _phase_delay(plan, expect, forced_q, cfg, params)
    return total


def _mode_energy(mode_cfg: ModeConfig, cfg: SimConfig, params: DeviceParams) -> float:
    """Nominal read energy per bit: RWL trimmed at the strobe, averaged over cases."""
    cases = _mode_cases(mode_cfg, CASE_CODES)
    energies = []
    for case in cases:
        q = 0 if mode_cfg.mode is Mode.ROM_ONLY else case_q(case)
        vt = params.vt_nominal(case_flavor(case))
        e = _nominal_trace(vt, q, mode_cfg.phase1, cfg, params, trim_to_strobe=True).energy_drawn
        if mode_cfg.mode is Mode.DUAL_CONTEXT:
            plan2 = mode_cfg.phase2_if_ram0 if q == 0 else mode_cfg.phase2_if_ram1
            e += _nominal_trace(vt, q, plan2, cfg, params, trim_to_strobe=True).energy_drawn
        energies.append(e)
    return float(np.mean(energies))


def _stack_leak(vt: float, q: int, cfg: SimConfig, params: DeviceParams) -> float:
    current, _ = solve_stack_current(
        np.array([cfg.vdd]), 0.0, 0.0, np.array([q * cfg.vdd]),
        np.array([vt]), np.array([vt]), params,
    )
    return float(current[0]) * cfg.vdd


def calibrate_baseline(
    baseline: BaselineCell, cfg: SimConfig, params: DeviceParams, mc: McConfig
) -> PhasePlan:
    """Maximin sense point for the baseline cell's grounded-SL read."""
    bparams = baseline.device_params(params)
    plan = baseline.plan()
    traces: dict[int, BatchTraces] = {}
    for q in (0, 1):
        base = _BASELINE_STREAM_BASE | (q << 40)
        draws = sample_delta_vt(
            mc.variation, base + np.arange(2 * mc.calibration_samples, dtype=np.uint64)
        )
        vt_up = baseline.vt + draws[0::2]
        vt_lo = baseline.vt + draws[1::2]
        gate = np.full(vt_up.size, q * cfg.vdd)
        traces[q] = simulate_stack_batch(
            vt_up, vt_lo, gate, plan.waveform(cfg.vdd), cfg, bparams
        )
    point = _calibrate_phase(traces, {0: 0, 1: 1}, cfg)
    if point.margin <= mc.min_margin:
        raise CalibrationInfeasible(
            f"baseline read margin {point.margin * 1e3:.3f} mV below "
            f"{mc.min_margin * 1e3:.1f} mV",
            best_margin=point.margin,
        )
    return plan.with_sense(SenseConfig(v_ref=point.v_ref, t_strobe=point.t_strobe))


def measure_metrics(
    modes: dict[str, ModeConfig | None],
    cfg: SimConfig,
    params: DeviceParams,
    baseline: BaselineCell,
    mc: McConfig,
) -> MetricsReport:
    """Delay, energy and leakage per mode, normalized to the baseline cell.

    Delay sums the worst nominal comparator-crossing time of each phase;
    energy averages nominal per-case read energy with the RWL pulse ending
    at the strobe; leakage evaluates a balanced (half low-Vt, half high-Vt)
    array in standby against the baseline cell, both including the same
    constant storage-core term.
    """
    bparams = baseline.device_params(params)
    bplan = calibrate_baseline(baseline, cfg, params, mc)
    btrace = _nominal_trace(baseline.vt, 1, bplan, cfg, bparams)
    b_delay = btrace.crossing_time(bplan.sense.v_ref)
    if b_delay is None:
        raise MetricsError("baseline cell never crosses its reference")
    b_energy = float(
        np.mean(
            [
                _nominal_trace(baseline.vt, q, bplan, cfg, bparams, trim_to_strobe=True).energy_drawn
                for q in (0, 1)
            ]
        )
    )
    b_leak = _stack_leak(baseline.vt, 0, cfg, bparams) + baseline.core_leakage

    leak_balanced = (
        0.5 * (_stack_leak(params.vt_low, 0, cfg, params) + _stack_leak(params.vt_high, 0, cfg, params))
        + baseline.core_leakage
    )

    delay: dict[str, float] = {}
    energy: dict[str, float] = {}
    order: list[str] = []
    for name, mode_cfg in modes.items():
        order.append(name)
        if name == "baseline":
            delay[name] = b_delay
            energy[name] = b_energy
            continue
        delay[name] = _mode_delay(mode_cfg, cfg, params)
        energy[name] = _mode_energy(mode_cfg, cfg, params)
    return MetricsReport(
        mode_order=order,
        delay_s=delay,
        energy_j=energy,
        leakage_w=leak_balanced,
        baseline_delay_s=b_delay,
        baseline_energy_j=b_energy,
        baseline_leakage_w=b_leak,
    )
