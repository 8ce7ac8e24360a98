"""Benchmark protocol: staged vs simultaneous tuning on the vehicle plant.

Builds the two pipeline variants (six 3-D step-tuning stages in the order
yaw, roll, pitch, x, y, z versus one 18-D trajectory-tuning stage), runs
them over a list of seeds, evaluates every tuned vector on the square XY
trajectory, and aggregates the comparison.

Time reporting: serialized reports carry *simulated* episode seconds (the
deterministic analogue of tuning time in a simulation-backed benchmark);
measured wall-clock seconds are kept on the in-memory objects only so that
repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import control, metrics
from .control import LOOP_CHANNEL, LOOP_NAMES, param_slice
from .episode import EpisodeSpec, StepReference, Trail, WaypointReference, run_episode, trail_to_csv
from .multistage import (
    PipelineSpec,
    SentinelTracker,
    StageSpec,
    TuneReport,
    run_pipeline,
)
from .plant import AuvPlant, SystemModel
from .seeding import derive_seed

__all__ = [
    "VARIANTS",
    "STAGE_ORDER",
    "STEP_AMPLITUDES",
    "default_bounds",
    "square_trajectory",
    "manual_baseline",
    "step_cost_threshold",
    "BenchmarkSpec",
    "build_benchmark",
    "FinalEvaluation",
    "evaluate_final",
    "SeedResult",
    "VariantStats",
    "ComparisonReport",
    "compare",
    "report_to_json_dict",
    "comparison_csv",
    "write_comparison_outputs",
    "pipeline_trace_csv",
]

VARIANTS = ("individual", "simultaneous")
# Yaw first (horizontal-plane motion is the priority), then the remaining
# attitude loops, then the position loops.
STAGE_ORDER = ("yaw", "roll", "pitch", "x", "y", "z")
DEG = math.pi / 180.0
STEP_AMPLITUDES = {"roll": 5 * DEG, "pitch": 5 * DEG, "yaw": 5 * DEG, "x": 3.0, "y": 3.0, "z": 3.0}
_ATTITUDE_LOOPS = ("roll", "pitch", "yaw")


def default_bounds() -> tuple[np.ndarray, np.ndarray]:
    """The benchmark search box, per loop: attitude [0,5]^3, x/y
    [150,0,75]-[250,10,150], z [145,0,95]-[155,5,105]."""
    lo = np.zeros(18)
    hi = np.zeros(18)
    per_loop = {
        "roll": ([0, 0, 0], [5, 5, 5]),
        "pitch": ([0, 0, 0], [5, 5, 5]),
        "yaw": ([0, 0, 0], [5, 5, 5]),
        "x": ([150, 0, 75], [250, 10, 150]),
        "y": ([150, 0, 75], [250, 10, 150]),
        "z": ([145, 0, 95], [155, 5, 105]),
    }
    for loop in LOOP_NAMES:
        sl = param_slice(loop)
        lo[sl], hi[sl] = per_loop[loop]
    return lo, hi


def square_trajectory(side: float = 3.0) -> np.ndarray:
    """8 x 6 waypoint matrix: a square in the XY plane (corners plus edge
    midpoints), starting and ending at the origin corner; z and attitude
    references are 0 throughout."""
    half = side / 2.0
    xy = [
        (half, 0.0), (side, 0.0),
        (side, half), (side, side),
        (half, side), (0.0, side),
        (0.0, half), (0.0, 0.0),
    ]
    gamma = np.zeros((8, 6))
    gamma[:, 0] = [p[0] for p in xy]
    gamma[:, 1] = [p[1] for p in xy]
    return gamma


def manual_baseline(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Documented deterministic hand-picked baseline: box midpoints."""
    return (np.asarray(lo, dtype=float) + np.asarray(hi, dtype=float)) / 2.0


def step_cost_threshold(
    plant: SystemModel,
    hi: np.ndarray,
    loop: str,
    amplitude: float,
    margin: float = 0.2,
) -> float:
    """Step-task stopping threshold for one loop (scripted pre-pass).

    Reference response: the ideal critically damped second-order step
    response at the loop's proportional-gain-limited natural frequency
    w = sqrt(K_p^max / M), whose integral absolute error is 2 R_A / w.
    The threshold adds a 20% margin on top.  The ideal ignores actuator
    saturation, so it is aspirational for the saturation-limited position
    loops (those stages then spend their full budget) and attainable for
    the attitude loops (those stages stop early).
    """
    channel = LOOP_CHANNEL[loop]
    sl = param_slice(loop)
    kp_max = float(np.asarray(hi, dtype=float)[sl][0])
    if kp_max <= 0:
        raise ValueError(f"loop {loop!r} has a non-positive proportional-gain bound")
    omega = math.sqrt(kp_max / float(plant.inertia[channel]))
    return (1.0 + margin) * 2.0 * abs(amplitude) / omega


@dataclass(frozen=True)
class BenchmarkSpec:
    """Comparison protocol settings: seeds, iteration caps, evaluation task."""

    seeds: tuple[int, ...] = (1, 2, 3, 4)
    attitude_cap: int = 200
    position_cap: int = 100
    simultaneous_cap: int = 1000
    trajectory: np.ndarray = field(default_factory=square_trajectory)
    waypoint_radius: float = 0.25
    period: float = 0.1
    step_max_samples: int = 200
    trajectory_max_samples: int = 1000
    substeps: int = 10
    auto_step_thresholds: bool = True
    trajectory_threshold: float | None = None
    simultaneous_refit_every: int = 5
    # Initial (roll, pitch, yaw) of the trajectory episodes.  A nonzero
    # offset exercises every control loop during trajectory tuning and
    # evaluation (the benchmark vehicle's diagonal dynamics would otherwise
    # leave the attitude loops inert on an attitude-zero trajectory).
    initial_attitude: tuple[float, float, float] = (0.1, 0.1, 0.5)
    lo: np.ndarray = field(default_factory=lambda: default_bounds()[0])
    hi: np.ndarray = field(default_factory=lambda: default_bounds()[1])

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seed list must be non-empty")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        traj = np.asarray(self.trajectory, dtype=float)
        if traj.ndim != 2 or traj.shape[1] != 6:
            raise ValueError("trajectory must be an n_w x 6 matrix")
        if np.any(traj[:, 2:] != 0.0):
            raise ValueError("benchmark trajectory rows must keep z and attitude at 0")
        object.__setattr__(self, "trajectory", traj)
        att = tuple(float(v) for v in self.initial_attitude)
        if len(att) != 3:
            raise ValueError("initial_attitude must hold (roll, pitch, yaw)")
        object.__setattr__(self, "initial_attitude", att)
        for attr in ("lo", "hi"):
            arr = np.asarray(getattr(self, attr), dtype=float)
            if arr.shape != (control.N_PARAMS,):
                raise ValueError(f"{attr} must have 18 entries")
            object.__setattr__(self, attr, arr)
        horizon = self.trajectory_max_samples * self.period
        if horizon > metrics.MAX_ETX_HORIZON_S:
            raise ValueError("trajectory horizon exceeds the exp-weight overflow guard")

    def trajectory_x0(self) -> np.ndarray:
        x0 = np.zeros(12)
        x0[3:6] = self.initial_attitude
        return x0


def _step_stage(spec: BenchmarkSpec, plant: SystemModel, loop: str, carry_attitude: bool) -> StageSpec:
    sl = param_slice(loop)
    fix_mask = np.ones(18, dtype=bool)
    fix_mask[sl] = False
    fixed_values = np.zeros(18)
    carry_mask = np.zeros(18, dtype=bool)
    if carry_attitude:
        for att in _ATTITUDE_LOOPS:
            carry_mask[param_slice(att)] = True
    carry_mask &= fix_mask
    channel = LOOP_CHANNEL[loop]
    amplitude = STEP_AMPLITUDES[loop]
    threshold = None
    if spec.auto_step_thresholds:
        threshold = step_cost_threshold(plant, spec.hi, loop, amplitude)
    return StageSpec(
        name=loop,
        fix_mask=fix_mask,
        fixed_values=fixed_values,
        carry_mask=carry_mask,
        lo=spec.lo,
        hi=spec.hi,
        reference=StepReference(baseline=np.zeros(6), amplitude=amplitude, channel=channel),
        objective=metrics.ObjectiveSpec("iae", (channel,)),
        budget=spec.attitude_cap if loop in _ATTITUDE_LOOPS else spec.position_cap,
        period=spec.period,
        max_samples=spec.step_max_samples,
        substeps=spec.substeps,
        threshold=threshold,
    )


def build_benchmark(spec: BenchmarkSpec, variant: str, plant: SystemModel, seed: int) -> PipelineSpec:
    """Pipeline for one variant and one benchmark seed.

    individual: six 3-D step-tuning stages (yaw, roll, pitch with all other
    gains frozen at zero; then x, y, z with the attitude gains carried from
    their stages and the other position gains frozen at zero).
    simultaneous: one 18-D stage on the waypoint-trajectory task.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    pipeline_seed = derive_seed(seed, "variant", variant)
    if variant == "individual":
        stages = tuple(
            _step_stage(spec, plant, loop, carry_attitude=loop not in _ATTITUDE_LOOPS)
            for loop in STAGE_ORDER
        )
    else:
        stages = (
            StageSpec(
                name="all",
                fix_mask=np.zeros(18, dtype=bool),
                fixed_values=np.zeros(18),
                lo=spec.lo,
                hi=spec.hi,
                reference=WaypointReference(spec.trajectory, radius=spec.waypoint_radius),
                objective=metrics.ObjectiveSpec("etx_iae", (0, 1, 2, 3, 4, 5)),
                budget=spec.simultaneous_cap,
                period=spec.period,
                max_samples=spec.trajectory_max_samples,
                x0=spec.trajectory_x0(),
                substeps=spec.substeps,
                threshold=spec.trajectory_threshold,
                refit_every=spec.simultaneous_refit_every,
            ),
        )
    return PipelineSpec(stages=stages, lo=spec.lo, hi=spec.hi, seed=pipeline_seed)


@dataclass
class FinalEvaluation:
    cost: float
    completion_time_s: float
    completed: bool
    diverged: bool
    trail: Trail


def evaluate_final(params: np.ndarray, plant: SystemModel, spec: BenchmarkSpec) -> FinalEvaluation:
    """One trajectory episode with the tuned gains; the evaluation metric is
    the exponential-weighted IAE over all six channels."""
    episode = EpisodeSpec(
        period=spec.period,
        max_samples=spec.trajectory_max_samples,
        x0=spec.trajectory_x0(),
        reference=WaypointReference(spec.trajectory, radius=spec.waypoint_radius),
        params=np.asarray(params, dtype=float),
        substeps=spec.substeps,
    )
    trail = run_episode(episode, plant)
    if trail.diverged:
        cost = SentinelTracker().value()
    else:
        cost = metrics.etx_iae(trail, (0, 1, 2, 3, 4, 5))
    return FinalEvaluation(
        cost=float(cost),
        completion_time_s=float(trail.completion_time),
        completed=trail.completed,
        diverged=trail.diverged,
        trail=trail,
    )


@dataclass
class SeedResult:
    variant: str
    seed: int
    final_cost: float | None = None
    completion_time_s: float | None = None
    completed: bool = False
    diverged: bool = False
    total_evaluations: int = 0
    audited_evaluations: int = 0
    sim_time_s: float = 0.0
    stage_names: tuple[str, ...] = ()
    stage_evaluations: tuple[int, ...] = ()
    stage_best_costs: tuple[float, ...] = ()
    final_params: np.ndarray | None = None
    error: str | None = None
    # Measured wall seconds; never serialized into the deterministic outputs.
    wall_s: float = 0.0
    report: TuneReport | None = None
    final_trail: Trail | None = None


@dataclass
class VariantStats:
    variant: str
    n: int
    cost_mean: float
    cost_std: float | None
    completion_mean: float
    completion_std: float | None
    sim_hours_mean: float
    sim_hours_std: float | None
    samples_mean: float
    samples_std: float | None


@dataclass
class ComparisonReport:
    seed_results: list[SeedResult]
    stats: dict[str, VariantStats]
    deltas: dict[str, float]
    manual_cost: float
    manual_completion_s: float
    manual_completed: bool
    manual_params: np.ndarray
    seeds: tuple[int, ...]


def _aggregate(variant: str, rows: list[SeedResult]) -> VariantStats | None:
    good = [r for r in rows if r.error is None]
    if not good:
        return None

    def stat(values):
        arr = np.asarray(values, dtype=float)
        mean = float(np.mean(arr))
        std = float(np.std(arr, ddof=1)) if arr.size >= 2 else None
        return mean, std

    cost_mean, cost_std = stat([r.final_cost for r in good])
    comp_mean, comp_std = stat([r.completion_time_s for r in good])
    hours_mean, hours_std = stat([r.sim_time_s / 3600.0 for r in good])
    samp_mean, samp_std = stat([r.total_evaluations for r in good])
    return VariantStats(
        variant=variant, n=len(good),
        cost_mean=cost_mean, cost_std=cost_std,
        completion_mean=comp_mean, completion_std=comp_std,
        sim_hours_mean=hours_mean, sim_hours_std=hours_std,
        samples_mean=samp_mean, samples_std=samp_std,
    )


def compare(
    spec: BenchmarkSpec,
    plant: SystemModel | None = None,
    variants: tuple[str, ...] = VARIANTS,
    observer=None,
) -> ComparisonReport:
    """Run the selected variants across all seeds and aggregate the stats.

    Per-seed failures are recorded on their rows and excluded from the
    aggregates with a warning.  Reported sample counts are cross-checked
    against an evaluation counter independent of the BO traces.
    """
    plant = plant if plant is not None else AuvPlant()
    rows: list[SeedResult] = []
    for variant in variants:
        for seed in spec.seeds:
            counter = [0]

            def counting_observer(name, full, fixed, mask, _c=counter):
                _c[0] += 1
                if observer is not None:
                    observer(name, full, fixed, mask)

            row = SeedResult(variant=variant, seed=seed)
            t0 = time.perf_counter()
            try:
                pipeline = build_benchmark(spec, variant, plant, seed)
                report = run_pipeline(pipeline, plant, observer=counting_observer)
                final = evaluate_final(report.final_params, plant, spec)
                row.final_cost = final.cost
                row.completion_time_s = final.completion_time_s
                row.completed = final.completed
                row.diverged = final.diverged
                row.total_evaluations = report.total_evaluations
                row.audited_evaluations = counter[0]
                row.sim_time_s = report.total_sim_time_s
                row.stage_names = tuple(s.name for s in report.stages)
                row.stage_evaluations = tuple(s.evaluations for s in report.stages)
                row.stage_best_costs = tuple(s.best_cost for s in report.stages)
                row.final_params = report.final_params
                row.report = report
                row.final_trail = final.trail
                if row.audited_evaluations != row.total_evaluations:
                    raise AssertionError(
                        f"evaluation audit mismatch: {row.audited_evaluations} episodes vs "
                        f"{row.total_evaluations} trace records"
                    )
            except Exception as exc:  # noqa: BLE001 - per-seed isolation is the contract
                row.error = f"{type(exc).__name__}: {exc}"
                warnings.warn(f"{variant} seed {seed} failed and is excluded: {row.error}")
            row.wall_s = time.perf_counter() - t0
            rows.append(row)

    stats = {}
    for variant in variants:
        agg = _aggregate(variant, [r for r in rows if r.variant == variant])
        if agg is not None:
            stats[variant] = agg

    deltas: dict[str, float] = {}
    if "individual" in stats and "simultaneous" in stats:
        ind, sim = stats["individual"], stats["simultaneous"]
        if sim.samples_mean:
            deltas["samples"] = (sim.samples_mean - ind.samples_mean) / sim.samples_mean
        if sim.sim_hours_mean:
            deltas["sim_time"] = (sim.sim_hours_mean - ind.sim_hours_mean) / sim.sim_hours_mean
        if sim.cost_mean:
            deltas["cost"] = (sim.cost_mean - ind.cost_mean) / sim.cost_mean
        if sim.completion_mean:
            deltas["completion_time"] = (sim.completion_mean - ind.completion_mean) / sim.completion_mean

    lo, hi = spec.lo, spec.hi
    manual = manual_baseline(lo, hi)
    manual_eval = evaluate_final(manual, plant, spec)
    return ComparisonReport(
        seed_results=rows,
        stats=stats,
        deltas=deltas,
        manual_cost=manual_eval.cost,
        manual_completion_s=manual_eval.completion_time_s,
        manual_completed=manual_eval.completed,
        manual_params=manual,
        seeds=spec.seeds,
    )


def report_to_json_dict(report: ComparisonReport) -> dict:
    """Deterministic JSON payload (measured wall-clock fields excluded)."""
    def stats_dict(s: VariantStats) -> dict:
        return {
            "runs": s.n,
            "tracking_cost": {"mean": s.cost_mean, "std": s.cost_std},
            "completion_time_s": {"mean": s.completion_mean, "std": s.completion_std},
            "tuning_time_hours": {"mean": s.sim_hours_mean, "std": s.sim_hours_std},
            "samples": {"mean": s.samples_mean, "std": s.samples_std},
        }

    return {
        "seeds": list(report.seeds),
        "per_seed": [
            {
                "variant": r.variant,
                "seed": r.seed,
                "error": r.error,
                "final_cost": r.final_cost,
                "completion_time_s": r.completion_time_s,
                "completed": r.completed,
                "diverged": r.diverged,
                "total_evaluations": r.total_evaluations,
                "audited_evaluations": r.audited_evaluations,
                "tuning_time_s": r.sim_time_s,
                "stage_names": list(r.stage_names),
                "stage_evaluations": list(r.stage_evaluations),
                "stage_best_costs": list(r.stage_best_costs),
                "final_params": None if r.final_params is None else [float(v) for v in r.final_params],
            }
            for r in report.seed_results
        ],
        "aggregates": {name: stats_dict(s) for name, s in report.stats.items()},
        "deltas_vs_simultaneous": report.deltas,
        "manual_baseline": {
            "params": [float(v) for v in report.manual_params],
            "tracking_cost": report.manual_cost,
            "completion_time_s": report.manual_completion_s,
            "completed": report.manual_completed,
        },
    }


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else repr(float(value))


def comparison_csv(report: ComparisonReport) -> str:
    """Mean (std) table over the variants plus the manual-baseline row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([
        "variant",
        "tracking_cost_mean", "tracking_cost_std",
        "completion_time_s_mean", "completion_time_s_std",
        "tuning_time_hours_mean", "tuning_time_hours_std",
        "samples_mean", "samples_std",
    ])
    for name in VARIANTS:
        if name not in report.stats:
            continue
        s = report.stats[name]
        writer.writerow([
            name,
            _fmt(s.cost_mean), _fmt(s.cost_std),
            _fmt(s.completion_mean), _fmt(s.completion_std),
            _fmt(s.sim_hours_mean), _fmt(s.sim_hours_std),
            _fmt(s.samples_mean), _fmt(s.samples_std),
        ])
    writer.writerow([
        "manual",
        _fmt(report.manual_cost), "n/a",
        _fmt(report.manual_completion_s), "n/a",
        "n/a", "n/a", "n/a", "n/a",
    ])
    return buf.getvalue()


def pipeline_trace_csv(report: TuneReport) -> str:
    """Full evaluated parameter vectors of every stage of one pipeline run."""
    buf = io.StringIO()
    header = ["stage", "iteration"] + [f"p{i}" for i in range(1, 19)] + ["raw_cost", "best_raw"]
    buf.write(",".join(header) + "\n")
    for stage_report in report.stages:
        trace = stage_report.trace
        for k in range(trace.evaluations):
            full = stage_report.resolved_fixed.copy()
            full[stage_report.free_indices] = trace.xi[k]
            row = [stage_report.name, str(k + 1)]
            row += [repr(float(v)) for v in full]
            row += [repr(float(trace.raw_cost[k])), repr(float(trace.best_raw[k]))]
            buf.write(",".join(row) + "\n")
    return buf.getvalue()


def write_comparison_outputs(report: ComparisonReport, out_dir) -> list[str]:
    """Emit comparison.json, comparison.csv and the per-seed trace/trail files."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "comparison.json"
    path.write_text(json.dumps(report_to_json_dict(report), indent=2) + "\n")
    written.append(str(path))

    path = out / "comparison.csv"
    path.write_text(comparison_csv(report))
    written.append(str(path))

    for row in report.seed_results:
        if row.error is not None:
            continue
        path = out / f"trace_{row.variant}_{row.seed}.csv"
        path.write_text(pipeline_trace_csv(row.report))
        written.append(str(path))
        path = out / f"trail_{row.variant}_{row.seed}.csv"
        path.write_text(trail_to_csv(row.final_trail))
        written.append(str(path))
    return written
