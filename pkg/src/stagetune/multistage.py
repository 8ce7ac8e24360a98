"""Staged decomposition of the tuning task.

A pipeline is an ordered list of stages.  Each stage freezes a masked
subset of the 18 control parameters (to literal values or to values carried
over from earlier stages) and runs a BO subtask over the remaining free
coordinates only, so the fixed-parameter constraint holds exactly by
construction: the frozen coordinates are copied verbatim into every
evaluated vector and never perturbed.  Stage optima accumulate in a carry
vector; the final tuned vector is the union of the stage fragments.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import control, metrics, seeding
from .bo import BoConfig, BoTrace, run_bo
from .episode import EpisodeSpec, StepReference, WaypointReference, run_episode
from .gp import GpFitBounds
from .plant import SystemModel

__all__ = [
    "StageSpec",
    "PipelineSpec",
    "StageReport",
    "TuneReport",
    "SentinelTracker",
    "SENTINEL_FLOOR",
    "SENTINEL_CAP",
    "reduce_params",
    "embed_params",
    "resolve_fixed",
    "stage_objective",
    "solve_stage",
    "run_pipeline",
    "budget_accounting",
]

# Diverged episodes score a finite worst-case sentinel: ten times the
# largest finite cost seen so far in the run, floored above any attainable
# benchmark cost and capped safely below double-precision overflow.
SENTINEL_FLOOR = 1e60
SENTINEL_CAP = 1e300


class SentinelTracker:
    """Tracks the largest finite cost of a run and prices diverged episodes."""

    def __init__(self):
        self.largest_finite = 0.0

    def observe(self, cost: float):
        if np.isfinite(cost) and cost > self.largest_finite:
            self.largest_finite = cost

    def value(self) -> float:
        return float(min(max(10.0 * self.largest_finite, SENTINEL_FLOOR), SENTINEL_CAP))


@dataclass(frozen=True)
class StageSpec:
    """One tuning subtask: fix mask, fixed values, restricted box, task, budget.

    ``fix_mask`` marks frozen coordinates; where ``carry_mask`` is also set
    the frozen value is resolved from the carry vector at run time instead
    of ``fixed_values``.  ``lo``/``hi`` give the restricted search box (only
    the free coordinates are read).  ``warm_start`` is an optional free
    fragment injected into the initial design.
    """

    name: str
    fix_mask: np.ndarray
    fixed_values: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    reference: StepReference | WaypointReference
    objective: metrics.ObjectiveSpec
    budget: int
    carry_mask: np.ndarray | None = None
    period: float = 0.1
    max_samples: int = 200
    x0: np.ndarray = field(default_factory=lambda: np.zeros(12))
    substeps: int = 10
    threshold: float | None = None
    warm_start: np.ndarray | None = None
    n_init: int | None = None
    zeta_scale: float = 0.01
    refit_every: int = 5
    candidates_per_dim: int = 2000

    def __post_init__(self):
        n = control.N_PARAMS
        mask = np.asarray(self.fix_mask, dtype=bool)
        if mask.shape != (n,):
            raise ValueError("fix_mask must have 18 entries")
        object.__setattr__(self, "fix_mask", mask)
        if int((~mask).sum()) < 1:
            raise ValueError("a stage must leave at least one free coordinate")
        carry = self.carry_mask
        carry = np.zeros(n, dtype=bool) if carry is None else np.asarray(carry, dtype=bool)
        if carry.shape != (n,):
            raise ValueError("carry_mask must have 18 entries")
        if np.any(carry & ~mask):
            raise ValueError("carry_mask must be a subset of fix_mask")
        object.__setattr__(self, "carry_mask", carry)
        for attr in ("fixed_values", "lo", "hi"):
            arr = np.asarray(getattr(self, attr), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{attr} must have 18 entries")
            object.__setattr__(self, attr, arr)
        free = ~mask
        if np.any(self.lo[free] > self.hi[free]):
            raise ValueError("restricted box is empty on a free coordinate")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.warm_start is not None:
            w = np.asarray(self.warm_start, dtype=float)
            if w.shape != (self.n_free,):
                raise ValueError("warm_start must match the free-coordinate count")
            object.__setattr__(self, "warm_start", w)

    @property
    def free_indices(self) -> np.ndarray:
        return np.where(~self.fix_mask)[0]

    @property
    def n_free(self) -> int:
        return int((~self.fix_mask).sum())


def reduce_params(xi_full: np.ndarray, stage: StageSpec) -> np.ndarray:
    """Extract the stage's free coordinates in canonical index order."""
    return np.asarray(xi_full, dtype=float)[stage.free_indices].copy()


def embed_params(fragment: np.ndarray, stage: StageSpec, fixed_resolved: np.ndarray) -> np.ndarray:
    """Inverse of :func:`reduce_params`: free coordinates from the fragment,
    frozen coordinates copied verbatim from ``fixed_resolved``."""
    fragment = np.asarray(fragment, dtype=float)
    if fragment.shape != (stage.n_free,):
        raise ValueError("fragment length must match the free-coordinate count")
    full = np.asarray(fixed_resolved, dtype=float).copy()
    full[stage.free_indices] = fragment
    return full


def resolve_fixed(stage: StageSpec, carry: np.ndarray) -> np.ndarray:
    """Fixed-value vector with carry-marked entries taken from ``carry``."""
    values = stage.fixed_values.copy()
    values[stage.carry_mask] = np.asarray(carry, dtype=float)[stage.carry_mask]
    return values


@dataclass(frozen=True)
class PipelineSpec:
    """Ordered stages plus the global box and the run seed."""

    stages: tuple[StageSpec, ...]
    lo: np.ndarray
    hi: np.ndarray
    seed: int = 0
    initial_carry: np.ndarray = field(default_factory=lambda: np.zeros(control.N_PARAMS))

    def __post_init__(self):
        stages = tuple(self.stages)
        if not 1 <= len(stages) <= 6:
            raise ValueError("pipelines hold between 1 and 6 stages")
        names = [s.name for s in stages]
        if len(set(names)) != len(names):
            raise ValueError("stage names must be unique")
        freed: dict[int, list[str]] = {}
        for s in stages:
            for idx in s.free_indices:
                freed.setdefault(int(idx), []).append(s.name)
        dupes = {i: ns for i, ns in freed.items() if len(ns) > 1}
        if dupes:
            detail = "; ".join(f"coordinate {i} freed by {ns}" for i, ns in sorted(dupes.items()))
            raise ValueError(f"parameters freed in more than one stage: {detail}")
        object.__setattr__(self, "stages", stages)
        for attr in ("lo", "hi", "initial_carry"):
            arr = np.asarray(getattr(self, attr), dtype=float)
            if arr.shape != (control.N_PARAMS,):
                raise ValueError(f"{attr} must have 18 entries")
            object.__setattr__(self, attr, arr)


@dataclass
class StageReport:
    name: str
    dim: int
    evaluations: int
    best_cost: float
    best_fragment: np.ndarray
    sim_time_s: float
    threshold: float | None
    threshold_hit: bool
    trace: BoTrace
    wall_s: float
    # Frozen-coordinate values in effect during the stage, and the indices
    # the trace fragments occupy; together they reconstruct every evaluated
    # full parameter vector.
    resolved_fixed: np.ndarray = field(default_factory=lambda: np.zeros(control.N_PARAMS))
    free_indices: np.ndarray = field(default_factory=lambda: np.arange(control.N_PARAMS))


@dataclass
class TuneReport:
    """Pipeline outcome: per-stage results and the assembled parameter vector.

    ``sim_time_s`` is total simulated episode time, the deterministic time
    measure used in serialized reports; measured wall seconds live only in
    ``wall_s`` and are never written to the deterministic output files.
    """

    stages: list[StageReport]
    final_params: np.ndarray
    seed: int
    total_evaluations: int
    total_sim_time_s: float
    wall_s: float


def stage_objective(
    stage: StageSpec,
    plant: SystemModel,
    carry: np.ndarray,
    sentinel: SentinelTracker | None = None,
    observer=None,
    sim_time_acc: list | None = None,
):
    """Build the stage's black-box objective over the reduced coordinates.

    Every evaluation embeds the free fragment into the full vector (frozen
    coordinates verbatim from the resolved fixed values), runs the stage's
    episode and scores the trail; diverged episodes return the sentinel.
    """
    sentinel = sentinel if sentinel is not None else SentinelTracker()
    fixed_resolved = resolve_fixed(stage, carry)

    def objective(fragment: np.ndarray) -> float:
        full = embed_params(fragment, stage, fixed_resolved)
        if observer is not None:
            observer(stage.name, full, fixed_resolved, stage.fix_mask)
        spec = EpisodeSpec(
            period=stage.period,
            max_samples=stage.max_samples,
            x0=stage.x0,
            reference=stage.reference,
            params=full,
            substeps=stage.substeps,
        )
        trail = run_episode(spec, plant)
        if sim_time_acc is not None:
            sim_time_acc[0] += trail.duration
        if trail.diverged:
            return sentinel.value()
        cost = stage.objective.evaluate(trail)
        sentinel.observe(cost)
        return cost

    return objective


def _stage_bo_config(stage: StageSpec, pipeline_seed: int) -> BoConfig:
    free = stage.free_indices
    return BoConfig(
        dim=stage.n_free,
        lo=stage.lo[free],
        hi=stage.hi[free],
        max_evaluations=stage.budget,
        n_init=stage.n_init,
        threshold=stage.threshold,
        zeta_scale=stage.zeta_scale,
        candidates_per_dim=stage.candidates_per_dim,
        refit_every=stage.refit_every,
        seed=seeding.derive_seed(pipeline_seed, "stage", stage.name),
        warm_start=stage.warm_start,
        fit_bounds=GpFitBounds(),
    )


def solve_stage(
    stage: StageSpec,
    plant: SystemModel,
    carry: np.ndarray,
    pipeline_seed: int = 0,
    observer=None,
) -> StageReport:
    """Run one BO subtask over the stage's free coordinates."""
    sim_time = [0.0]
    objective = stage_objective(stage, plant, carry, observer=observer, sim_time_acc=sim_time)
    compress = metrics.compress if stage.objective.log_compress else (lambda c: float(c))
    fragment, trace = run_bo(objective, _stage_bo_config(stage, pipeline_seed), compress=compress)
    best_cost = float(np.min(trace.raw_cost))
    return StageReport(
        name=stage.name,
        dim=stage.n_free,
        evaluations=trace.evaluations,
        best_cost=best_cost,
        best_fragment=fragment,
        sim_time_s=sim_time[0],
        threshold=stage.threshold,
        threshold_hit=stage.threshold is not None and best_cost <= stage.threshold,
        trace=trace,
        wall_s=trace.wall_s,
        resolved_fixed=resolve_fixed(stage, carry),
        free_indices=stage.free_indices.copy(),
    )


def run_pipeline(pipeline: PipelineSpec, plant: SystemModel, observer=None) -> TuneReport:
    """Execute the stages sequentially, carrying each optimum forward."""
    t0 = time.perf_counter()
    carry = pipeline.initial_carry.copy()
    reports: list[StageReport] = []
    for stage in pipeline.stages:
        report = solve_stage(stage, plant, carry, pipeline_seed=pipeline.seed, observer=observer)
        carry[stage.free_indices] = report.best_fragment
        reports.append(report)
    return TuneReport(
        stages=reports,
        final_params=carry,
        seed=pipeline.seed,
        total_evaluations=sum(r.evaluations for r in reports),
        total_sim_time_s=sum(r.sim_time_s for r in reports),
        wall_s=time.perf_counter() - t0,
    )


@dataclass(frozen=True)
class BudgetAccounting:
    """Search-space and evaluation-budget bookkeeping for a pipeline."""

    dimensions: tuple[int, ...]
    total_dimension: int
    evaluation_budgets: tuple[int, ...]
    total_evaluation_budget: int
    staged_complexity: int
    monolithic_complexity: int
    exhaustive: bool


def budget_accounting(pipeline: PipelineSpec) -> BudgetAccounting:
    """Per-stage dimensions and the staged-vs-monolithic complexity figures.

    ``staged_complexity`` is the sum of 2^(stage dim); ``monolithic_complexity``
    is 2^(total freed dimension).  A pipeline that frees every parameter
    exactly once is exhaustive and its dimensions sum to 18.
    """
    dims = tuple(s.n_free for s in pipeline.stages)
    total_dim = int(sum(dims))
    freed = sorted(int(i) for s in pipeline.stages for i in s.free_indices)
    exhaustive = freed == list(range(control.N_PARAMS))
    if exhaustive and total_dim != control.N_PARAMS:
        raise AssertionError("exhaustive pipeline dimensions must sum to 18")
    return BudgetAccounting(
        dimensions=dims,
        total_dimension=total_dim,
        evaluation_budgets=tuple(s.budget for s in pipeline.stages),
        total_evaluation_budget=int(sum(s.budget for s in pipeline.stages)),
        staged_complexity=int(sum(2 ** d for d in dims)),
        monolithic_complexity=int(2 ** total_dim),
        exhaustive=exhaustive,
    )
