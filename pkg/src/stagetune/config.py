"""Run-configuration loading, strict validation and serialization.

One JSON document with ``plant``, ``controller``, optional ``pipeline``,
``benchmark`` and ``episode`` sections plus ``output_dir``.  Validation is
schema-strict: unknown keys are rejected with their path, every cross-field
constraint is checked at load time, and ``"auto"`` step thresholds are
resolved to concrete numbers so the serialized form records what actually
ran.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .control import LOOP_CHANNEL, LOOP_NAMES, N_PARAMS, param_slice
from .episode import StepReference, WaypointReference
from .harness import BenchmarkSpec, step_cost_threshold
from .multistage import StageSpec
from .plant import AuvPlant, IntegratorConfig

__all__ = ["ConfigError", "RunConfig", "EpisodeSection", "load_config",
           "config_from_dict", "config_to_dict", "load_params_file"]

_CHANNEL_BY_NAME = dict(LOOP_CHANNEL)
_NAME_BY_CHANNEL = {v: k for k, v in _CHANNEL_BY_NAME.items()}


class ConfigError(ValueError):
    """Configuration rejected; the message carries the offending path."""


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _expect_mapping(obj, path: str, allowed: set[str], required: set[str] = frozenset()):
    if not isinstance(obj, dict):
        _fail(path, "expected an object")
    unknown = set(obj) - allowed
    if unknown:
        _fail(path, f"unknown keys {sorted(unknown)}; allowed keys are {sorted(allowed)}")
    missing = required - set(obj)
    if missing:
        _fail(path, f"missing required keys {sorted(missing)}")
    return obj


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, "expected a number")
    if not math.isfinite(value):
        _fail(path, "expected a finite number")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, "expected an integer")
    return value


def _vector(value, length: int, path: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != length:
        _fail(path, f"expected a list of {length} numbers")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _channel(value, path: str) -> int:
    if isinstance(value, str):
        if value not in _CHANNEL_BY_NAME:
            _fail(path, f"unknown channel {value!r}; use one of {sorted(_CHANNEL_BY_NAME)}")
        return _CHANNEL_BY_NAME[value]
    idx = _integer(value, path)
    if not 0 <= idx < 6:
        _fail(path, "channel index must be in 0..5")
    return idx


_PLANT_KEYS = {
    "inertia", "linear_damping", "quadratic_damping", "weight_n", "buoyancy_n",
    "buoyancy_offset_m", "force_limit_n", "torque_limit_nm", "substeps",
}


def _parse_plant(obj, path: str) -> tuple[AuvPlant, IntegratorConfig]:
    _expect_mapping(obj, path, _PLANT_KEYS)
    kwargs = {}
    for key in ("inertia", "linear_damping", "quadratic_damping"):
        if key in obj:
            kwargs[key] = _vector(obj[key], 6, f"{path}.{key}")
    for key in ("weight_n", "buoyancy_n", "buoyancy_offset_m", "force_limit_n", "torque_limit_nm"):
        if key in obj:
            kwargs[key] = _number(obj[key], f"{path}.{key}")
    substeps = _integer(obj.get("substeps", 10), f"{path}.substeps")
    try:
        integrator = IntegratorConfig(substeps=substeps)
        plant = AuvPlant(**kwargs)
    except ValueError as exc:
        _fail(path, str(exc))
    return plant, integrator


def _parse_controller(obj, path: str) -> tuple[np.ndarray, np.ndarray]:
    _expect_mapping(obj, path, {"bounds_lo", "bounds_hi"}, {"bounds_lo", "bounds_hi"})
    lo = _vector(obj["bounds_lo"], N_PARAMS, f"{path}.bounds_lo")
    hi = _vector(obj["bounds_hi"], N_PARAMS, f"{path}.bounds_hi")
    if np.any(lo > hi):
        bad = np.where(lo > hi)[0]
        _fail(path, f"bounds_lo exceeds bounds_hi at coordinates {bad.tolist()}")
    return lo, hi


_TASK_KEYS_STEP = {"type", "channel", "amplitude", "step_time"}
_TASK_KEYS_WP = {"type", "waypoints", "radius"}


def _parse_task(obj, path: str):
    if not isinstance(obj, dict) or "type" not in obj:
        _fail(path, "expected a task object with a 'type' key")
    if obj["type"] == "step":
        _expect_mapping(obj, path, _TASK_KEYS_STEP, {"type", "channel", "amplitude"})
        return StepReference(
            baseline=np.zeros(6),
            amplitude=_number(obj["amplitude"], f"{path}.amplitude"),
            channel=_channel(obj["channel"], f"{path}.channel"),
            step_time=_number(obj.get("step_time", 0.0), f"{path}.step_time"),
        )
    if obj["type"] == "waypoint":
        _expect_mapping(obj, path, _TASK_KEYS_WP, {"type", "waypoints"})
        rows = obj["waypoints"]
        if not isinstance(rows, list) or not rows:
            _fail(f"{path}.waypoints", "expected a non-empty list of 6-entry rows")
        wp = np.vstack([_vector(r, 6, f"{path}.waypoints[{i}]") for i, r in enumerate(rows)])
        return WaypointReference(wp, radius=_number(obj.get("radius", 0.25), f"{path}.radius"))
    _fail(f"{path}.type", f"unknown task type {obj['type']!r}")


def _parse_objective(obj, path: str) -> metrics.ObjectiveSpec:
    _expect_mapping(obj, path, {"metric", "channels", "log_compress"}, {"metric", "channels"})
    if not isinstance(obj["channels"], list):
        _fail(f"{path}.channels", "expected a list")
    channels = tuple(_channel(c, f"{path}.channels[{i}]") for i, c in enumerate(obj["channels"]))
    log_compress = obj.get("log_compress", True)
    if not isinstance(log_compress, bool):
        _fail(f"{path}.log_compress", "expected a boolean")
    try:
        return metrics.ObjectiveSpec(obj["metric"], channels, log_compress)
    except ValueError as exc:
        _fail(path, str(exc))


_STAGE_KEYS = {
    "name", "free", "fixed", "task", "objective", "budget", "threshold", "warm_start",
    "sample_period_s", "max_samples", "n_init", "refit_every", "zeta_scale",
}


def _parse_stage(obj, path: str, lo: np.ndarray, hi: np.ndarray, plant: AuvPlant,
                 substeps: int) -> StageSpec:
    _expect_mapping(obj, path, _STAGE_KEYS, {"name", "free", "task", "objective", "budget"})
    name = obj["name"]
    if not isinstance(name, str) or not name:
        _fail(f"{path}.name", "expected a non-empty string")

    free = obj["free"]
    if free == "all":
        free_loops = list(LOOP_NAMES)
    elif isinstance(free, list) and free and all(isinstance(f, str) for f in free):
        free_loops = free
    else:
        _fail(f"{path}.free", "expected 'all' or a non-empty list of loop names")
    for loop in free_loops:
        if loop not in LOOP_NAMES:
            _fail(f"{path}.free", f"unknown loop {loop!r}; loops are {list(LOOP_NAMES)}")
    if len(set(free_loops)) != len(free_loops):
        _fail(f"{path}.free", "duplicate loop names")

    fix_mask = np.ones(N_PARAMS, dtype=bool)
    for loop in free_loops:
        fix_mask[param_slice(loop)] = False

    fixed_values = np.zeros(N_PARAMS)
    carry_mask = np.zeros(N_PARAMS, dtype=bool)
    fixed_obj = obj.get("fixed", {})
    _expect_mapping(fixed_obj, f"{path}.fixed", set(LOOP_NAMES))
    for loop, value in fixed_obj.items():
        sl = param_slice(loop)
        if loop in free_loops:
            _fail(f"{path}.fixed.{loop}", "loop is freed by this stage, cannot also be fixed")
        if value == "carry":
            carry_mask[sl] = True
        elif isinstance(value, list):
            fixed_values[sl] = _vector(value, 3, f"{path}.fixed.{loop}")
        else:
            fixed_values[sl] = _number(value, f"{path}.fixed.{loop}")

    reference = _parse_task(obj["task"], f"{path}.task")
    objective = _parse_objective(obj["objective"], f"{path}.objective")
    budget = _integer(obj["budget"], f"{path}.budget")
    period = _number(obj.get("sample_period_s", 0.1), f"{path}.sample_period_s")
    max_samples = _integer(obj.get("max_samples", 200), f"{path}.max_samples")

    threshold = obj.get("threshold")
    if threshold == "auto":
        if not isinstance(reference, StepReference):
            _fail(f"{path}.threshold", "'auto' thresholds apply to step tasks only")
        loop_name = _NAME_BY_CHANNEL[reference.channel]
        threshold = step_cost_threshold(plant, hi, loop_name, reference.amplitude)
    elif threshold is not None:
        threshold = _number(threshold, f"{path}.threshold")

    warm_start = obj.get("warm_start")
    if warm_start is not None:
        warm_start = _vector(warm_start, int((~fix_mask).sum()), f"{path}.warm_start")

    n_init = obj.get("n_init")
    if n_init is not None:
        n_init = _integer(n_init, f"{path}.n_init")
    kwargs = {}
    if "refit_every" in obj:
        kwargs["refit_every"] = _integer(obj["refit_every"], f"{path}.refit_every")
    if "zeta_scale" in obj:
        kwargs["zeta_scale"] = _number(obj["zeta_scale"], f"{path}.zeta_scale")

    try:
        return StageSpec(
            name=name,
            fix_mask=fix_mask,
            fixed_values=fixed_values,
            carry_mask=carry_mask,
            lo=lo,
            hi=hi,
            reference=reference,
            objective=objective,
            budget=budget,
            period=period,
            max_samples=max_samples,
            substeps=substeps,
            threshold=threshold,
            warm_start=warm_start,
            n_init=n_init,
            **kwargs,
        )
    except ValueError as exc:
        _fail(path, str(exc))


_BENCH_KEYS = {
    "seeds", "attitude_cap", "position_cap", "simultaneous_cap", "trajectory",
    "waypoint_radius_m", "sample_period_s", "step_max_samples", "trajectory_max_samples",
    "auto_step_thresholds", "trajectory_threshold", "simultaneous_refit_every",
    "initial_attitude_rad",
}


def _parse_benchmark(obj, path: str, lo: np.ndarray, hi: np.ndarray) -> BenchmarkSpec:
    _expect_mapping(obj, path, _BENCH_KEYS, {"seeds"})
    seeds = obj["seeds"]
    if not isinstance(seeds, list) or not seeds:
        _fail(f"{path}.seeds", "expected a non-empty list of integers")
    seeds = tuple(_integer(s, f"{path}.seeds[{i}]") for i, s in enumerate(seeds))

    kwargs: dict = {"seeds": seeds, "lo": lo, "hi": hi}
    for key, caster in (
        ("attitude_cap", _integer), ("position_cap", _integer), ("simultaneous_cap", _integer),
        ("step_max_samples", _integer), ("trajectory_max_samples", _integer),
        ("simultaneous_refit_every", _integer),
    ):
        if key in obj:
            kwargs[key] = caster(obj[key], f"{path}.{key}")
    if "waypoint_radius_m" in obj:
        kwargs["waypoint_radius"] = _number(obj["waypoint_radius_m"], f"{path}.waypoint_radius_m")
    if "sample_period_s" in obj:
        kwargs["period"] = _number(obj["sample_period_s"], f"{path}.sample_period_s")
    if "trajectory" in obj:
        rows = obj["trajectory"]
        if not isinstance(rows, list) or not rows:
            _fail(f"{path}.trajectory", "expected a non-empty list of 6-entry rows")
        kwargs["trajectory"] = np.vstack(
            [_vector(r, 6, f"{path}.trajectory[{i}]") for i, r in enumerate(rows)]
        )
    if "auto_step_thresholds" in obj:
        if not isinstance(obj["auto_step_thresholds"], bool):
            _fail(f"{path}.auto_step_thresholds", "expected a boolean")
        kwargs["auto_step_thresholds"] = obj["auto_step_thresholds"]
    if "initial_attitude_rad" in obj:
        att = _vector(obj["initial_attitude_rad"], 3, f"{path}.initial_attitude_rad")
        kwargs["initial_attitude"] = tuple(att)
    if "trajectory_threshold" in obj and obj["trajectory_threshold"] is not None:
        kwargs["trajectory_threshold"] = _number(obj["trajectory_threshold"],
                                                 f"{path}.trajectory_threshold")
    try:
        return BenchmarkSpec(**kwargs)
    except ValueError as exc:
        _fail(path, str(exc))


@dataclass
class EpisodeSection:
    """Single-episode inspection task for the ``episode`` subcommand."""

    reference: StepReference | WaypointReference
    period: float = 0.1
    max_samples: int = 200


def _parse_episode(obj, path: str) -> EpisodeSection:
    _expect_mapping(obj, path, {"task", "sample_period_s", "max_samples"}, {"task"})
    return EpisodeSection(
        reference=_parse_task(obj["task"], f"{path}.task"),
        period=_number(obj.get("sample_period_s", 0.1), f"{path}.sample_period_s"),
        max_samples=_integer(obj.get("max_samples", 200), f"{path}.max_samples"),
    )


@dataclass
class RunConfig:
    plant: AuvPlant
    integrator: IntegratorConfig
    bounds_lo: np.ndarray
    bounds_hi: np.ndarray
    pipeline_seed: int = 0
    stages: list[StageSpec] = field(default_factory=list)
    benchmark: BenchmarkSpec | None = None
    episode: EpisodeSection | None = None
    output_dir: str = "out"


_TOP_KEYS = {"plant", "controller", "pipeline", "benchmark", "episode", "output_dir"}


def config_from_dict(doc: dict) -> RunConfig:
    _expect_mapping(doc, "config", _TOP_KEYS, {"plant", "controller"})
    plant, integrator = _parse_plant(doc["plant"], "plant")
    lo, hi = _parse_controller(doc["controller"], "controller")

    pipeline_seed = 0
    stages: list[StageSpec] = []
    if "pipeline" in doc:
        pobj = _expect_mapping(doc["pipeline"], "pipeline", {"seed", "stages"}, {"stages"})
        pipeline_seed = _integer(pobj.get("seed", 0), "pipeline.seed")
        if not isinstance(pobj["stages"], list) or not pobj["stages"]:
            _fail("pipeline.stages", "expected a non-empty list")
        stages = [
            _parse_stage(s, f"pipeline.stages[{i}]", lo, hi, plant, integrator.substeps)
            for i, s in enumerate(pobj["stages"])
        ]

    benchmark = None
    if "benchmark" in doc:
        benchmark = _parse_benchmark(doc["benchmark"], "benchmark", lo, hi)

    episode = None
    if "episode" in doc:
        episode = _parse_episode(doc["episode"], "episode")

    output_dir = doc.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        _fail("output_dir", "expected a non-empty string")

    return RunConfig(
        plant=plant,
        integrator=integrator,
        bounds_lo=lo,
        bounds_hi=hi,
        pipeline_seed=pipeline_seed,
        stages=stages,
        benchmark=benchmark,
        episode=episode,
        output_dir=output_dir,
    )


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    return config_from_dict(doc)


def _task_to_dict(ref) -> dict:
    if isinstance(ref, StepReference):
        return {
            "type": "step",
            "channel": _NAME_BY_CHANNEL[ref.channel],
            "amplitude": float(ref.amplitude),
            "step_time": float(ref.step_time),
        }
    return {
        "type": "waypoint",
        "waypoints": [[float(v) for v in row] for row in ref.waypoints],
        "radius": float(ref.radius),
    }


def _stage_to_dict(stage: StageSpec) -> dict:
    free_loops = [loop for loop in LOOP_NAMES if not stage.fix_mask[param_slice(loop)].all()]
    fixed: dict = {}
    for loop in LOOP_NAMES:
        sl = param_slice(loop)
        if loop in free_loops:
            continue
        if stage.carry_mask[sl].all():
            fixed[loop] = "carry"
        else:
            vals = stage.fixed_values[sl]
            fixed[loop] = float(vals[0]) if np.all(vals == vals[0]) else [float(v) for v in vals]
    out = {
        "name": stage.name,
        "free": free_loops,
        "fixed": fixed,
        "task": _task_to_dict(stage.reference),
        "objective": {
            "metric": stage.objective.metric,
            "channels": [_NAME_BY_CHANNEL[c] for c in stage.objective.channels],
            "log_compress": stage.objective.log_compress,
        },
        "budget": stage.budget,
        "sample_period_s": float(stage.period),
        "max_samples": stage.max_samples,
        "threshold": None if stage.threshold is None else float(stage.threshold),
        "refit_every": stage.refit_every,
        "zeta_scale": float(stage.zeta_scale),
    }
    if stage.warm_start is not None:
        out["warm_start"] = [float(v) for v in stage.warm_start]
    if stage.n_init is not None:
        out["n_init"] = stage.n_init
    return out


def config_to_dict(cfg: RunConfig) -> dict:
    doc: dict = {
        "plant": {
            "inertia": [float(v) for v in cfg.plant.inertia],
            "linear_damping": [float(v) for v in cfg.plant.linear_damping],
            "quadratic_damping": [float(v) for v in cfg.plant.quadratic_damping],
            "weight_n": float(cfg.plant.weight_n),
            "buoyancy_n": float(cfg.plant.buoyancy_n),
            "buoyancy_offset_m": float(cfg.plant.buoyancy_offset_m),
            "force_limit_n": float(cfg.plant.force_limit_n),
            "torque_limit_nm": float(cfg.plant.torque_limit_nm),
            "substeps": cfg.integrator.substeps,
        },
        "controller": {
            "bounds_lo": [float(v) for v in cfg.bounds_lo],
            "bounds_hi": [float(v) for v in cfg.bounds_hi],
        },
    }
    if cfg.stages:
        doc["pipeline"] = {
            "seed": cfg.pipeline_seed,
            "stages": [_stage_to_dict(s) for s in cfg.stages],
        }
    if cfg.benchmark is not None:
        b = cfg.benchmark
        doc["benchmark"] = {
            "seeds": list(b.seeds),
            "attitude_cap": b.attitude_cap,
            "position_cap": b.position_cap,
            "simultaneous_cap": b.simultaneous_cap,
            "trajectory": [[float(v) for v in row] for row in b.trajectory],
            "waypoint_radius_m": float(b.waypoint_radius),
            "sample_period_s": float(b.period),
            "step_max_samples": b.step_max_samples,
            "trajectory_max_samples": b.trajectory_max_samples,
            "auto_step_thresholds": b.auto_step_thresholds,
            "trajectory_threshold": b.trajectory_threshold,
            "simultaneous_refit_every": b.simultaneous_refit_every,
            "initial_attitude_rad": [float(v) for v in b.initial_attitude],
        }
    if cfg.episode is not None:
        doc["episode"] = {
            "task": _task_to_dict(cfg.episode.reference),
            "sample_period_s": float(cfg.episode.period),
            "max_samples": cfg.episode.max_samples,
        }
    doc["output_dir"] = cfg.output_dir
    return doc


def load_params_file(path) -> np.ndarray:
    """18-entry parameter vector from a JSON file ([..] or {"params": [..]})."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if isinstance(doc, dict):
        if set(doc) != {"params"}:
            raise ConfigError(f"{path}: expected a bare list or an object with only a 'params' key")
        doc = doc["params"]
    if not isinstance(doc, list) or len(doc) != N_PARAMS:
        raise ConfigError(f"{path}: expected {N_PARAMS} numbers, got {len(doc) if isinstance(doc, list) else type(doc).__name__}")
    try:
        return _vector(doc, N_PARAMS, "params")
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}")
