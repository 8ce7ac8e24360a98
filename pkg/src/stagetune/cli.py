"""Command-line entry point.

Subcommands: ``tune`` (run the configured pipeline), ``episode`` (run one
episode with a given parameter vector), ``compare`` (run the benchmark
protocol) and ``validate`` (config check only).  Exit codes: 0 success,
2 configuration or validation error, 3 runtime failure.  All output files
are deterministic given the configuration and seeds; measured wall-clock
times appear on standard output only.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, metrics
from .config import ConfigError, RunConfig, load_config, load_params_file
from .control import ParamVector
from .episode import EpisodeSpec, run_episode, trail_to_csv
from .harness import (
    comparison_csv,
    compare,
    pipeline_trace_csv,
    write_comparison_outputs,
)
from .multistage import PipelineSpec, TuneReport, run_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stagetune",
        description="Staged Bayesian-optimization tuning of six PID loops on a simulated underwater vehicle.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, variant=False):
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed(s)")
        p.add_argument("--out-dir", default=None, help="override the configured output directory")
        p.add_argument("--max-iters", type=int, default=None,
                       help="cap every iteration budget at this value")
        if variant:
            p.add_argument("--variant", choices=list(harness.VARIANTS), default=None,
                           help="run only this tuning variant")

    p_tune = sub.add_parser("tune", help="run the configured multistage pipeline")
    common(p_tune)

    p_episode = sub.add_parser("episode", help="run a single episode with given parameters")
    common(p_episode)
    p_episode.add_argument("--params", required=True, help="JSON file with the 18 gains")

    p_compare = sub.add_parser("compare", help="run the staged-vs-simultaneous benchmark")
    common(p_compare, variant=True)

    p_validate = sub.add_parser("validate", help="validate the configuration and exit")
    p_validate.add_argument("--config", required=True)

    return parser


def _apply_max_iters(cfg: RunConfig, max_iters: int | None):
    if max_iters is None:
        return cfg
    if max_iters < 2:
        raise ConfigError("--max-iters must be at least 2")
    cfg.stages = [
        _replace_budget(stage, min(stage.budget, max_iters)) for stage in cfg.stages
    ]
    if cfg.benchmark is not None:
        from dataclasses import replace

        cfg.benchmark = replace(
            cfg.benchmark,
            attitude_cap=min(cfg.benchmark.attitude_cap, max_iters),
            position_cap=min(cfg.benchmark.position_cap, max_iters),
            simultaneous_cap=min(cfg.benchmark.simultaneous_cap, max_iters),
        )
    return cfg


def _replace_budget(stage, budget):
    from dataclasses import replace

    n_init = stage.n_init if stage.n_init is not None else max(4, 2 * stage.n_free)
    if budget < n_init:
        raise ConfigError(
            f"stage {stage.name!r}: budget {budget} is below the initial design size {n_init}"
        )
    return replace(stage, budget=budget)


def _out_dir(cfg: RunConfig, args) -> Path:
    out = Path(args.out_dir if args.out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tune_report_json(report: TuneReport) -> dict:
    return {
        "seed": report.seed,
        "total_evaluations": report.total_evaluations,
        "tuning_time_s": report.total_sim_time_s,
        "stages": [
            {
                "name": s.name,
                "dim": s.dim,
                "evaluations": s.evaluations,
                "best_cost": s.best_cost,
                "threshold": s.threshold,
                "threshold_hit": s.threshold_hit,
                "tuning_time_s": s.sim_time_s,
                "best_fragment": [float(v) for v in s.best_fragment],
            }
            for s in report.stages
        ],
        "final_params": [float(v) for v in report.final_params],
    }


def cmd_tune(args) -> int:
    cfg = load_config(args.config)
    if not cfg.stages:
        raise ConfigError("the 'tune' command needs a pipeline section")
    _apply_max_iters(cfg, args.max_iters)
    seed = args.seed if args.seed is not None else cfg.pipeline_seed
    try:
        pipeline = PipelineSpec(
            stages=tuple(cfg.stages), lo=cfg.bounds_lo, hi=cfg.bounds_hi, seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    out = _out_dir(cfg, args)

    report = run_pipeline(pipeline, cfg.plant)

    (out / "report.json").write_text(json.dumps(_tune_report_json(report), indent=2) + "\n")
    lines = ["stage,dim,evaluations,best_cost,tuning_time_s"]
    for s in report.stages:
        lines.append(f"{s.name},{s.dim},{s.evaluations},{s.best_cost!r},{s.sim_time_s!r}")
    (out / "report.csv").write_text("\n".join(lines) + "\n")
    for s in report.stages:
        single = TuneReport(stages=[s], final_params=report.final_params, seed=report.seed,
                            total_evaluations=s.evaluations, total_sim_time_s=s.sim_time_s,
                            wall_s=s.wall_s)
        (out / f"trace_{s.name}.csv").write_text(pipeline_trace_csv(single))

    print(f"tuned {len(report.stages)} stage(s), {report.total_evaluations} evaluations, "
          f"simulated {report.total_sim_time_s:.1f} s, wall {report.wall_s:.1f} s")
    for s in report.stages:
        hit = " (threshold hit)" if s.threshold_hit else ""
        print(f"  stage {s.name}: dim {s.dim}, {s.evaluations} evals, best cost {s.best_cost:.6g}{hit}")
    print(f"outputs written to {out}")
    return EXIT_OK


def cmd_episode(args) -> int:
    cfg = load_config(args.config)
    params = load_params_file(args.params)
    try:
        ParamVector(params, cfg.bounds_lo, cfg.bounds_hi).validate()
    except ValueError as exc:
        raise ConfigError(str(exc))

    if cfg.episode is not None:
        reference = cfg.episode.reference
        period = cfg.episode.period
        max_samples = cfg.episode.max_samples
    elif cfg.benchmark is not None:
        reference = harness.build_benchmark(cfg.benchmark, "simultaneous", cfg.plant,
                                            cfg.benchmark.seeds[0]).stages[0].reference
        period = cfg.benchmark.period
        max_samples = cfg.benchmark.trajectory_max_samples
    else:
        raise ConfigError("the 'episode' command needs an episode or benchmark section")

    spec = EpisodeSpec(
        period=period, max_samples=max_samples, x0=np.zeros(12),
        reference=reference, params=params, substeps=cfg.integrator.substeps,
    )
    out = _out_dir(cfg, args)
    trail = run_episode(spec, cfg.plant)
    (out / "trail.csv").write_text(trail_to_csv(trail))

    if trail.diverged:
        print("episode diverged; partial trail written")
        return EXIT_RUNTIME
    for channel, name in enumerate(("x", "y", "z", "roll", "pitch", "yaw")):
        print(f"IAE[{name}] = {metrics.iae(trail, channel)!r}")
    print(f"eTxIAE = {metrics.etx_iae(trail, (0, 1, 2, 3, 4, 5))!r}")
    print(f"completed = {trail.completed}, completion_time_s = {trail.completion_time!r}")
    print(f"trail written to {out / 'trail.csv'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    if cfg.benchmark is None:
        raise ConfigError("the 'compare' command needs a benchmark section")
    _apply_max_iters(cfg, args.max_iters)
    if args.seed is not None:
        from dataclasses import replace

        cfg.benchmark = replace(cfg.benchmark, seeds=(args.seed,))
    variants = (args.variant,) if args.variant else harness.VARIANTS
    out = _out_dir(cfg, args)

    report = compare(cfg.benchmark, cfg.plant, variants=variants)
    write_comparison_outputs(report, out)

    print(comparison_csv(report), end="")
    for row in report.seed_results:
        status = row.error if row.error else f"wall {row.wall_s:.1f} s"
        print(f"# {row.variant} seed {row.seed}: {status}")
    if report.deltas:
        parts = ", ".join(f"{k} {100 * v:+.1f}%" for k, v in report.deltas.items())
        print(f"# individual vs simultaneous deltas: {parts}")
    print(f"# outputs written to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    load_config(args.config)
    print("configuration ok")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "tune": cmd_tune,
        "episode": cmd_episode,
        "compare": cmd_compare,
        "validate": cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
