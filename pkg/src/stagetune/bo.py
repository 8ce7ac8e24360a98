"""Bayesian-optimization loop for one box-constrained minimization subtask.

The loop works on inputs normalized to [0, 1]^d: seeded Latin-hypercube
initial design, GP surrogate on log-compressed costs, expected-improvement
acquisition with an additive exploration offset recomputed each iteration,
and a seeded multistart candidate search with coordinate-wise
golden-section polish.  Stops at the evaluation budget or when the raw
cost reaches the configured threshold (threshold checked once the initial
design is complete).
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import gp, metrics, seeding
from .gp import GpFitBounds, GpModel, _golden_max

__all__ = ["BoConfig", "BoTrace", "initial_design", "expected_improvement",
           "maximize_acquisition", "run_bo", "trace_to_csv"]


@dataclass(frozen=True)
class BoConfig:
    """Settings for one BO run.

    ``n_init`` defaults to max(4, 2 d).  ``zeta_scale`` sets the additive
    exploration offset as a fraction of the observed compressed-cost range
    (the stand-in for the over-exploitation escape of expected-improvement
    variants).  ``threshold`` stops the run once the best raw cost reaches
    it.  Hyperparameters are refit on the first ``initial_refits``
    acquisition steps and then every ``refit_every`` steps.
    """

    dim: int
    lo: np.ndarray
    hi: np.ndarray
    max_evaluations: int
    n_init: int | None = None
    threshold: float | None = None
    acquisition: str = "ei"
    zeta_scale: float = 0.01
    candidates_per_dim: int = 2000
    polish_count: int = 5
    seed: int = 0
    warm_start: np.ndarray | None = None
    refit_every: int = 5
    initial_refits: int = 3
    fit_bounds: GpFitBounds = field(default_factory=GpFitBounds)

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if self.dim < 1 or lo.shape != (self.dim,) or hi.shape != (self.dim,):
            raise ValueError("bounds must match the search dimension")
        if np.any(lo > hi):
            raise ValueError("lower bounds exceed upper bounds")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.acquisition != "ei":
            raise ValueError("only expected improvement is supported")
        if not (math.isfinite(self.zeta_scale) and self.zeta_scale >= 0):
            raise ValueError("zeta_scale must be finite and >= 0")
        n_init = self.n_init if self.n_init is not None else max(4, 2 * self.dim)
        if n_init < 2:
            raise ValueError("n_init must be >= 2")
        if self.max_evaluations < n_init:
            raise ValueError("max_evaluations must cover the initial design")
        object.__setattr__(self, "n_init", int(n_init))
        if self.warm_start is not None:
            w = np.asarray(self.warm_start, dtype=float)
            if w.shape != (self.dim,):
                raise ValueError("warm start must match the search dimension")
            if np.any(w < lo) or np.any(w > hi):
                raise ValueError("warm start outside the search box")
            object.__setattr__(self, "warm_start", w)

    def normalize(self, xi: np.ndarray) -> np.ndarray:
        width = self.hi - self.lo
        z = np.zeros(self.dim)
        nz = width > 0
        z[nz] = (np.asarray(xi, dtype=float)[nz] - self.lo[nz]) / width[nz]
        return np.clip(z, 0.0, 1.0)

    def unnormalize(self, z: np.ndarray) -> np.ndarray:
        xi = self.lo + np.asarray(z, dtype=float) * (self.hi - self.lo)
        return np.clip(xi, self.lo, self.hi)


@dataclass
class BoTrace:
    """Per-evaluation history of one BO run.

    ``acq_value`` is NaN for initial-design points.  ``wall_s`` is measured
    wall-clock time and is deliberately excluded from the CSV export so the
    serialized outputs stay deterministic.
    """

    xi: np.ndarray
    raw_cost: np.ndarray
    compressed_cost: np.ndarray
    acq_value: np.ndarray
    best_raw: np.ndarray
    wall_s: float = 0.0

    @property
    def evaluations(self) -> int:
        return self.xi.shape[0]


def trace_to_csv(trace: BoTrace) -> str:
    d = trace.xi.shape[1]
    buf = io.StringIO()
    header = ["iteration"] + [f"xi{i}" for i in range(1, d + 1)] + ["raw_cost", "best_raw"]
    buf.write(",".join(header) + "\n")
    for k in range(trace.evaluations):
        row = [str(k + 1)]
        row += [repr(float(v)) for v in trace.xi[k]]
        row += [repr(float(trace.raw_cost[k])), repr(float(trace.best_raw[k]))]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def initial_design(config: BoConfig) -> np.ndarray:
    """Seeded Latin hypercube over [0, 1]^d (one point per stratum per dim).

    A configured warm start replaces the last design point verbatim (in
    normalized coordinates).
    """
    rng = seeding.stream(config.seed, "design")
    n = config.n_init
    points = np.empty((n, config.dim))
    for j in range(config.dim):
        points[:, j] = (rng.permutation(n) + rng.uniform(size=n)) / n
    if config.warm_start is not None:
        points[-1] = config.normalize(config.warm_start)
    return points


def _ei_values(means: np.ndarray, variances: np.ndarray, best: float, zeta: float) -> np.ndarray:
    delta = best - means - zeta
    sigma = np.sqrt(variances)
    out = np.maximum(delta, 0.0)
    pos = sigma > 0
    if np.any(pos):
        z = delta[pos] / sigma[pos]
        pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        out[pos] = delta[pos] * ndtr(z) + sigma[pos] * pdf
    return out


def expected_improvement(model: GpModel, xi: np.ndarray, best: float, zeta: float = 0.0) -> float:
    """Closed-form EI (minimization) with exploration offset ``zeta``."""
    mean, variance = gp.posterior(model, xi)
    return float(_ei_values(np.array([mean]), np.array([variance]), best, zeta)[0])


def _ei_batch(model: GpModel, points: np.ndarray, best: float, zeta: float,
              chunk: int = 4096) -> np.ndarray:
    values = np.empty(points.shape[0])
    for start in range(0, points.shape[0], chunk):
        block = points[start:start + chunk]
        means, variances = gp.posterior_batch(model, block)
        values[start:start + chunk] = _ei_values(means, variances, best, zeta)
    return values


def maximize_acquisition(
    model: GpModel,
    config: BoConfig,
    best: float,
    zeta: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Best of 2000 d seeded uniform candidates, polished coordinate-wise.

    The top ``polish_count`` candidates get one golden-section pass per
    coordinate; the result lies in [0, 1]^d and is deterministic for a
    fixed seed and model.
    """
    d = config.dim
    if rng is None:
        rng = seeding.stream(config.seed, "acq", model.n)
    candidates = rng.uniform(size=(config.candidates_per_dim * d, d))
    values = _ei_batch(model, candidates, best, zeta)
    order = np.argsort(values)[::-1][: max(config.polish_count, 1)]

    best_point = candidates[order[0]].copy()
    best_value = float(values[order[0]])
    for idx in order:
        point = candidates[idx].copy()
        value = float(values[idx])
        for coord in range(d):
            def along(v, _p=point, _c=coord):
                q = _p.copy()
                q[_c] = v
                return expected_improvement(model, q, best, zeta)

            x_best, f_best = _golden_max(along, 0.0, 1.0, 16)
            if f_best > value:
                point[coord] = x_best
                value = f_best
        if value > best_value:
            best_value = value
            best_point = point
    return best_point


def run_bo(objective, config: BoConfig, compress=metrics.compress) -> tuple[np.ndarray, BoTrace]:
    """Minimize a black-box objective over the configured box.

    ``objective`` receives un-normalized parameter vectors and must return
    a finite raw cost (divergence handling is the caller's job).  The GP is
    trained on ``compress``-transformed costs; the incumbent is tracked on
    raw costs.  Returns the incumbent and the full trace.
    """
    t_start = time.perf_counter()
    xi_rows: list[np.ndarray] = []
    z_rows: list[np.ndarray] = []
    raw: list[float] = []
    comp: list[float] = []
    acq: list[float] = []
    best_seq: list[float] = []

    def record(z: np.ndarray, acq_value: float):
        xi = config.unnormalize(z)
        cost = float(objective(xi))
        xi_rows.append(xi)
        z_rows.append(z)
        raw.append(cost)
        comp.append(float(compress(cost)))
        acq.append(acq_value)
        best_seq.append(min(best_seq[-1], cost) if best_seq else cost)

    for z in initial_design(config):
        record(z, math.nan)

    model: GpModel | None = None
    steps_done = 0
    while len(raw) < config.max_evaluations and (
        config.threshold is None or best_seq[-1] > config.threshold
    ):
        Z = np.vstack(z_rows)
        targets = np.asarray(comp)
        refit = steps_done < config.initial_refits or steps_done % config.refit_every == 0
        if refit or model is None:
            warm = ((model.kernel, model.noise_variance),) if model is not None else ()
            model = gp.fit_hyperparameters(
                Z, targets,
                bounds=config.fit_bounds,
                seed=seeding.derive_seed(config.seed, "hyperfit", len(raw)),
                warm_starts=warm,
            )
        else:
            model = gp.condition(model.kernel, model.noise_variance, Z, targets)

        best_comp = float(np.min(targets))
        zeta = config.zeta_scale * float(np.max(targets) - np.min(targets))
        z_next = maximize_acquisition(
            model, config, best_comp, zeta, rng=seeding.stream(config.seed, "acq", len(raw))
        )
        acq_value = expected_improvement(model, z_next, best_comp, zeta)
        record(z_next, acq_value)
        steps_done += 1

    trace = BoTrace(
        xi=np.vstack(xi_rows),
        raw_cost=np.asarray(raw),
        compressed_cost=np.asarray(comp),
        acq_value=np.asarray(acq),
        best_raw=np.asarray(best_seq),
        wall_s=time.perf_counter() - t_start,
    )
    incumbent = trace.xi[int(np.argmin(trace.raw_cost))].copy()
    return incumbent, trace
