"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Criterion 7 runs the desk-scale benchmark declared in configs/desk.json
(4 seeds, individual 60 evaluations/stage, simultaneous 360) and dominates
the suite's runtime; criterion 5 instruments every objective evaluation of
that same run.  Run with ``pytest -s tests/test_acceptance.py`` to see the
per-criterion lines as they complete.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

from stagetune.bo import BoConfig, run_bo, _ei_values
from stagetune.cli import main
from stagetune.config import load_config
from stagetune.episode import Trail
from stagetune.gp import condition, log_marginal_likelihood, posterior
from stagetune.harness import build_benchmark, compare
from stagetune.metrics import etx_iae, iae
from stagetune.multistage import budget_accounting

from test_gp import dense_oracle, random_instance

REPO = Path(__file__).resolve().parents[1]
DESK_CONFIG = REPO / "configs" / "desk.json"
FULL_CONFIG = REPO / "configs" / "full.json"


def verdict(num: int, name: str, ok: bool, detail: str):
    print(f"ACCEPTANCE {num} ({name}): {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


def test_criterion_1_gp_oracle_equivalence():
    rng = np.random.default_rng(20240001)
    worst = 0.0
    for _ in range(200):
        kernel, noise, X, y = random_instance(rng)
        model = condition(kernel, noise, X, y)
        x_star = rng.uniform(size=X.shape[1])
        mean, var = posterior(model, x_star)
        o_mean, o_var, o_lml = dense_oracle(kernel, noise, X, y, x_star)
        errs = (abs(mean - o_mean), abs(var - max(o_var, 0.0)),
                abs(log_marginal_likelihood(model) - o_lml))
        worst = max(worst, *errs)
    verdict(1, "gp dense-solve oracle", worst <= 1e-8,
            f"200 instances (d<=3, n<=8), worst |error| = {worst:.3e} <= 1e-8")


def test_criterion_2_expected_improvement_monte_carlo():
    rng = np.random.default_rng(101)
    n_draws = 100_000
    worst_z = 0.0
    for _ in range(100):
        sigma = float(rng.uniform(0.1, 2.0))
        best = float(rng.uniform(-2, 2))
        zeta = float(rng.uniform(0, 0.5))
        mu = best - zeta - float(rng.uniform(-3, 3)) * sigma
        draws = rng.normal(mu, sigma, size=n_draws)
        samples = np.maximum(best - zeta - draws, 0.0)
        mc = float(samples.mean())
        se = float(samples.std(ddof=1)) / math.sqrt(n_draws)
        closed = float(_ei_values(np.array([mu]), np.array([sigma ** 2]), best, zeta)[0])
        worst_z = max(worst_z, abs(closed - mc) / se)
    verdict(2, "expected improvement vs Monte Carlo", worst_z <= 3.0,
            f"100 instances x 1e5 draws, worst |z| = {worst_z:.2f} <= 3 standard errors")


def _signal_trail(horizon: float, err, period: float = 0.1) -> Trail:
    t = np.arange(int(round(horizon / period)) + 1) * period
    y = np.zeros((len(t), 6))
    y[:, 0] = [err(tk) for tk in t]
    return Trail(t=t, y=y, u=np.zeros_like(y), y_ref=np.zeros_like(y),
                 completed=True, completion_time=float(t[-1]))


def test_criterion_3_metric_oracles():
    cases = []
    # constant error
    trail = _signal_trail(20.0, lambda t: 1.0)
    cases.append(("iae const", iae(trail, 0), 20.0))
    cases.append(("etx const", etx_iae(trail, (0,)), math.exp(20.0) - 1.0))
    # sinusoid
    horizon = 2 * math.pi
    trail = _signal_trail(horizon, math.sin)
    oracle, _ = quad(lambda s: abs(math.sin(s)), 0, trail.t[-1], limit=400)
    cases.append(("iae sin", iae(trail, 0), oracle))
    oracle, _ = quad(lambda s: math.exp(s) * abs(math.sin(s)), 0, trail.t[-1], limit=400)
    cases.append(("etx sin", etx_iae(trail, (0,)), oracle))
    # exponential decay
    trail = _signal_trail(5.0, lambda t: math.exp(-t))
    cases.append(("iae decay", iae(trail, 0), 1.0 - math.exp(-5.0)))
    cases.append(("etx decay", etx_iae(trail, (0,)), 5.0))

    worst = max(abs(got - want) / want for _, got, want in cases)
    detail = ", ".join(f"{name} {abs(g - w) / w:.2e}" for name, g, w in cases)
    verdict(3, "metric oracles at T=0.1", worst <= 5e-3,
            f"worst relative error {worst:.2e} <= 0.5% ({detail})")


def test_criterion_4_integrator_order():
    from stagetune.plant import AuvPlant

    plant = AuvPlant()
    rng = np.random.default_rng(7)
    x0 = rng.normal(scale=0.2, size=12)
    u = rng.normal(scale=15.0, size=6)

    def integrate(h):
        return plant.advance_sample(x0, u, h, int(round(1.0 / h)))

    ref = integrate(0.05 / 64)
    errs = [np.linalg.norm(integrate(h) - ref) for h in (0.05, 0.025)]
    order = math.log2(errs[0] / errs[1])
    verdict(4, "RK4 convergence order", order >= 3.9,
            f"measured order {order:.3f} >= 3.9 via step halving")


@pytest.fixture(scope="module")
def desk_run():
    cfg = load_config(DESK_CONFIG)
    violations = []
    counter = [0]

    def observer(stage_name, full, fixed, mask):
        counter[0] += 1
        if np.any((full - fixed)[mask] != 0.0):
            violations.append((stage_name, counter[0]))

    report = compare(cfg.benchmark, cfg.plant, observer=observer)
    return report, counter[0], violations


def test_criterion_5_constraint_exactness(desk_run):
    report, count, violations = desk_run
    recorded = sum(r.total_evaluations for r in report.seed_results if r.error is None)
    ok = count >= 900 and not violations and count == recorded
    verdict(5, "fixed-parameter constraint exactness", ok,
            f"{count} instrumented stage evaluations (>= 900), "
            f"{len(violations)} violations of (xi - xi_bar) P = 0 at zero tolerance")


def test_criterion_6_bo_sanity():
    def quadratic(xi):
        return float((xi[0] - 0.3) ** 2 + (xi[1] - 0.7) ** 2)

    wins = 0
    monotone = True
    finals = []
    for seed in range(5):
        config = BoConfig(dim=2, lo=np.zeros(2), hi=np.ones(2),
                          max_evaluations=60, seed=seed)
        _, trace = run_bo(quadratic, config)
        monotone &= bool(np.all(np.diff(trace.best_raw) <= 0.0))
        finals.append(trace.best_raw[-1])
        if trace.best_raw[-1] <= 0.1:
            wins += 1
    verdict(6, "BO on 2-D quadratic", wins >= 4 and monotone,
            f"{wins}/5 seeds reached cost <= 0.1 in 60 evaluations "
            f"(bests: {', '.join(f'{v:.3g}' for v in finals)}); "
            f"incumbent non-increasing in all runs: {monotone}")


def test_criterion_7_staged_vs_simultaneous_direction(desk_run):
    report, _, _ = desk_run
    rows = {(r.variant, r.seed): r for r in report.seed_results}
    assert all(r.error is None for r in report.seed_results), "a benchmark seed failed"
    seeds = report.seeds

    fewer = sum(
        rows[("individual", s)].total_evaluations < rows[("simultaneous", s)].total_evaluations
        for s in seeds
    )
    wall_all = all(
        rows[("individual", s)].wall_s < rows[("simultaneous", s)].wall_s for s in seeds
    )
    sim_time_all = all(
        rows[("individual", s)].sim_time_s < rows[("simultaneous", s)].sim_time_s for s in seeds
    )
    ind, sim = report.stats["individual"], report.stats["simultaneous"]
    cost_ok = ind.cost_mean <= sim.cost_mean
    completion_ok = ind.completion_mean <= sim.completion_mean

    detail = (
        f"(a) fewer samples in {fewer}/{len(seeds)} seeds "
        f"[ind {[rows[('individual', s)].total_evaluations for s in seeds]} vs "
        f"sim {[rows[('simultaneous', s)].total_evaluations for s in seeds]}]; "
        f"(b) wall time lower in all seeds: {wall_all} "
        f"[ind {[round(rows[('individual', s)].wall_s, 1) for s in seeds]} s vs "
        f"sim {[round(rows[('simultaneous', s)].wall_s, 1) for s in seeds]} s], "
        f"sim-time lower in all seeds: {sim_time_all}; "
        f"(c) mean cost {ind.cost_mean:.4g} vs {sim.cost_mean:.4g} ({cost_ok}), "
        f"mean completion {ind.completion_mean:.2f} s vs {sim.completion_mean:.2f} s "
        f"({completion_ok})"
    )
    ok = fewer >= 3 and wall_all and sim_time_all and cost_ok and completion_ok
    verdict(7, "staged-vs-simultaneous direction", ok, detail)

    # expected pattern: both tuned variants beat the hand-picked baseline
    assert report.manual_cost >= ind.cost_mean
    assert report.manual_cost >= sim.cost_mean


def test_criterion_8_budget_arithmetic():
    cfg = load_config(FULL_CONFIG)
    pipeline = build_benchmark(cfg.benchmark, "individual", cfg.plant, seed=1)
    acct = budget_accounting(pipeline)
    mono = build_benchmark(cfg.benchmark, "simultaneous", cfg.plant, seed=1)
    acct_mono = budget_accounting(mono)

    ok = (
        acct.dimensions == (3, 3, 3, 3, 3, 3)
        and acct.total_dimension == 18
        and acct.staged_complexity == 48
        and acct.monolithic_complexity == 262144
        and acct_mono.dimensions == (18,)
        and acct_mono.monolithic_complexity == 262144
        and acct.evaluation_budgets == (200, 200, 200, 100, 100, 100)
        and acct.total_evaluation_budget == 900 < acct_mono.total_evaluation_budget == 1000
    )
    verdict(8, "budget accounting", ok,
            f"dims {acct.dimensions} sum {acct.total_dimension}; "
            f"sum of 2^d = {acct.staged_complexity} < 2^18 = {acct.monolithic_complexity}; "
            f"full caps {acct.evaluation_budgets} sum 900 < 1000")


def test_criterion_9_compare_determinism(tmp_path):
    # determinism is structural (named seed streams, wall-clock-free files),
    # so the byte-identity check runs at reduced caps
    doc = json.loads(DESK_CONFIG.read_text())
    doc["benchmark"].update(
        seeds=[1, 2], attitude_cap=8, position_cap=8, simultaneous_cap=40,
        trajectory_max_samples=200,
    )
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["compare", "--config", str(cfg_path), "--out-dir", str(out_a)]) == 0
    assert main(["compare", "--config", str(cfg_path), "--out-dir", str(out_b)]) == 0

    names = sorted(p.name for p in out_a.iterdir())
    assert "comparison.json" in names and "comparison.csv" in names
    identical = all((out_a / n).read_bytes() == (out_b / n).read_bytes() for n in names)
    verdict(9, "byte-identical compare outputs", identical,
            f"{len(names)} files identical across repeated runs: {names}")
