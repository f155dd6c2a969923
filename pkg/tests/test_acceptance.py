"""Acceptance gate: one test per criterion, each at its stated tolerance.

Every test records a PASS/FAIL line that is echoed in the terminal summary.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from linmix.cli import main
from linmix.estimator import ConfidenceEllipsoid, RlsState, absorb, estimate
from linmix.harness import ExperimentConfig, prop1_check, run_experiment
from linmix.optimizer import solve_optimistic
from linmix.policy import PolicyConfig, n_zero, run_infinite
from linmix.process import IID, MARKOV, Environment, ProcessSpec, phi_coefficient, stationary_distribution, symmetric_chain
from oracles import boundary_grid_max, phi_by_enumeration, random_ellipsoid

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
THREE_STATE = np.array([[0.8, 0.1, 0.1], [0.2, 0.6, 0.2], [0.25, 0.25, 0.5]])


def benchmark(policy="LinMixFinite", horizons=(10**4,), reps=1, process=None):
    data = json.loads((CONFIGS / "benchmark.json").read_text())
    data.update(policy=policy, horizons=list(horizons), replications=reps, base_seed=0, output_path=None)
    if process is not None:
        data["process"] = process.to_dict()
    return ExperimentConfig.from_dict(data)


def test_c1_mixing_ground_truth(acceptance):
    started = time.perf_counter()
    worst = 0.0
    for eps in (0.1, 0.3, 0.45):
        spec = symmetric_chain(eps)
        for m in range(1, 11):
            worst = max(worst, abs(spec.phi(m) - 0.5 * abs(1 - 2 * eps) ** m))
    for P, past_len in ((np.array([[0.7, 0.3], [0.3, 0.7]]), 3), (np.array([[0.9, 0.1], [0.35, 0.65]]), 3), (THREE_STATE, 2)):
        pi = stationary_distribution(P)
        for m in (1, 2, 3):
            worst = max(worst, abs(phi_by_enumeration(P, pi, m, past_len=past_len) - phi_coefficient(P, pi, m)))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-10 and elapsed < 1.0
    acceptance(1, ok, f"max error {worst:.2e} (tol 1e-10), {elapsed:.3f}s (limit 1s)")
    assert ok


def test_c2_optimizer_oracle(acceptance):
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    invariants = True
    for d, count in ((2, 100), (3, 50)):
        for _ in range(count):
            c, W, b = random_ellipsoid(rng, d)
            ell = ConfidenceEllipsoid(c, W, b)
            sol = solve_optimistic(ell)
            worst = max(worst, abs(sol.value - boundary_grid_max(c, W, b, points=10**6)))
            q = ell.distance2(sol.theta_plus)
            invariants &= abs(q - b) <= 1e-8 * b and bool(ell.contains(sol.theta_plus))
            invariants &= abs(sol.value - np.linalg.norm(sol.theta_plus)) <= 1e-10
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-5 and invariants and elapsed < 30.0
    acceptance(2, ok, f"max |value - grid| {worst:.2e} (tol 1e-5), invariants {invariants}, {elapsed:.1f}s (limit 30s)")
    assert ok


def test_c3_coverage(acceptance):
    n, reps = 10**4, 500
    result = run_experiment(benchmark(horizons=(n,), reps=reps))
    rate = result.summary(n).coverage_failure_rate
    limit = 1 / n + 3 * math.sqrt((1 / n) / reps)
    ok = rate <= limit
    acceptance(3, ok, f"coverage failure rate {rate:.4f} over {reps} runs (limit {limit:.5f})")
    assert ok


def test_c4_regret_envelope(acceptance):
    horizons = (10**3, 10**4, 10**5)
    result = run_experiment(benchmark(horizons=horizons, reps=200))
    s = result.summaries
    within = all(h.mean_regret <= h.envelope for h in s)
    # least-squares slope of the ratio against log10 n; for three equally spaced
    # points it is (r_3 - r_1) / 2 with standard error sqrt(se_1^2 + se_3^2) / 2
    slope = (s[2].rate_ratio - s[0].rate_ratio) / 2
    slope_se = math.hypot(s[0].rate_ratio_se, s[2].rate_ratio_se) / 2
    no_trend = slope <= 3 * slope_se
    ratios = ", ".join(f"{h.rate_ratio:.4f}+-{h.rate_ratio_se:.4f}" for h in s)
    regrets = ", ".join(f"{h.mean_regret:.1f}/{h.envelope:.3g}" for h in s)
    ok = within and no_trend
    acceptance(
        4,
        ok,
        f"regret/envelope {regrets}; ratios {ratios}; slope {slope:.4f} <= 3*SE {3 * slope_se:.4f}: {no_trend}",
    )
    assert ok


def test_c5_oracle_optimality(acceptance):
    n, reps = 10**5, 100
    bench = run_experiment(benchmark("FixedOracle", (n,), reps)).summary(n)
    # on the benchmark every payoff is exactly 1/sqrt(2), so the regret is pure
    # summation rounding; allow 1e-12 per unit of n B on top of 3 SE
    floor = 1e-12 * n * 1.0
    bench_ok = abs(bench.mean_regret) <= 3 * bench.se_regret + floor
    three = ProcessSpec(MARKOV, THREE_STATE, np.array([[1.0, 0.0, 0.0], [0.0, 0.8, 0.0], [0.0, 0.0, -0.6]]), 1.0)
    other = run_experiment(benchmark("FixedOracle", (n,), reps, process=three)).summary(n)
    other_ok = abs(other.mean_regret) <= 3 * other.se_regret
    ok = bench_ok and other_ok
    acceptance(
        5,
        ok,
        f"benchmark {bench.mean_regret:.2e} (3SE {3 * bench.se_regret:.1e} + floor {floor:.0e}); "
        f"3-state {other.mean_regret:.1f} (3SE {3 * other.se_regret:.1f})",
    )
    assert ok


def test_c6_prop1(acceptance):
    n = 10**4
    holds = all(prop1_check(symmetric_chain(eps), n).holds for eps in (0.05, 0.1, 0.3, 0.45))
    iid = prop1_check(ProcessSpec(IID, np.array([0.5, 0.5]), np.eye(2), 1.0), n)
    flat = prop1_check(symmetric_chain(0.5), n)
    exact = iid.gap == 0.0 and iid.bound == 0.0 and flat.gap == 0.0 and flat.bound == 0.0
    ok = holds and exact
    acceptance(6, ok, f"holds for all eps: {holds}; iid gap={iid.gap} bound={iid.bound}")
    assert ok


def test_c7_schedule(acceptance):
    cfg = PolicyConfig(a=1.0, gamma=1.0, lam=1.0, B=1.0)
    traj = run_infinite(Environment(symmetric_chain(0.3), 0), 127, cfg)
    ends = [r.t_end for r in traj.schedule]
    zeros = [n_zero(cfg), n_zero(PolicyConfig(a=1e-12)), n_zero(PolicyConfig(a=10.0, gamma=2.0))]
    ok = n_zero(cfg) == 1 and ends == [1, 3, 7, 15, 31, 63, 127] and zeros == [1, 1, 18]
    acceptance(7, ok, f"round ends {ends}, n_zero {zeros}")
    assert ok


def test_c8_determinism(acceptance, tmp_path):
    same = {}
    for path in sorted(CONFIGS.glob("*.json")):
        if "process" not in json.loads(path.read_text()):
            continue
        outputs = []
        for run in ("a", "b"):
            target = tmp_path / f"{path.stem}_{run}.csv"
            assert main(["run", "--config", str(path), "--output", str(target)]) == 0
            outputs.append(target.read_bytes())
        same[path.stem] = outputs[0] == outputs[1]
    ok = bool(same) and all(same.values())
    acceptance(8, ok, f"byte-identical CSV: {same}")
    assert ok


def test_c9_estimator_identities(acceptance):
    rng = np.random.default_rng(9)
    det_ok = perm_ok = True
    cases = 0
    for d in range(1, 9):
        for m in (1, 10, 100, 1000):
            for lam in (0.1, 1.0, 10.0):
                xs = rng.normal(size=(m, d))
                xs /= np.linalg.norm(xs, axis=1, keepdims=True)
                ys = rng.normal(size=m)
                state = RlsState.empty(d, lam)
                for x, y in zip(xs, ys):
                    absorb(state, x, y)
                _, logdet = np.linalg.slogdet(state.gram())
                det_ok &= logdet - d * math.log(lam) <= d * math.log1p(m / (lam * d)) + 1e-9
                shuffled = RlsState.empty(d, lam)
                for i in rng.permutation(m):
                    absorb(shuffled, xs[i], ys[i])
                a, b = estimate(state), estimate(shuffled)
                perm_ok &= bool(np.allclose(a, b, rtol=1e-10, atol=1e-12))
                cases += 1
    ok = det_ok and perm_ok
    acceptance(9, ok, f"{cases} instances: determinant bound {det_ok}, permutation invariance {perm_ok}")
    assert ok
