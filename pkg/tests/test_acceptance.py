"""Acceptance suite: one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The three simulation
criteria (sample complexity, excess error, smoothing sweep) dominate the
runtime; everything else finishes in seconds.
"""

import math
import time

import numpy as np
import pytest

import wtnorm
from wtnorm.adversarial import (
    build_example1,
    build_example2,
    example1_expected_loss,
    example1_lower_bound,
    example2_miss_probability,
    run_example1_trials,
    run_example2_trials,
)
from wtnorm.bench import run_excess_error, run_sample_complexity, run_smoothing_sweep
from wtnorm.complexity import bound_diagnostics, estimate_rademacher
from wtnorm.distributions import JointDistribution, make_product, make_uniform, sample
from wtnorm.solvers import (
    LossSpec,
    factored_gradient,
    factored_objective,
    prox_weighted_trace,
)
from wtnorm.weighting import (
    MarginalWeights,
    NormBudget,
    SmoothingConfig,
    from_distribution,
    reweight,
    smooth,
    unweight,
    uniform_weights,
    weighted_frobenius_norm,
    weighted_trace_norm,
)

N_JOBS = 2


def report(number, name, t0, detail=""):
    print(f"\n[acceptance] criterion {number} ({name}): PASS "
          f"in {time.perf_counter() - t0:.1f}s {detail}")


def test_criterion_01_example1_lower_bound():
    t0 = time.perf_counter()
    n, s, trials = 60, 1800, 200
    inst = build_example1(n, s, seed=0)
    vals = run_example1_trials(inst, trials, seed=1)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(trials))
    closed = example1_expected_loss(inst)
    assert mean >= 0.0402
    assert mean >= example1_lower_bound(n, s)
    assert abs(mean - closed) <= 3 * se
    report(1, "example 1 lower bound", t0,
           f"(mean {mean:.5f}, closed {closed:.5f}, 3se {3 * se:.5f})")


def test_criterion_02_example2_lower_bound():
    t0 = time.perf_counter()
    s, trials = 100, 1000
    inst = build_example2(20, s)
    vals = run_example2_trials(inst, trials, seed=2)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(trials))
    closed = example2_miss_probability(s)
    assert mean >= 0.25
    assert abs(mean - closed) <= 3 * se
    report(2, "example 2 lower bound", t0,
           f"(mean {mean:.4f}, closed {closed:.4f}, 3se {3 * se:.4f})")


def test_criterion_03_rademacher_scaling():
    t0 = time.perf_counter()
    n = 50
    dist = make_uniform(n)
    w = from_distribution(dist)
    budget = NormBudget(1.0)
    truth = np.zeros((n, n))
    s_grid = [250, 500, 1000, 2000, 4000]
    means = []
    for s in s_grid:
        S = sample(dist, s, truth, seed=100 + s)
        est = estimate_rademacher(S, w, budget, num_draws=64, seed=7)
        means.append(est.mean)
    slope = float(np.polyfit(np.log(s_grid), np.log(means), 1)[0])
    assert -0.6 <= slope <= -0.4
    report(3, "Rademacher scaling", t0, f"(log-log slope {slope:.3f})")


def test_criterion_04_smoothed_bound_diagnostics():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(4, 40))
        m = int(rng.integers(3, n + 1))
        raw = rng.random((n, m)) ** 3
        dist = JointDistribution.from_mass(raw / raw.sum())
        w = smooth(from_distribution(dist), SmoothingConfig(0.5))
        s = int(rng.integers(10, 2000))
        diag = bound_diagnostics(dist, w, s, NormBudget(1.0))
        assert diag.sigma_sq <= 4 * s * max(n, m) + 1e-9
        assert diag.R_value <= 2 * math.sqrt(n * m) + 1e-9
    report(4, "smoothed bound diagnostics", t0)


def test_criterion_05_prox_oracle():
    t0 = time.perf_counter()
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        r = rng.random(3) + 0.2
        c = rng.random(3) + 0.2
        w = MarginalWeights.from_vectors(r / r.sum(), c / c.sum())
        X = rng.standard_normal((3, 3))
        tau = 0.05 + 0.4 * rng.random()

        def objective(Z):
            return (0.5 * weighted_frobenius_norm(Z - X, w) ** 2
                    + tau * weighted_trace_norm(Z, w))

        ours = objective(prox_weighted_trace(X, w, tau))
        Zv = cp.Variable((3, 3))
        prob = cp.Problem(cp.Minimize(
            0.5 * cp.sum_squares(Zv - reweight(X, w)) + tau * cp.normNuc(Zv)))
        prob.solve()
        oracle = objective(unweight(Zv.value, w))
        gap = abs(ours - oracle)
        worst = max(worst, gap)
        assert gap <= 1e-6
    report(5, "prox oracle", t0, f"(worst objective gap {worst:.2e})")


def test_criterion_06_sample_complexity_trend():
    t0 = time.perf_counter()
    reports = run_sample_complexity(ns=(60, 120), target_error=0.1,
                                    weightings=("uniform", "smoothed_empirical"),
                                    seeds=100, base_seed=0, n_jobs=N_JOBS)
    required = {(r.params["n"], r.params["weighting"]): r.metrics["required_s"]
                for r in reports if r.scenario == "sample_complexity_summary"}
    for n in (60, 120):
        assert not math.isnan(required[(n, "uniform")]), "search saturated"
        assert required[(n, "smoothed_empirical")] <= required[(n, "uniform")]
    # larger matrices need at least as many samples (one granule of slack)
    for weighting in ("uniform", "smoothed_empirical"):
        assert required[(120, weighting)] >= required[(60, weighting)] - 30
    report(6, "sample-complexity trend", t0, f"(required_s {required})")


def test_criterion_07_excess_error_trend():
    t0 = time.perf_counter()
    s_grid = (800, 1600, 3200, 6400)
    reports = run_excess_error(n=200, nu_grid=(0.05, 0.1), s_grid=s_grid,
                               weightings=("uniform", "smoothed_empirical"),
                               seeds=20, base_seed=0, n_jobs=N_JOBS)
    curves = {}
    for r in reports:
        curves.setdefault((r.params["nu"], r.params["weighting"]), {})[
            r.params["s"]] = r.mean
    for (nu, weighting), curve in curves.items():
        errs = [curve[s] for s in s_grid]
        violations = sum(1 for a, b in zip(errs, errs[1:]) if b > a)
        assert violations <= 1, f"curve nu={nu} {weighting}: {errs}"
    for nu in (0.05, 0.1):
        for s in s_grid[-2:]:
            assert curves[(nu, "smoothed_empirical")][s] <= curves[(nu, "uniform")][s]
    report(7, "excess-error trend", t0)


def test_criterion_08_smoothing_sweep():
    t0 = time.perf_counter()
    reports = run_smoothing_sweep(n=64, k_grid=(10,), seeds=10, base_seed=0,
                                  n_jobs=N_JOBS)
    rmse = {r.params["alpha"]: r.mean for r in reports}
    assert rmse[0.9] <= rmse[1.0]
    assert rmse[0.9] <= rmse[0.0]
    detail = " ".join(f"a={a}:{v:.4f}" for a, v in rmse.items())
    report(8, "smoothing sweep", t0, f"({detail})")


def test_criterion_09_marginal_domination():
    t0 = time.perf_counter()
    n = 50
    s = math.ceil(24 * n * math.log(n))
    ranks = np.arange(1, n + 1, dtype=float)
    zipf = 1.0 / ranks
    zipf /= zipf.sum()
    dist = make_product(zipf, zipf[::-1].copy())
    trials = 2000
    truth = np.zeros((n, n))
    fails = sum(
        not wtnorm.check_marginal_domination(sample(dist, s, truth, seed=t), dist).holds
        for t in range(trials))
    p_hat = fails / trials
    se = math.sqrt(max(p_hat * (1 - p_hat), 0.0) / trials)
    assert p_hat <= 2 / n**2 + 3 * se
    report(9, "marginal domination", t0, f"(failures {fails}/{trials})")


def test_criterion_10_norm_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)

    def rand_weights(n, m):
        r = rng.random(n) + 0.05
        c = rng.random(m) + 0.05
        return MarginalWeights.from_vectors(r / r.sum(), c / c.sum())

    for _ in range(1000):
        w = rand_weights(6, 5)
        X = rng.standard_normal((6, 5))
        cst = float(rng.standard_normal()) * 2
        assert abs(weighted_trace_norm(cst * X, w)
                   - abs(cst) * weighted_trace_norm(X, w)) <= 1e-8
    for _ in range(1000):
        w = rand_weights(5, 5)
        X, Y = rng.standard_normal((2, 5, 5))
        assert weighted_trace_norm(X + Y, w) <= (
            weighted_trace_norm(X, w) + weighted_trace_norm(Y, w) + 1e-8)
    for _ in range(1000):
        n, m = 6, 4
        X = rng.standard_normal((n, m))
        assert abs(weighted_trace_norm(X, uniform_weights(n, m))
                   - np.linalg.svd(X, compute_uv=False).sum()
                   / math.sqrt(n * m)) <= 1e-8
    for _ in range(1000):
        r = int(rng.integers(1, 6))
        X = rng.standard_normal((6, r)) @ rng.standard_normal((r, 5))
        X /= max(1.0, float(np.abs(X).max()))  # unit entry box, rank kept
        w = rand_weights(6, 5)
        assert weighted_trace_norm(X, w) <= math.sqrt(r) + 1e-8
    report(10, "norm invariant suite", t0)


def test_criterion_11_sgd_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    n, m, k, s = 8, 7, 3, 60
    S = wtnorm.SampleSet.from_arrays(rng.integers(0, n, s), rng.integers(0, m, s),
                                     rng.standard_normal(s))
    r = rng.random(n) + 0.1
    c = rng.random(m) + 0.1
    w = MarginalWeights.from_vectors(r / r.sum(), c / c.sum())
    loss = LossSpec.squared()
    lam = 0.2
    eps = 1e-6
    worst = 0.0
    for _ in range(10):
        U = rng.standard_normal((n, k))
        V = rng.standard_normal((m, k))
        gU, gV = factored_gradient(U, V, S, w, loss, lam)
        i, j = int(rng.integers(n)), int(rng.integers(k))
        up, dn = U.copy(), U.copy()
        up[i, j] += eps
        dn[i, j] -= eps
        fd = (factored_objective(up, V, S, w, loss, lam)
              - factored_objective(dn, V, S, w, loss, lam)) / (2 * eps)
        rel = abs(gU[i, j] - fd) / max(abs(fd), 1e-12)
        worst = max(worst, rel)
        assert rel <= 1e-5
        i, j = int(rng.integers(m)), int(rng.integers(k))
        up, dn = V.copy(), V.copy()
        up[i, j] += eps
        dn[i, j] -= eps
        fd = (factored_objective(U, up, S, w, loss, lam)
              - factored_objective(U, dn, S, w, loss, lam)) / (2 * eps)
        rel = abs(gV[i, j] - fd) / max(abs(fd), 1e-12)
        worst = max(worst, rel)
        assert rel <= 1e-5
    report(11, "SGD gradient check", t0, f"(worst rel err {worst:.2e})")
