"""
End-to-end acceptance checks.

Each test prints one ``[Cn] PASS|FAIL`` line, collected again in the
terminal summary, and then asserts.
"""
import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from mrproj.bounds import (
    BoundParams,
    clip,
    deviation_bound,
    deviation_frequency,
    eig_frequency,
    eig_tail,
    validity_floor,
)
from mrproj.classify import bayes_classifier, excess_risk_mc, margin_scenario, risk_curve
from mrproj.lattice import DesignSample
from mrproj.regress import EstimatorConfig, ThresholdPolicy, estimate, fit_level
from mrproj.simulate import StudyConfig, lpe_baseline, random_density, run_study, sample_design
from mrproj.unknown_support import MalteseEstimator, coverage_diagnostic, split


def report(tag, ok, detail):
    line = f"[{tag}] {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_c01_haar_oracle(bases):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    X = rng.random(500)
    Y = np.sin(2 * np.pi * X) + rng.standard_normal(500)
    s = DesignSample(X, Y)
    table = estimate(s, 4, bases[1], EstimatorConfig(1))
    worst = 0.0
    for (m,), ok in zip(table.cells, table.valid):
        if not ok:
            continue
        inside = np.floor(X * 16) == m
        probe = (m + rng.random(20)) / 16
        worst = max(worst, float(np.max(np.abs(table(probe) - Y[inside].mean()))))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-10 and secs < 1 and table.valid.sum() > 0
    assert report("C1", ok, f"Haar fit vs cell mean max diff {worst:.2e} over {table.valid.sum()} valid cells, "
                            f"{secs:.3f}s")


def test_c02_polynomial_reproduction(bases):
    rng = np.random.default_rng(2)
    worst, n_valid, n_cells = 0.0, 0, 0
    for r in (2, 3):
        X = rng.random(5000)
        coef = rng.standard_normal(r)
        s = DesignSample(X, np.polyval(coef, X))
        table = estimate(s, 3, bases[r], EstimatorConfig(r, policy=ThresholdPolicy("density-floor", 1e-9)))
        n_valid += int(table.valid.sum())
        n_cells += len(table)
        for (m,), ok in zip(table.cells, table.valid):
            if ok:
                probe = (m + rng.random(200)) / 8
                worst = max(worst, float(np.max(np.abs(table(probe) - np.polyval(coef, probe)))))
    ok = worst <= 1e-6 and n_valid == n_cells
    assert report("C2", ok, f"polynomial reproduction r=2,3 max error {worst:.2e}, valid cells {n_valid}/{n_cells}")


def test_c03_partition_and_refinement(bases):
    rng = np.random.default_rng(3)
    pou, ref = 0.0, 0.0
    for r in range(1, 11):
        b = bases[r]
        x = rng.uniform(-5, 5, 1000)
        ks = np.arange(-r - 6, r + 7)
        pou = max(pou, float(np.max(np.abs(b.phi(x[:, None] - ks).sum(axis=1) - 1.0))))
        nodes = b.grid[rng.choice(len(b.grid), 1000, replace=False)]
        rhs = sum(math.sqrt(2) * h * b.phi(2 * nodes - (t - (r - 1))) for t, h in enumerate(b.filter))
        ref = max(ref, float(np.max(np.abs(b.phi(nodes) - rhs))))
    ok = pou <= 1e-6 and ref <= 1e-9
    assert report("C3", ok, f"partition of unity {pou:.2e}, refinement residual {ref:.2e}, r=1..10")


def test_c04_regression_counts(bases):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    dense = DesignSample(rng.random(50000), rng.standard_normal(50000))
    c3 = fit_level(dense, 3, bases[1]).n_regressions
    c10 = fit_level(dense, 10, bases[1]).n_regressions
    design = sample_design(random_density(rng), 3000, 15, rng)
    sample = design.with_responses(np.sin(4 * np.pi * design.X[:, 0]) + rng.standard_normal(design.n))
    dominated = True
    for j in range(3, 11):
        mr = fit_level(sample, j, bases[3]).n_regressions
        _, _, lpe = lpe_baseline(sample, sample.X, 2.0 ** (-j - 1), 2)
        dominated &= mr <= min(2**j, design.n) < lpe
    secs = time.perf_counter() - t0
    ok = c3 == 8 and c10 == 1024 and dominated and secs < 10
    assert report("C4", ok, f"regressions j=3: {c3}, j=10: {c10}, below LPE at n_eff={design.n} on j=3..10: "
                            f"{dominated}, {secs:.2f}s")


def test_c05_bias_decay(bases):
    rng = np.random.default_rng(5)
    X = rng.random(200000)
    eta = np.abs(2 * X - 1) ** 0.5
    s = DesignSample(X, eta)
    means = {}
    for r in (1, 2, 3):
        err = {}
        for j in range(4, 10):
            t = fit_level(s, j, bases[r], 1e-10)
            err[j] = float(np.max(np.abs(t(X) - eta)))
        means[r] = float(np.mean([err[j + 1] / err[j] for j in range(4, 9)]))
    ok = all(abs(m - 2**-0.5) <= 0.15 for m in means.values())
    detail = ", ".join(f"r={r}: {m:.3f}" for r, m in means.items())
    assert report("C5", ok, f"mean sup-error ratio e(j+1)/e(j), j=4..8 ({detail}); target 0.707 +- 0.15")


def test_c06_minimax_slope(bases):
    t0 = time.perf_counter()
    ns = [2**k for k in range(10, 15)]
    grid = np.linspace(0, 1, 4001)
    truth = np.sin(2 * np.pi * grid)
    med = []
    for n in ns:
        j = int(math.floor(n ** (1 / 5))).bit_length() - 1
        rmse = []
        for rep in range(20):
            rng = np.random.default_rng(np.random.SeedSequence(entropy=6, spawn_key=(n, rep)))
            X = rng.random(n)
            s = DesignSample(X, np.sin(2 * np.pi * X) + rng.standard_normal(n))
            t = fit_level(s, j, bases[3], 5e-10)
            rmse.append(math.sqrt(np.mean((t(grid) - truth) ** 2)))
        med.append(float(np.median(rmse)))
    slope = float(np.polyfit(np.log(ns), np.log(med), 1)[0])
    secs = time.perf_counter() - t0
    ok = abs(slope + 0.4) <= 0.12 and secs < 300
    assert report("C6", ok, f"log-log slope of median RMSE {slope:.3f} (target -0.4 +- 0.12), {secs:.1f}s")


def test_c07_lepski_adaptivity():
    t0 = time.perf_counter()
    cfg = StudyConfig(kappa=0.05)
    parts, ok = [], True
    for name in ("doppler", "heavisine", "bumps", "blocks"):
        res = run_study(name, 20, cfg, seed=0, keep_median_points=False)
        summ = res.summary()
        ratio = summ["median_rel_rmse"] / summ["best_fixed_median_rel_rmse"]
        ok &= ratio <= 1.5
        parts.append(f"{name} {summ['median_rel_rmse']:.4f}/{summ['best_fixed_median_rel_rmse']:.4f}"
                     f"={ratio:.2f}")
    secs = time.perf_counter() - t0
    ok &= secs < 600
    assert report("C7", ok, f"adaptive/best-fixed median rel-RMSE: {'; '.join(parts)}; {secs:.1f}s")


def test_c08_unknown_support(bases):
    rng = np.random.default_rng(8)

    def on_support(m, g):
        u = g.random(m) * 0.8
        return np.where(u < 0.4, u, u + 0.2)

    def eta(x):
        return np.sin(2 * np.pi * x)

    X = on_support(8000, rng)
    sp = split(DesignSample(X, eta(X) + 0.3 * rng.standard_normal(8000)), 8)
    j = 5
    policy = ThresholdPolicy("density-floor", 1e-6)
    probes = on_support(20000, rng)
    est = MalteseEstimator(sp, j, bases[2], policy)
    err_m = float(np.mean(np.abs(est(probes) - eta(probes))))
    known = fit_level(sp.fit_half, j, bases[2], policy.pi_inv())
    err_k = float(np.mean(np.abs(known(probes) - eta(probes))))
    unanchored = 1.0 - coverage_diagnostic(sp.anchor_half, j, on_support, 20000, 88)
    ok = err_m <= 2 * err_k and unanchored < 0.01 and est.n_regressions <= sp.n
    assert report("C8", ok, f"L1 error moving grid {err_m:.4f} vs fixed grid {err_k:.4f} "
                            f"(ratio {err_m / err_k:.2f}), un-anchored mass {unanchored:.4f}, "
                            f"regressions {est.n_regressions} <= {sp.n}")


def test_c09_bound_dominance():
    checked, violations = 0, []
    for n in (2048, 4096, 8192):
        for j in (3, 4, 5):
            p = BoundParams(n=n, j=j, pi_n=2.0, K=0.5, M=1.0, s=1.0)
            fl = validity_floor(p)
            deltas = [1.01 * fl, 1.25 * fl, 1.5 * fl, 2.0 * fl]
            freq = deviation_frequency(p, deltas, lambda x: np.asarray(x), x=0.3, reps=200, seed=9)
            for dlt, f in zip(deltas, freq):
                b = clip(deviation_bound(dlt, p))
                if b < 1:
                    checked += 1
                    if f > b:
                        violations.append(("dev", n, j, dlt, f, b))
            ts = [0.25, 0.5]
            for t, f in zip(ts, eig_frequency(p, ts, x=0.3, reps=200, seed=9)):
                b = clip(eig_tail(t, p))
                if b < 1:
                    checked += 1
                    if f > b:
                        violations.append(("eig", n, j, t, f, b))
    ok = checked > 0 and not violations
    assert report("C9", ok, f"{checked} (n, j, delta or t) cases with bound < 1, violations: {len(violations)}")


def test_c10_classification(bases):
    t0 = time.perf_counter()
    sc = margin_scenario(1.0, s=1.0, d=2)
    ns = [2**k for k in range(9, 14)]
    rows = risk_curve(sc, ns, 20, bases[2], ThresholdPolicy("density-floor", 1e-9), m=20000, seed=10, j=1)
    med = [r["median_excess_risk"] for r in rows]
    decreasing = all(a > b for a, b in zip(med, med[1:]))
    bayes = max(excess_risk_mc(bayes_classifier(sc), sc, 20000, s).estimate for s in range(5))
    ok = decreasing and med[-1] <= med[0] / 3 and bayes == 0.0
    curve = ", ".join(f"{n}: {m:.2e}" for n, m in zip(ns, med))
    assert report("C10", ok, f"median excess risk {curve}; Bayes {bayes}; {time.perf_counter() - t0:.1f}s")
