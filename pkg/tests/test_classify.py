import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrproj.adapt import resolution_grid
from mrproj.classify import (
    PlugInClassifier,
    bayes_classifier,
    excess_risk_mc,
    margin_scenario,
    plug_in,
    risk_curve,
    train_classifier,
    write_risk_csv,
)
from mrproj.exceptions import ConfigurationError
from mrproj.lattice import DesignSample
from mrproj.regress import ThresholdPolicy
from mrproj.unknown_support import split


def test_plug_in_examples():
    assert plug_in(lambda x: np.array([0.5]), None)[0] == 1
    assert plug_in(lambda x: np.array([0.49]), None)[0] == 0
    assert np.all(plug_in(lambda x: np.zeros(len(x)), np.ones(7)) == 0)


@given(v=st.lists(st.floats(-3, 3), min_size=1, max_size=30), a=st.floats(0.01, 100))
def test_plug_in_affine_invariance(v, a):
    v = np.array(v)
    base = plug_in(lambda x: x, v)
    moved = plug_in(lambda x: a * (x - 0.5) + 0.5, v)
    # exact ties at 1/2 may move by one ulp under the map
    far = np.abs(v - 0.5) > 1e-9
    assert np.array_equal(base[far], moved[far])


@pytest.mark.parametrize("theta", [1.0, 2.0])
def test_margin_cdf(theta, rng):
    sc = margin_scenario(theta)
    X = rng.random(200000)
    m = np.abs(2 * sc.eta(X) - 1)
    for t in (0.1, 0.3, 0.7, 1.0):
        assert sc.margin_cdf(t) == pytest.approx(t**theta)
        assert np.mean((m > 0) & (m <= t)) == pytest.approx(t**theta, abs=5e-3)


def test_hard_margin_and_flat():
    hard = margin_scenario(math.inf)
    assert set(hard.eta(np.linspace(0.01, 0.99, 50)).tolist()) == {0.0, 1.0}
    flat = margin_scenario(0)
    assert np.all(flat.eta(np.random.default_rng(0).random(10)) == 0.5)
    with pytest.raises(ConfigurationError):
        margin_scenario(-1)


@given(theta=st.floats(0.1, 10), seed=st.integers(0, 10**6), d=st.integers(1, 3))
def test_bayes_risk_is_zero(theta, seed, d):
    sc = margin_scenario(theta, d=d)
    assert excess_risk_mc(bayes_classifier(sc), sc, 500, seed).estimate == 0.0


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_anti_bayes(theta):
    sc = margin_scenario(theta)
    anti = PlugInClassifier(lambda x: 1.0 - sc.eta(x))
    rep = excess_risk_mc(anti, sc, 50000, 1)
    assert abs(rep.estimate - sc.mean_abs_margin) <= 3 * rep.stderr
    assert rep.estimate >= -3 * rep.stderr


def test_flat_scenario_zero_for_any_classifier():
    sc = margin_scenario(0)
    rep = excess_risk_mc(PlugInClassifier(lambda x: np.zeros(len(x))), sc, 1000, 0)
    assert rep.estimate == 0.0
    with pytest.raises(ValueError):
        excess_risk_mc(bayes_classifier(sc), sc, 0)


def test_train_errors(bases):
    s = DesignSample(np.linspace(0, 1, 10), np.linspace(0, 1, 10))
    with pytest.raises(ValueError):
        train_classifier(s, j=2, basis=bases[1])
    b = DesignSample(np.linspace(0, 1, 10), np.ones(10))
    with pytest.raises(ConfigurationError):
        train_classifier(b, basis=bases[1])
    with pytest.raises(ConfigurationError):
        train_classifier(b, j=1, grid=resolution_grid(1000, 1, 1, rule="practical"), basis=bases[1])
    with pytest.raises(ConfigurationError):
        resolution_grid(100, 1, 1, kappa=50.0)


def test_all_ones_haar(bases, rng):
    X = rng.random(400) * 0.5
    clf = train_classifier(split(DesignSample(X, np.ones(400)), 0), j=3, basis=bases[1])
    assert np.all(clf(np.linspace(0.02, 0.48, 40)) == 1)
    assert np.all(clf(np.linspace(0.7, 0.99, 10)) == 0)


def test_eta_is_clamped(bases, rng):
    X = rng.random(2000)
    sp = split(DesignSample(X, (X > 0.5).astype(float)), 0)
    clf = train_classifier(sp, j=3, basis=bases[3], policy=ThresholdPolicy("density-floor", 1e-9))
    v = clf.eta_hat(np.linspace(0, 1, 200))
    assert v.min() >= -1.0 and v.max() <= 1.0


def test_deterministic_labels(bases):
    errs = []
    for rep in range(20):
        rng = np.random.default_rng(rep)
        X = rng.random(8000)
        clf = train_classifier(DesignSample(X, (X > 0.5).astype(float)), j=5, basis=bases[1],
                               policy=ThresholdPolicy("density-floor", 0.5), seed=rep)
        h = rng.random(4000)
        h = h[np.abs(h - 0.5) > 2.0**-5]
        errs.append(np.mean(clf(h) != (h > 0.5)))
    assert np.median(errs) < 0.05


def test_adaptive_classifier(bases, rng):
    X = rng.random(4000)
    sc = margin_scenario(1.0)
    s = DesignSample(X, (rng.random(4000) < sc.eta(X)).astype(float))
    grid = resolution_grid(2000, 1, 1, rule="practical", j_low=2, kappa=0.05)
    clf = train_classifier(s, grid=grid, basis=bases[1], seed=0)
    rep = excess_risk_mc(clf, sc, 5000, 0)
    assert rep.estimate < 0.05 and rep.n == 2000


def test_risk_curve_rows_and_csv(bases, tmp_path):
    sc = margin_scenario(1.0)
    rows = risk_curve(sc, [64, 128], 3, bases[1], ThresholdPolicy("density-floor", 0.1), m=500, seed=4, j=2)
    assert [r["n"] for r in rows] == [64, 128]
    again = risk_curve(sc, [64, 128], 3, bases[1], ThresholdPolicy("density-floor", 0.1), m=500, seed=4, j=2)
    assert rows == again
    p = tmp_path / "risk.csv"
    write_risk_csv(rows, p)
    with open(p) as fh:
        got = list(csv.DictReader(fh))
    assert list(got[0]) == ["n", "theta", "s", "median_excess_risk", "stderr", "seed_base"]
    assert float(got[1]["median_excess_risk"]) == rows[1]["median_excess_risk"]
    uncoupled = risk_curve(sc, [64], 2, bases[1], m=200, seed=4, j=2, coupled=False)
    assert uncoupled[0]["median_excess_risk"] >= 0
    with pytest.raises(ConfigurationError):
        risk_curve(sc, [64], 1, bases[1], m=10, level="weird")
