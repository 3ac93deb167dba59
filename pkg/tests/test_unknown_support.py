from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrproj.adapt import ResolutionGrid
from mrproj.lattice import DesignSample
from mrproj.regress import ThresholdPolicy, fit_level
from mrproj.unknown_support import (
    AnchorCache,
    MalteseEstimator,
    SplitSample,
    coverage_diagnostic,
    find_anchor,
    maltese_adaptive,
    maltese_estimate,
    split,
)

FLOOR = ThresholdPolicy("density-floor", 1e-9)


def test_split_examples():
    s = DesignSample(np.arange(8) / 8, np.arange(8, dtype=float))
    a = split(s, 5)
    assert a.fit_half.n == 4 and a.anchor_half.n == 4 and a.n == 4
    assert not set(a.fit_index) & set(a.anchor_index)
    assert sorted(np.concatenate([a.fit_half.Y, a.anchor_half.Y]).tolist()) == s.Y.tolist()
    b = split(s, 5)
    assert np.array_equal(a.fit_index, b.fit_index)
    with pytest.raises(ValueError):
        split(DesignSample(np.arange(7) / 7), 0)


def test_find_anchor_examples():
    anchors = DesignSample(np.array([0.5, 0.52]))
    assert find_anchor(0.9, 2, anchors) is None
    assert find_anchor(0.5, 2, anchors)[0] == 0.5
    assert find_anchor(0.51, 20, DesignSample(np.array([0.51])))[0] == 0.51
    cache = AnchorCache(2)
    cache._entries[1] = None
    assert find_anchor(0.5, 2, anchors, cache)[0] == 0.52
    # l_inf ball: a corner at exactly half the side still qualifies
    assert find_anchor([0.5, 0.5], 1, DesignSample(np.array([[0.75, 0.25]]))) is not None
    assert find_anchor([0.5, 0.5], 1, DesignSample(np.array([[0.76, 0.25]]))) is None


def _split_with_centres(rng, j, n=3000, d=1, f=lambda X: np.cos(5 * X[:, 0])):
    X = rng.random((n, d))
    fit = DesignSample(X, f(X) + 0.1 * rng.standard_normal(n))
    grids = np.meshgrid(*[(np.arange(2**j) + 0.5) / 2**j] * d, indexing="ij")
    centres = np.column_stack([g.ravel() for g in grids])
    return SplitSample(fit, DesignSample(centres, np.zeros(len(centres))))


@pytest.mark.parametrize("r,d,j", [(1, 1, 3), (2, 1, 3), (3, 1, 2), (2, 2, 2)])
def test_shift_consistency(bases, rng, r, d, j):
    sp = _split_with_centres(rng, j, d=d)
    table = fit_level(sp.fit_half, j, bases[r], 1e-9)
    # queries strictly inside cells so the own centre is the unique anchor
    cell = rng.integers(0, 2**j, size=(200, d))
    q = (cell + 0.05 + 0.9 * rng.random((200, d))) / 2**j
    est = MalteseEstimator(sp, j, bases[r], FLOOR)
    v, ok, _ = est.evaluate(q)
    assert np.all(ok)
    np.testing.assert_allclose(v, table(q), atol=1e-10)


def test_haar_cell_mean(bases, rng):
    X = rng.random(1000)
    Y = rng.standard_normal(1000)
    anchor = 0.437
    sp = SplitSample(DesignSample(X, Y), DesignSample(np.array([anchor])))
    j = 3
    inside = (X >= anchor - 2.0**-4) & (X < anchor + 2.0**-4)
    got = maltese_estimate(0.44, j, sp, bases[1], FLOOR)
    assert got == pytest.approx(Y[inside].mean(), abs=1e-10)


def test_isolated_point_is_zero(bases, rng):
    X = rng.random(400) * 0.4
    sp = split(DesignSample(X, np.ones(400)), 1)
    assert maltese_estimate(0.9, 3, sp, bases[1], FLOOR) == 0.0


def test_cache_hits(bases, rng):
    sp = _split_with_centres(rng, 3)
    est = MalteseEstimator(sp, 3, bases[2], FLOOR)
    for x in (0.3, 0.31, 0.32, 0.33):
        est(np.array([x]))
    assert est.n_regressions == 1
    est(np.linspace(0.26, 0.36, 50))
    assert est.n_regressions == 1


@given(seed=st.integers(0, 10**6), q=st.integers(1, 400), j=st.integers(0, 8))
def test_regressions_bounded_by_anchor_count(seed, q, j):
    from mrproj.scaling import build_basis

    rng = np.random.default_rng(seed)
    sp = split(DesignSample(rng.random(60), rng.random(60)), seed)
    est = MalteseEstimator(sp, j, build_basis(1), FLOOR)
    est(rng.random(q))
    est(rng.random(q))
    assert est.n_regressions <= sp.anchor_half.n
    assert len(est.cache) == est.n_regressions


def test_anchor_half_responses_unused(bases, rng):
    X = rng.random(800)
    Y = np.sin(4 * X)
    sp = split(DesignSample(X, Y), 0)
    alt = SplitSample(sp.fit_half, DesignSample(sp.anchor_half.X, -sp.anchor_half.Y + 7))
    q = rng.random(100)
    a = MalteseEstimator(sp, 3, bases[2], FLOOR)(q)
    b = MalteseEstimator(alt, 3, bases[2], FLOOR)(q)
    np.testing.assert_array_equal(a, b)


def test_concurrent_queries_fit_once(bases, rng):
    sp = split(DesignSample(rng.random(2000), rng.random(2000)), 0)
    est = MalteseEstimator(sp, 4, bases[1], FLOOR)
    queries = [rng.random(50) for _ in range(16)]
    with ThreadPoolExecutor(8) as ex:
        list(ex.map(est, queries))
    assert est.n_regressions == len(est.cache)
    serial = MalteseEstimator(sp, 4, bases[1], FLOOR, cache=est.cache)
    for k in est.cache.keys():
        assert serial.local_fit(k).valid == est.local_fit(k).valid


def test_invalid_fit_uses_fallback(bases):
    sp = SplitSample(DesignSample(np.array([0.5]), np.array([3.0])), DesignSample(np.array([0.5])))
    est = MalteseEstimator(sp, 1, bases[2], ThresholdPolicy("density-floor", 0.5), fallback_value=-1.0)
    v, ok, _ = est.evaluate(np.array([0.5]))
    assert not ok[0] and v[0] == -1.0


def test_clamp_and_empirical_policy(bases, rng):
    X = rng.random(1000)
    sp = split(DesignSample(X, 5 * np.ones(1000)), 0)
    est = MalteseEstimator(sp, 2, bases[1], ThresholdPolicy("empirical-decile", clamp=1.0))
    assert est.pi_inv is None
    v = est(rng.random(20))
    # edge anchors see half-empty cubes and fall in the bottom decile
    assert set(v.tolist()) <= {0.0, 1.0} and v.mean() > 0.5
    assert 0 < est.pi_inv <= 1


def test_adaptive_levels_in_grid(bases, rng):
    X = rng.random(2000)
    sp = split(DesignSample(X, np.where(X > 0.5, 1.0, 0.0)), 0)
    g = ResolutionGrid(2, 6, 0.5, sp.n)
    v, lv, ests = maltese_adaptive(np.linspace(0.01, 0.99, 50), sp, g, bases[1], FLOOR)
    assert set(lv.tolist()) <= set(g.levels)
    assert set(ests) == set(g.levels)
    assert np.all((v >= -1e-12) & (v <= 1 + 1e-12))


def test_coverage_examples(rng):
    unif = lambda m, r: r.random(m)  # noqa: E731
    assert coverage_diagnostic(DesignSample(np.array([0.5])), 0, unif, 1000, 0) == 1.0
    assert coverage_diagnostic(DesignSample(np.zeros((0, 1))), 2, unif, 10, 0) == 0.0
    with pytest.raises(ValueError):
        coverage_diagnostic(DesignSample(np.array([0.5])), 0, unif, 0)
    n = 4000
    j = int(np.floor(np.log2(n / (16 * np.log(n)))))
    fr = [coverage_diagnostic(DesignSample(np.random.default_rng(k).random(n)), j, unif, 2000, k)
          for k in range(20)]
    assert np.median(fr) >= 0.99
