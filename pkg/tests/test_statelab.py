from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from helpers import graph_from, registry
from refnet.statelab import (FEATURE_IDS, FeatureConfig, StateFeatureVector, build_features, classical_mds,
                             euclidean_distances, factor_analysis, features_frame, fit_mixed_model, kmeans, lrt,
                             pearson_table, standardize, stepwise_select, triad_groups)
from refnet.statelab.multivariate import _lloyd, _kmeanspp

# ---------------------------------------------------------------------- features

FAST = FeatureConfig(skip=("f28", "f29", "f30", "f31"))


def test_f1_average_degree():
    rng = np.random.default_rng(0)
    pairs = set()
    while len(pairs) < 100:
        a, b = map(int, rng.choice(40, 2, replace=False))
        if (b, a) not in pairs:
            pairs.add((a, b))
    g = graph_from(40, sorted(pairs))
    vec = build_features("NH", 2011, g, registry(["NH"] * 40), FAST)
    assert vec.get("f9") == 40 and vec.get("f10") == 100
    assert vec.get("f1") == 5.0
    out = build_features("NH", 2011, g, registry(["NH"] * 40), FeatureConfig(degree_convention="out", skip=FAST.skip))
    assert out.get("f1") == 2.5


def test_f16_from_induced_components():
    # NH pair 0 <-> 1, NH node 2 isolated, VT edge 3 -> 4 outside the induced network
    g = graph_from(5, [(0, 1), (1, 0), (3, 4)])
    vec = build_features("NH", 2010, g, registry(["NH", "NH", "NH", "VT", "VT"]), FAST)
    # induced component sizes [2, 1]: pairwise |diff| sum 2 over 2 n^2 mean = 12
    assert vec.get("f16") == pytest.approx(1 / 6)
    assert vec.get("f17") == 2 and vec.get("f21") == 3
    assert vec.provenance["f16"].startswith("metrics.gini")


def test_missing_marked_not_zero_filled():
    g = graph_from(4, [(0, 1), (2, 3)])
    vec = build_features("ME", 2012, g, registry(["NH", "NH", "VT", "VT"]), FAST)
    assert all(math.isnan(vec.get(f)) for f in ("f1", "f2", "f6", "f7"))
    assert "intrastate network is empty" in vec.missing["f1"]
    assert vec.missing["f28"] == "skipped by configuration"
    empty = StateFeatureVector.all_missing("ME", 2012, "no upstream data")
    assert all(math.isnan(empty.get(f)) for f in FEATURE_IDS) and set(empty.missing) >= set(FEATURE_IDS)
    frame = features_frame([vec, empty])
    assert list(frame.columns[:3]) == ["state", "year", "f1"] and frame["f1"].isna().all()


def test_every_present_feature_has_one_source():
    from helpers import random_digraph

    g = random_digraph(120, 600, 3)
    reg = registry(["NH" if i % 3 else "VT" for i in range(120)])
    vec = build_features("NH", 2013, g, reg, FeatureConfig(cp=FeatureConfig().cp.__class__(iterations_per_node=20)))
    for f, v in vec.values.items():
        assert (f in vec.provenance) or (f in vec.missing)
        if not math.isnan(v):
            assert f in vec.provenance
    assert 0 <= vec.get("f28") <= 1 and vec.get("f30") >= 0


# ---------------------------------------------------------------------- correlations


def _frames(x, y):
    n = len(x)
    key = {"state": ["S"] * n, "year": list(range(n))}
    return pd.DataFrame({**key, "f": x}), pd.DataFrame({**key, "a": y})


def test_pearson_identical_series():
    f, a = _frames([1.0, 2.0, 4.0, 8.0], [1.0, 2.0, 4.0, 8.0])
    (_, _, r, r2, n), = pearson_table(f, a)
    assert r == pytest.approx(1.0) and r2 == pytest.approx(1.0) and n == 4


@settings(max_examples=30)
@given(arrays(np.float64, 25, elements=st.floats(-1e3, 1e3)), arrays(np.float64, 25, elements=st.floats(-1e3, 1e3)))
def test_pearson_against_formula(x, y):
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
        return
    x = x.copy()
    x[3] = np.nan
    f, a = _frames(x, y)
    (_, _, r, _, n), = pearson_table(f, a)
    ok = ~np.isnan(x)
    assert n == 24
    assert r == pytest.approx(oracles._pearson(x[ok].tolist(), y[ok].tolist()), abs=1e-12)


def test_pearson_too_few_pairs():
    f, a = _frames([1.0, np.nan, 3.0], [1.0, 2.0, 2.0])
    assert math.isnan(pearson_table(f, a)[0][2])


# ---------------------------------------------------------------------- factor analysis


def test_identity_has_no_common_factor():
    fl = factor_analysis(np.eye(6), 2)
    assert np.abs(fl.loadings).max() < 1e-6 and fl.communalities.max() < 1e-6


def test_rank_one_recovers_generating_vector():
    v = np.array([0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3])
    R = np.outer(v, v)
    np.fill_diagonal(R, 1.0)
    fl = factor_analysis(R, 1, max_iter=1000, tol=1e-10)
    assert fl.loadings[:, 0] == pytest.approx(v, abs=1e-3)
    assert fl.max_abs_residual < 1e-3


@settings(max_examples=20)
@given(st.integers(0, 10 ** 6), st.sampled_from([2, 3]))
def test_loading_bounds_and_residual(seed, k):
    rng = np.random.default_rng(seed)
    L = rng.uniform(-0.8, 0.8, (10, k))
    Z = rng.standard_normal((300, k)) @ L.T + 0.6 * rng.standard_normal((300, 10))
    fl = factor_analysis(np.corrcoef(Z, rowvar=False), k)
    assert np.abs(fl.loadings).max() <= 1 + 1e-12
    assert np.all((fl.communalities >= -1e-12) & (fl.communalities <= 1 + 1e-12))
    R = np.corrcoef(Z, rowvar=False)
    resid = R - fl.loadings @ fl.loadings.T
    np.fill_diagonal(resid, 0)
    assert fl.max_abs_residual == pytest.approx(np.abs(resid).max(), abs=1e-12)
    for j in range(k):
        col = fl.loadings[:, j]
        assert col[np.argmax(np.abs(col))] >= 0


def test_two_block_grouping():
    rng = np.random.default_rng(4)
    f = rng.standard_normal((400, 2))
    Z = np.column_stack([f[:, 0]] * 4 + [f[:, 1]] * 3) + 0.5 * rng.standard_normal((400, 7))
    g = factor_analysis(np.corrcoef(Z, rowvar=False), 2).groups()
    assert len(set(g[:4])) == 1 and len(set(g[4:])) == 1 and g[0] != g[4]


def test_triad_groups_from_frame():
    rng = np.random.default_rng(2)
    f = rng.standard_normal((120, 2))
    cols = {f"T{i}": (f[:, 0] if i in (4, 9, 10, 12, 13, 14, 15, 16) else f[:, 1]) + 0.4 * rng.standard_normal(120)
            for i in range(4, 17)}
    tg = triad_groups(pd.DataFrame(cols))
    groups = sorted(tg.members, key=len)
    assert groups == [["T5", "T6", "T7", "T8", "T11"], ["T4", "T9", "T10", "T12", "T13", "T14", "T15", "T16"]]
    assert tg.scores.shape == (120, 2)


def test_factor_analysis_rejects_bad_input():
    with pytest.raises(ValueError):
        factor_analysis(np.ones((3, 4)))
    with pytest.raises(ValueError):
        factor_analysis(np.eye(3), 3)


# ---------------------------------------------------------------------- k-means


def test_kmeans_separates_blobs():
    rng = np.random.default_rng(0)
    X = np.r_[rng.normal(0, 0.3, (30, 3)), rng.normal(6, 0.3, (30, 3))]
    res = kmeans(X, 2, seed=1)
    assert len(set(res.labels[:30])) == 1 and len(set(res.labels[30:])) == 1 and res.labels[0] != res.labels[30]


def test_kmeans_k_equals_n():
    X = np.random.default_rng(1).standard_normal((7, 2))
    res = kmeans(X, 7, seed=0)
    assert res.sse == pytest.approx(0.0, abs=1e-20) and sorted(res.nearest.tolist()) == list(range(7))


@settings(max_examples=25)
@given(st.integers(0, 10 ** 6), st.integers(1, 5))
def test_lloyd_sse_non_increasing(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 3))
    trace = _lloyd(X, _kmeanspp(X, k, rng), 300, 1e-12)[3]
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))


@settings(max_examples=15)
@given(st.integers(0, 10 ** 6))
def test_kmeans_row_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((50, 4))
    perm = rng.permutation(50)
    a, b = kmeans(X, 3, seed=7), kmeans(X[perm], 3, seed=7)
    assert np.array_equal(a.labels[perm], b.labels)
    assert np.allclose(a.centroids, b.centroids) and a.sse == pytest.approx(b.sse)
    assert np.array_equal(perm[b.nearest], a.nearest)


def test_standardize_idempotent():
    X = np.random.default_rng(3).normal(5, 3, (30, 4))
    Z = standardize(X)
    assert np.allclose(standardize(Z), Z, atol=1e-12)
    assert np.allclose(Z.mean(0), 0, atol=1e-12) and np.allclose(Z.std(0, ddof=1), 1)


# ---------------------------------------------------------------------- MDS


def test_mds_line():
    x = np.array([0.0, 1.0, 3.5, 7.0, 7.5])
    D = np.abs(x[:, None] - x[None, :])
    res = classical_mds(D, 2)
    assert np.abs(euclidean_distances(res.coords) - D).max() < 1e-8
    assert res.reduced and res.coords.shape[1] == 1


def test_mds_triangle():
    D = np.ones((3, 3)) - np.eye(3)
    res = classical_mds(D, 2)
    assert np.abs(euclidean_distances(res.coords) - D).max() < 1e-8 and not res.reduced


@pytest.mark.parametrize("seed", range(5))
def test_mds_procrustes(seed):
    P = np.random.default_rng(seed).standard_normal((10, 2))
    res = classical_mds(euclidean_distances(P), 2)
    assert oracles.procrustes_disparity(P, res.coords) < 1e-6
    assert res.coords[0, 0] >= 0


def test_mds_rejects_asymmetric():
    with pytest.raises(ValueError):
        classical_mds(np.array([[0.0, 1.0], [2.0, 0.0]]))


# ---------------------------------------------------------------------- mixed model


def _panel(seed, n_states=50, n_years=6, tau2=1.0, sigma2=0.5, beta=(1.0, -0.5), state_noise=True):
    rng = np.random.default_rng(seed)
    states = np.repeat(np.arange(n_states), n_years)
    years = np.tile(np.arange(2009, 2009 + n_years), n_states)
    X = standardize(rng.standard_normal((len(states), len(beta))))
    lam = np.r_[0.0, rng.normal(0, 0.3, n_years - 1)]
    a = rng.normal(0, math.sqrt(tau2), n_states) if state_noise else np.zeros(n_states)
    y = 2.0 + a[states] + lam[years - 2009] + X @ np.asarray(beta) + rng.normal(0, math.sqrt(sigma2), len(states))
    return y, X, years, states


def _design(X, years):
    uy = np.unique(years)
    return np.column_stack([np.ones(len(years))] + [(years == u).astype(float) for u in uy[1:]] + [X])


def test_zero_tau_degenerates_to_ols():
    rng = np.random.default_rng(8)
    y, X, years, states = _panel(8, tau2=0.0, state_noise=False)
    # zero-sum noise within each state leaves no between-state variation
    e = rng.normal(0, 1, len(y))
    e -= np.bincount(states, e)[states] / 6
    y = 1.0 + X @ np.array([1.0, -0.5]) + e
    fit = fit_mixed_model(y, X, years, states, standardize_predictors=False)
    ref = oracles.ols(_design(X, years), y)
    got = np.r_[fit.beta0, list(fit.lam.values()), list(fit.beta1.values())]
    assert fit.tau2 < 1e-4
    assert np.abs(got - ref).max() < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_mixed_against_statsmodels(seed):
    y, X, years, states = _panel(seed)
    fit = fit_mixed_model(y, X, years, states, standardize_predictors=False)
    fe, tau2, sigma2, llf = oracles.statsmodels_mixed(y, _design(X, years), states)
    got = np.r_[fit.beta0, list(fit.lam.values()), list(fit.beta1.values())]
    assert np.abs(got - fe).max() < 1e-4
    assert fit.tau2 == pytest.approx(tau2, rel=1e-3) and fit.sigma2 == pytest.approx(sigma2, rel=1e-3)
    assert fit.loglik >= llf - 1e-6


@settings(max_examples=20)
@given(st.integers(0, 10 ** 6), st.floats(0.0, 3.0))
def test_likelihood_trace_and_gradient(seed, tau2):
    y, X, years, states = _panel(seed, n_states=20, tau2=tau2)
    fit = fit_mixed_model(y, X, years, states)
    tr = fit.loglik_trace
    assert all(b >= a - 1e-9 for a, b in zip(tr, tr[1:]))
    assert fit.tau2 >= 0 and fit.sigma2 > 0
    if fit.tau2 > 0:
        assert abs(fit.gradient) < 1e-6


def test_predictors_standardized_before_fit():
    y, X, years, states = _panel(1)
    a = fit_mixed_model(y, 7 * X + 3, years, states)
    b = fit_mixed_model(y, X, years, states, standardize_predictors=False)
    assert list(a.beta1.values()) == pytest.approx(list(b.beta1.values()), abs=1e-8)


def test_mixed_model_errors():
    y, X, years, states = _panel(0, n_states=5)
    with pytest.raises(np.linalg.LinAlgError):
        fit_mixed_model(y, np.column_stack([X[:, 0], X[:, 0]]), years, states)
    with pytest.raises(ValueError):
        fit_mixed_model(y[:-1], X[:-1], years[:-1], np.r_[states[:-6], np.arange(100, 105)])


def test_lrt_nested():
    y, X, years, states = _panel(2)
    full = fit_mixed_model(y, X, years, states)
    red = fit_mixed_model(y, X[:, :1], years, states, predictors=["x1"])
    stat, p = lrt(full, red)
    assert stat > 20 and p < 1e-5


def test_stepwise_selects_generating_feature():
    rng = np.random.default_rng(5)
    y, _, years, states = _panel(5, beta=(0.0,))
    X = rng.standard_normal((len(y), 4))
    y = y + 0.8 * X[:, 0]
    res = stepwise_select(y, X, years, states, ["f1", "f2", "f3", "f4"])
    assert res.selected == ["f1"] and res.steps[0][:2] == ("add", "f1")


def test_stepwise_keeps_time_interaction():
    rng = np.random.default_rng(6)
    y, _, years, states = _panel(6, beta=(0.0,))
    X = rng.standard_normal((len(y), 3))
    t = years - 2009
    y = y + (0.3 + 0.4 * t) * standardize(X)[:, 0]
    res = stepwise_select(y, X, years, states, ["f1", "f2", "f3"])
    assert "f1" in res.selected and res.interactions == ["f1"]
    assert res.fit.beta2["f1:t"] == pytest.approx(0.4, abs=0.1)


def test_stepwise_pure_noise_usually_empty():
    y, _, years, states = _panel(9, beta=(0.0,))
    X = np.random.default_rng(9).standard_normal((len(y), 3))
    res = stepwise_select(y, X, years, states, ["a", "b", "c"])
    assert res.fit.predictors == res.selected
    assert len(res.selected) <= 1


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="50 groups cannot pin tau2 to 25% in 90% of fits; see decisions ledger")
def test_variance_components_within_quarter():
    ok = 0
    for r in range(100):
        y, X, years, states = _panel(1000 + r)
        fit = fit_mixed_model(y, X, years, states, standardize_predictors=False)
        ok += abs(fit.tau2 - 1.0) <= 0.25 and abs(fit.sigma2 - 0.5) <= 0.125
    assert ok >= 90
