from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from critval.dataset import Dim, deal_flag, outcome_value
from critval.stats import (
    DegenerateInputError,
    RankDeficientError,
    betainc,
    bonferroni,
    cohens_d,
    design_matrix,
    exact_permutation_p,
    logistic_fit,
    logistic_loglik,
    logistic_score,
    normal_two_sided_p,
    partial_spearman,
    rank_average_ties,
    spearman,
    t_two_sided_p,
    vif,
)

from oracles import brute_permutation_p, grid_logistic, ols_r2, random_logistic_instance, residualize_2x2


# ---------------------------------------------------------------- special functions

@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (6.0, 0.5, 0.9), (2.5, 7.0, 0.01),
                                   (30.0, 0.5, 0.999), (1.0, 1.0, 0.5), (100.0, 0.5, 0.2)])
def test_betainc_matches_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(scipy.special.betainc(a, b, x), rel=1e-10, abs=1e-14)


@given(st.floats(-30, 30), st.integers(1, 200))
@settings(max_examples=200, deadline=None)
def test_t_p_matches_scipy(t, df):
    expected = 2 * scipy.stats.t.sf(abs(t), df)
    assert t_two_sided_p(t, df) == pytest.approx(expected, rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("z", [0.0, 0.5, 1.959964, 3.0, 8.0])
def test_normal_p(z):
    assert normal_two_sided_p(z) == pytest.approx(2 * scipy.stats.norm.sf(z), rel=1e-12)


# ---------------------------------------------------------------- ranks

def test_average_ranks():
    assert rank_average_ties([10, 20, 20, 30]) == [1, 2.5, 2.5, 4]
    assert rank_average_ties([1, 5, 9, 12]) == [1, 2, 3, 4]
    with pytest.raises(ValueError):
        rank_average_ties([1.0, math.nan])


def test_phase1_d3_tie_blocks(phase1_view):
    d3 = [r.scores[Dim.D3] for r in phase1_view]
    ranks = dict(zip(d3, rank_average_ties(d3)))
    assert (d3.count(1), d3.count(2), d3.count(3)) == (5, 6, 3)
    assert ranks == {1: 3.0, 2: 8.5, 3: 13.0}


@given(st.lists(st.integers(0, 6), min_size=1, max_size=30))
def test_ranks_match_scipy(xs):
    assert rank_average_ties(xs) == pytest.approx(list(scipy.stats.rankdata(xs)))


# ---------------------------------------------------------------- spearman

def test_spearman_fixture_d3(phase1_view):
    x = [r.scores[Dim.D3] for r in phase1_view]
    y = [outcome_value(r) for r in phase1_view]
    res = spearman(x, y, bonferroni_m=7)
    assert res.rho == pytest.approx(0.679, abs=0.0005)
    assert res.p == pytest.approx(0.008, abs=0.0005)
    assert res.p_bonferroni == pytest.approx(min(1, 7 * res.p))
    ref = scipy.stats.spearmanr(x, y)
    assert res.rho == pytest.approx(ref.statistic, abs=1e-12)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-9)


def test_spearman_identity_and_errors():
    assert spearman([1, 2, 3, 4], [1, 2, 3, 4]).rho == 1.0
    with pytest.raises(DegenerateInputError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman([1, 2, 3], [1, 2])


@given(st.lists(st.tuples(st.integers(1, 5), st.integers(0, 5)), min_size=3, max_size=25))
@settings(max_examples=200)
def test_spearman_symmetric_and_matches_scipy(pairs):
    x, y = zip(*pairs)
    assume(len(set(x)) > 1 and len(set(y)) > 1)
    a, b = spearman(x, y), spearman(y, x)
    assert a.rho == b.rho
    assert a.rho == pytest.approx(scipy.stats.spearmanr(x, y).statistic, abs=1e-12)


@given(st.lists(st.tuples(st.integers(-1000, 1000), st.integers(-50, 50)), min_size=3, max_size=15),
       st.sampled_from([lambda v: v ** 3 + 7, lambda v: math.exp(v / 1000), lambda v: 2 * v - 1]))
@settings(max_examples=200)
def test_spearman_monotone_invariance(pairs, f):
    xs, ys = zip(*pairs)
    assume(len(set(xs)) > 1 and len(set(ys)) > 1)
    base = spearman(xs, ys).rho
    assert spearman([f(v) for v in xs], ys).rho == base
    assert spearman(xs, [f(v) for v in ys]).rho == base


def test_exact_permutation_against_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(6):
        n = int(rng.integers(4, 7))
        x = rng.integers(1, 4, n)
        y = rng.integers(0, 5, n)
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert exact_permutation_p(x, y) == pytest.approx(brute_permutation_p(x, y), abs=1e-12)


def test_t_approx_near_exact_for_n5():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x, y = rng.normal(size=5), rng.normal(size=5)
        t = spearman(x, y).p
        e = spearman(x, y, method="exact_permutation").p
        assert abs(t - e) < 0.2
    with pytest.raises(ValueError):
        spearman(list(range(11)), list(range(11)), method="exact_permutation")


# ---------------------------------------------------------------- bonferroni / cohen's d

def test_bonferroni():
    assert bonferroni(0.006, 7) == pytest.approx(0.042)
    assert bonferroni(0.5, 7) == 1.0
    assert bonferroni(0.004, 7) == pytest.approx(0.028)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 20))
def test_bonferroni_monotone(p1, p2, m):
    lo, hi = sorted((p1, p2))
    assert bonferroni(lo, m) <= bonferroni(hi, m) <= 1
    assert bonferroni(lo, m) <= bonferroni(lo, m + 1)


def test_cohens_d_examples(phase1_view):
    eff = cohens_d([0, 0, 2, 2], [1, 1, 3, 3])
    assert eff.d == pytest.approx((1 - 2) / math.sqrt((3 * 4 / 3 + 3 * 4 / 3) / 6))
    assert cohens_d([1, 2, 3], [1, 2, 3]).d == 0
    deal = [r.scores[Dim.D5] for r in phase1_view if deal_flag(r)]
    nodeal = [r.scores[Dim.D5] for r in phase1_view if not deal_flag(r)]
    assert sorted(deal) == [2, 2, 3]
    assert cohens_d(deal, nodeal).d == pytest.approx(-1.35, abs=0.005)
    with pytest.raises(DegenerateInputError):
        cohens_d([2, 2], [2, 2])
    with pytest.raises(DegenerateInputError):
        cohens_d([1], [2, 3])


@given(st.lists(st.integers(1, 5), min_size=2, max_size=10), st.lists(st.integers(1, 5), min_size=2, max_size=10))
def test_cohens_d_antisymmetric(a, b):
    try:
        ab = cohens_d(a, b)
    except DegenerateInputError:
        return
    assert cohens_d(b, a).d == -ab.d
    assert ab.pooled_sd >= 0
    assert math.copysign(1, ab.d) == math.copysign(1, ab.mean1 - ab.mean2) or ab.d == 0


# ---------------------------------------------------------------- partial spearman

def _orthogonal_covariate(x, y):
    rx = np.array(rank_average_ties(x)) - (len(x) + 1) / 2
    ry = np.array(rank_average_ties(y)) - (len(y) + 1) / 2
    for perm in itertools.permutations(range(1, len(x) + 1)):
        c = np.array(perm) - (len(x) + 1) / 2
        if abs(c @ rx) < 1e-12 and abs(c @ ry) < 1e-12:
            return list(perm)
    raise AssertionError("no orthogonal covariate found")


def test_partial_equals_plain_under_orthogonal_covariate():
    x = [1, 2, 3, 4, 5, 6, 7]
    y = [2, 1, 4, 3, 6, 5, 7]
    c = _orthogonal_covariate(x, y)
    assert partial_spearman(x, y, c).rho == pytest.approx(spearman(x, y).rho, abs=1e-9)


def test_partial_degenerate():
    x = [1, 2, 3, 4, 5]
    with pytest.raises(DegenerateInputError):
        partial_spearman(x, [2, 1, 4, 3, 5], [7] * 5)
    with pytest.raises(DegenerateInputError):
        partial_spearman(x, [2, 1, 4, 3, 5], x)


def test_partial_matches_two_step_oracle():
    rng = np.random.default_rng(3)
    x, y, c = rng.normal(size=12), rng.normal(size=12), rng.normal(size=12)
    rx, ry, rc = (list(scipy.stats.rankdata(v)) for v in (x, y, c))
    ex, ey = residualize_2x2(rx, rc), residualize_2x2(ry, rc)
    expected = float(np.corrcoef(ex, ey)[0, 1])
    res = partial_spearman(x, y, c)
    assert res.rho == pytest.approx(expected, abs=1e-9)
    t = expected * math.sqrt(9 / (1 - expected ** 2))
    assert res.p == pytest.approx(2 * scipy.stats.t.sf(abs(t), 9), rel=1e-8)
    assert res.df == 9 and res.n == 12


# ---------------------------------------------------------------- logistic regression

def test_logistic_symmetric_zero_slope():
    x = [-2, -1, 1, 2, -2, -1, 1, 2]
    y = [0, 1, 0, 1, 1, 0, 1, 0]
    X, names = design_matrix({"x": x})
    fit = logistic_fit(X, y, names)
    assert fit.coef("x") == pytest.approx(0, abs=1e-9)
    assert fit.odds_ratios["x"] == pytest.approx(1.0)


def test_logistic_grid_oracle_single_instance():
    rng = np.random.default_rng(21)
    x, y, fit = random_logistic_instance(rng)
    b0, b1 = grid_logistic(x, y)
    assert fit.coefficients[0] == pytest.approx(b0, abs=0.01)
    assert fit.coefficients[1] == pytest.approx(b1, abs=0.01)


def test_logistic_properties():
    rng = np.random.default_rng(8)
    x1, x2 = rng.normal(size=40), rng.normal(size=40)
    y = (rng.random(40) < 1 / (1 + np.exp(-(0.5 * x1 - x2)))).astype(float)
    X, names = design_matrix({"a": x1, "b": x2})
    fit = logistic_fit(X, y, names)
    assert fit.converged
    assert np.max(np.abs(logistic_score(X, y, fit.coefficients))) < 1e-6
    assert all(b >= a for a, b in zip(fit.loglik_history, fit.loglik_history[1:]))
    assert fit.aic == 2 * fit.k - 2 * fit.log_likelihood
    for name in ("a", "b"):
        assert fit.ci_low[name] <= fit.odds_ratios[name] <= fit.ci_high[name]
    # finite-difference check of the analytic score
    h = 1e-5
    g = logistic_score(X, y, fit.coefficients + 0.1)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (logistic_loglik(X, y, fit.coefficients + 0.1 + e)
              - logistic_loglik(X, y, fit.coefficients + 0.1 - e)) / (2 * h)
        assert fd == pytest.approx(g[j], rel=1e-4, abs=1e-8)
    sm = scipy.stats  # keep scipy in use for the p-value identity
    z = fit.coefficients / fit.standard_errors
    assert fit.p_values == pytest.approx(2 * sm.norm.sf(np.abs(z)), rel=1e-9)


def test_logistic_errors_and_flags():
    X, names = design_matrix({"a": [1, 2, 3, 4, 5], "dup": [1, 2, 3, 4, 5]})
    with pytest.raises(RankDeficientError) as info:
        logistic_fit(X, [0, 1, 0, 1, 1], names)
    assert info.value.column == "dup"
    X, names = design_matrix({"a": [1, 2, 3, 4]})
    with pytest.raises(DegenerateInputError):
        logistic_fit(X, [1, 1, 1, 1], names)
    sep = logistic_fit(X, [0, 0, 1, 1], names)
    assert not sep.converged and any("separation" in n for n in sep.notes)


# ---------------------------------------------------------------- VIF

def test_vif_examples():
    a = np.array([1, -1, 1, -1, 1, -1, 1, -1], float)
    b = np.array([1, 1, -1, -1, 1, 1, -1, -1], float)
    rep = vif(np.column_stack([a, b]), ["a", "b"])
    assert rep.vif["a"] == pytest.approx(1.0, abs=1e-9) and rep.vif["b"] == pytest.approx(1.0, abs=1e-9)
    col = vif(np.column_stack([a + np.arange(8), 2 * (a + np.arange(8))]), ["p", "q"])
    assert math.isinf(col.vif["p"]) and math.isinf(col.vif["q"])


def test_vif_matches_normal_equations():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 3))
    X[:, 2] += 0.5 * X[:, 0]
    rep = vif(X, ["a", "b", "c"])
    for j, name in enumerate("abc"):
        others = [X[:, k] for k in range(3) if k != j]
        assert rep.vif[name] == pytest.approx(1 / (1 - ols_r2(X[:, j], others)), rel=1e-6)
        assert rep.vif[name] >= 1
