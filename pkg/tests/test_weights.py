from __future__ import annotations

import itertools
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from critval.composite import BUILTIN_SCHEMES, EQUAL, V2_0, CompleteCase, Impute, WeightScheme
from critval.dataset import DIMS, Dim, outcome_value
from critval.stats import DegenerateInputError
from critval.weights import (
    CVConfig,
    SearchConfig,
    compare_schemes,
    enumerate_grid,
    evaluate_scheme,
    fold_sizes,
    grid_rhos,
    search_weights,
    temporal_cv,
    temporal_folds,
)

from conftest import make_dataset
from synth import noise, planted_d3


def _oracle_rho(d, weights):
    """Composites as rounded floats, then scipy's Spearman."""
    xs = [round(sum(w * r.scores[dim] for w, dim in zip(weights, DIMS)) / sum(weights), 9) for r in d]
    return scipy.stats.spearmanr(xs, [outcome_value(r) for r in d]).statistic


def test_v2_fixture(phase1_view):
    ev = evaluate_scheme(phase1_view, V2_0)
    assert ev.rho == pytest.approx(0.355, abs=0.0005) and ev.p == pytest.approx(0.213, abs=0.0005)
    assert ev.n == 14 and ev.policy == "proportional"


@pytest.mark.parametrize("name", list(BUILTIN_SCHEMES))
def test_builtin_schemes_match_independent_oracle(phase1_view, name):
    s = BUILTIN_SCHEMES[name]
    assert evaluate_scheme(phase1_view, s).rho == pytest.approx(
        _oracle_rho(phase1_view, [int(w) for w in s.vector()]), abs=1e-12)


@pytest.mark.xfail(strict=True, reason="reference value does not follow from the fixture scores")
def test_conversion_informed_reference_value(phase1_view):
    ev = evaluate_scheme(phase1_view, BUILTIN_SCHEMES["conversion_informed"])
    assert ev.rho == pytest.approx(0.607, abs=0.005)


@pytest.mark.xfail(strict=True, reason="d5_removed outranks d3_boosted_30 on the fixture scores")
def test_reference_ordering(phase1_view):
    names = [e.name for e in compare_schemes(phase1_view, list(BUILTIN_SCHEMES.values()))]
    assert names == list(BUILTIN_SCHEMES)


def test_compare_schemes_edges(phase1_view):
    assert len(compare_schemes(phase1_view, [V2_0])) == 1
    twin = WeightScheme("a_copy", V2_0.weights)
    rows = compare_schemes(phase1_view, [V2_0, twin])
    assert rows[0].rho == rows[1].rho and [r.name for r in rows] == ["a_copy", "v2.0_current"]


def test_degenerate_composites():
    d = make_dataset([(f"r{i}", [3] * 7, f"T{i}") for i in range(4)])
    with pytest.raises(DegenerateInputError):
        evaluate_scheme(d, V2_0)
    with pytest.raises(DegenerateInputError):
        evaluate_scheme(make_dataset([]), V2_0)


def test_scaling_invariance(phase1_view):
    for s in BUILTIN_SCHEMES.values():
        assert evaluate_scheme(phase1_view, s).rho == evaluate_scheme(phase1_view, s.scaled(2)).rho


# ---------------------------------------------------------------- grid search

def test_grid_enumeration():
    W = enumerate_grid(SearchConfig(step=50))
    assert W.shape == (28, 7) and np.all(W.sum(axis=1) == 100)
    assert [tuple(r) for r in W] == sorted(tuple(r) for r in W)
    assert len(enumerate_grid(SearchConfig(step=5))) == 230230
    with pytest.raises(ValueError):
        SearchConfig(step=7)
    with pytest.raises(ValueError):
        enumerate_grid(SearchConfig(step=10, bounds={d: (20, 30) for d in DIMS}))


def test_search_pinned_to_v2(phase1_view):
    pins = {d: (int(w), int(w)) for d, w in V2_0.weights.items()}
    res = search_weights(phase1_view, SearchConfig(step=5, bounds=pins))
    assert res.scheme.vector() == V2_0.vector() and res.n_candidates == 1
    assert res.evaluation.rho == pytest.approx(0.355, abs=0.0005)


def test_search_step_100_picks_d3(phase1_view):
    res = search_weights(phase1_view, SearchConfig(step=100))
    assert res.scheme.weights[Dim.D3] == 100
    assert res.evaluation.rho == pytest.approx(0.679, abs=0.0005)


def test_search_matches_enumeration_oracle():
    rng = np.random.default_rng(12)
    d = make_dataset([(f"s{i}", list(rng.integers(1, 6, 7)), f"T{rng.integers(0, 6)}") for i in range(6)])
    res = search_weights(d, SearchConfig(step=50))
    best, best_vec = -2.0, None
    for vec in itertools.product(range(0, 101, 50), repeat=7):
        if sum(vec) != 100:
            continue
        xs = [sum(w * r.scores[dim] for w, dim in zip(vec, DIMS)) for r in d]
        if len(set(xs)) < 2:
            continue
        rho = round(scipy.stats.spearmanr(xs, [outcome_value(r) for r in d]).statistic, 12)
        if rho > best:  # strict: first (lexicographically smallest) maximum wins
            best, best_vec = rho, vec
    assert tuple(int(w) for w in res.scheme.vector()) == best_vec
    assert res.evaluation.rho == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("policy", [None, CompleteCase(), Impute(3), Impute(Fraction(5, 2))])
def test_grid_rhos_match_scalar_path(policy):
    rng = np.random.default_rng(2)
    rows = []
    for i in range(12):
        sc = [int(v) for v in rng.integers(1, 6, 7)]
        if i % 3 == 0:
            sc[int(rng.integers(0, 7))] = None
        rows.append((f"g{i}", sc, f"T{rng.integers(0, 6)}"))
    d = make_dataset(rows)
    W = enumerate_grid(SearchConfig(step=25))
    kwargs = {} if policy is None else {"policy": policy}
    fast = grid_rhos(d.records, W, **kwargs)
    for i in range(0, len(W), 7):
        s = WeightScheme("w", dict(zip(DIMS, map(int, W[i]))))
        try:
            slow = evaluate_scheme(d, s, **kwargs).rho
        except Exception:
            slow = float("nan")
        if np.isnan(slow):
            assert np.isnan(fast[i])
        else:
            assert fast[i] == pytest.approx(slow, abs=1e-12)


def test_search_deterministic(phase1_view):
    a = search_weights(phase1_view, SearchConfig(step=10))
    b = search_weights(phase1_view, SearchConfig(step=10))
    assert a.scheme == b.scheme and a.evaluation.rho == b.evaluation.rho


# ---------------------------------------------------------------- temporal CV

def test_fold_sizes():
    assert fold_sizes(4, 2) == [2, 2]
    assert fold_sizes(14, 4) == [4, 4, 3, 3]


@given(st.integers(4, 60), st.integers(2, 8))
@settings(max_examples=100)
def test_fold_partition(n, k):
    if n < k:
        return
    d = make_dataset([(f"r{i:02d}", [1] * 7, "T1") for i in range(n)])
    # scramble chronological order so folds must follow chrono_index, not storage order
    perm = np.random.default_rng(n * 31 + k).permutation(n)
    d = replace(d, records=tuple(replace(r, chrono_index=int(perm[i])) for i, r in enumerate(d.records)))
    folds = temporal_folds(d, k)
    flat = [i for f in folds for i in f]
    assert sorted(flat) == sorted(d.ids) and len(set(flat)) == n
    chrono = {r.id: r.chrono_index for r in d}
    assert [chrono[i] for i in flat] == sorted(chrono.values())
    sizes = [len(f) for f in folds]
    assert sizes == sorted(sizes, reverse=True) and max(sizes) - min(sizes) <= 1


def test_cv_planted_signal():
    res = temporal_cv(planted_d3(40, 7), CVConfig(folds=4))
    assert res.n_valid == 4 and res.wins == 4
    for f in res.folds:
        assert f.trained_rho == pytest.approx(1.0)
        w = f.trained.weights
        assert w[Dim.D3] == max(w.values())


def test_cv_small_fold_flagged():
    d = make_dataset([(f"r{i}", [1 + i % 5] * 7, f"T{i % 6}") for i in range(8)]
                     + [(f"z{i}", [3] * 7, "T2") for i in range(2)])
    res = temporal_cv(d, CVConfig(folds=5))
    assert any(not f.ok for f in res.folds)
    assert res.n_valid == sum(1 for f in res.folds if f.ok)
    with pytest.raises(ValueError):
        temporal_cv(make_dataset([(f"r{i}", [1] * 7, "T1") for i in range(5)]), CVConfig(folds=4))


def test_cv_noise_near_zero():
    deltas = [temporal_cv(noise(40, s)).mean_delta for s in range(20)]
    assert abs(float(np.mean(deltas))) < 0.1
