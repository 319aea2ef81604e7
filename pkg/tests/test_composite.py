from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critval.composite import (
    BUILTIN_SCHEMES,
    CAP_RULES,
    EQUAL,
    V2_0,
    BehaviorSignals,
    CompleteCase,
    Impute,
    ProportionalReweight,
    SchemeError,
    WeightScheme,
    apply_caps,
    composite,
    get_scheme,
    load_scheme,
    parse_policy,
    scheme_validate,
)
from critval.dataset import DIMS, Dim, phase1_reference_totals
from critval.reproduce import round2

from conftest import make_record


def S(*vals):
    return dict(zip(DIMS, vals))


def test_table_examples():
    assert round2(composite(S(3, 3, 3, 4, 4, 5, 3), V2_0).exact) == "3.45"
    assert round2(composite(S(1, 1, 1, 1, 2, 2, 2), V2_0).exact) == "1.25"
    assert composite(S(3, 3, 3, 3, None, 3, 3), BUILTIN_SCHEMES["d3_boosted_30"]).exact == 3


def test_all_fixture_totals(phase1):
    reference = phase1_reference_totals()
    for r in phase1:
        assert round2(composite(r.scores, V2_0).exact) == reference[r.id][0], r.id


def test_proportional_reweight_by_hand():
    c = composite(S(4, 2, 4, 2, None, 4, 2), V2_0)
    by_hand = (Fraction(20, 90) * 4 + Fraction(20, 90) * 2 + Fraction(20, 90) * 4
               + Fraction(15, 90) * 2 + Fraction(10, 90) * 4 + Fraction(5, 90) * 2)
    assert c.exact == by_hand
    assert sum(c.effective_weights.values()) == 1
    assert c.missing == frozenset({Dim.D5})


def test_policies():
    scores = S(4, 2, 4, 2, None, 4, 2)
    assert composite(scores, V2_0, CompleteCase()).excluded
    # zero weight on a missing dimension does not exclude
    assert not composite(scores, BUILTIN_SCHEMES["conversion_informed"], CompleteCase()).excluded
    imp = composite(scores, V2_0, Impute(3))
    assert imp.exact == Fraction(20 * 4 + 20 * 2 + 20 * 4 + 15 * 2 + 10 * 3 + 10 * 4 + 5 * 2, 100)
    with pytest.raises(ValueError):
        Impute(6)
    with pytest.raises(SchemeError):
        composite(S(None, None, 3, 3, 3, 3, 3), WeightScheme("x", {"D1": 50, "D2": 50}))
    assert parse_policy("impute:3").value == 3
    assert isinstance(parse_policy("complete-case"), CompleteCase)


def test_scheme_validation():
    rep = scheme_validate(EQUAL)
    assert rep.ok and [w.message for w in rep.warnings] == ["sum 98, normalized"]
    assert len(scheme_validate(BUILTIN_SCHEMES["conversion_informed"])) == 0
    bad = scheme_validate(WeightScheme("neg", {"D1": -5, "D2": 105}))
    assert [f.code for f in bad.errors] == ["negative_weight"]
    assert [f.code for f in scheme_validate(WeightScheme("z", {})).errors] == ["zero_sum"]


def test_scheme_io(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"name": "mine", "weights": {"D1": 0.5, "D3": 0.5}}')
    s = load_scheme(p)
    assert s.weights[Dim.D1] == Fraction(1, 2) and s.weights[Dim.D7] == 0
    assert get_scheme(str(p)).name == "mine"
    assert get_scheme("v2.0") is V2_0
    with pytest.raises(SchemeError):
        get_scheme("nope")


score = st.one_of(st.none(), st.integers(1, 5))
scores_st = st.lists(score, min_size=7, max_size=7).filter(lambda s: any(v is not None for v in s))


@given(scores_st, st.sampled_from(list(BUILTIN_SCHEMES.values())), st.integers(1, 9))
@settings(max_examples=200)
def test_scaling_and_bounds(vals, scheme, k):
    scores = S(*vals)
    try:
        c = composite(scores, scheme)
    except SchemeError:
        return
    assert composite(scores, scheme.scaled(k)).exact == c.exact
    present = [scores[d] for d in c.effective_weights]
    assert min(present) <= c.exact <= max(present)


@given(st.lists(st.integers(1, 5), min_size=7, max_size=7), st.sampled_from(list(BUILTIN_SCHEMES.values())),
       st.integers(1, 5))
def test_policies_agree_without_missing(vals, scheme, v):
    scores = S(*vals)
    plain = sum((w * scores[d] for d, w in scheme.normalized().items()), Fraction(0))
    assert composite(scores, scheme).exact == plain
    assert composite(scores, scheme, Impute(v)).exact == plain
    assert composite(scores, scheme, CompleteCase()).exact == plain


# ---------------------------------------------------------------- caps

def _capped(scores, signals, scheme=V2_0):
    return apply_caps(scores, composite(scores, scheme).exact, signals, scheme)


def test_no_signals_no_caps():
    scores = S(3, 3, 4, 3, 3, 3, 3)
    c = _capped(scores, BehaviorSignals())
    assert c.applied_rules == () and c.capped_total == c.original_total and c.capped_d3 == 4


def test_five_rejections():
    scores = S(3, 3, 3, 3, 3, 3, 3)
    c = _capped(scores, BehaviorSignals(5, True))
    assert c.capped_total == 2.0 and c.capped_d3 == 1
    assert set(c.applied_rules) == {"rejected_3_continued", "rejected_5_continued"}


def test_recompute_then_cap():
    scores = S(3, 3, 4, 3, 3, 3, 3)
    c = _capped(scores, BehaviorSignals(3, True))
    assert c.original_total == pytest.approx(3.2)
    # recomputed with D3 = 1: 3 - 0.2 * 2 = 2.6, then clamped at 2.4
    assert c.capped_d3 == 1 and c.capped_total == pytest.approx(2.4)
    low = S(1, 1, 4, 1, 1, 1, 1)
    c2 = _capped(low, BehaviorSignals(3, True))
    assert c2.capped_total == pytest.approx(1.0)


def test_streak_and_link_caps():
    scores = S(3, 3, 5, 3, 3, 3, 3)
    assert _capped(scores, BehaviorSignals(same_message_streak_days=3)).capped_d3 == 2
    assert _capped(scores, BehaviorSignals(same_message_streak_days=2)).capped_d3 == 5
    c = _capped(scores, BehaviorSignals(purchase_link_on_every_message=True))
    assert c.capped_d3 == 2 and c.capped_total == pytest.approx(3 + 0.2 * (2 - 3))
    assert [r.id for r in CAP_RULES] == ["same_message_3_days", "rejected_3_continued",
                                         "rejected_5_continued", "link_every_message"]


def test_signal_invariant():
    with pytest.raises(ValueError):
        BehaviorSignals(0, True)


signals_st = st.builds(lambda r, c, s, l: BehaviorSignals(r, c and r > 0, s, l),
                       st.integers(0, 8), st.booleans(), st.integers(0, 5), st.booleans())


@given(st.lists(st.integers(1, 5), min_size=7, max_size=7), signals_st)
@settings(max_examples=300)
def test_caps_properties(vals, sig):
    scores = S(*vals)
    c = _capped(scores, sig)
    assert c.capped_total <= c.original_total + 1e-12
    assert c.capped_d3 <= c.original_d3
    again = apply_caps(c.capped_scores, c.capped_total, sig, V2_0)
    assert again.capped_total == c.capped_total and again.capped_d3 == c.capped_d3
    more = BehaviorSignals(sig.rejection_count + 1, sig.continued_after_rejection,
                           sig.same_message_streak_days, sig.purchase_link_on_every_message)
    assert _capped(scores, more).capped_total <= c.capped_total + 1e-12
