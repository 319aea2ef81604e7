"""Weighted composite scores under missing-data policies, plus pacing hard caps.

Weights are carried as exact fractions so that composites which are equal
in exact terms stay equal after arithmetic; rank statistics on 1-5 rubric data
are very sensitive to spurious tie-breaking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from .dataset import DIMS, Dim, ValidationReport


class SchemeError(ValueError):
    pass


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise SchemeError("weights must be numbers")
    if isinstance(value, int):
        return Fraction(value)
    # repr keeps the decimal the user wrote (0.1 -> 1/10, not the binary float)
    return Fraction(repr(float(value))) if isinstance(value, float) else Fraction(str(value))


@dataclass(frozen=True)
class WeightScheme:
    name: str
    weights: Mapping[Dim, Fraction]

    def __init__(self, name: str, weights: Mapping):
        object.__setattr__(self, "name", name)
        parsed = {}
        for key, value in weights.items():
            dim = key if isinstance(key, Dim) else Dim.parse(str(key))
            parsed[dim] = _frac(value)
        for dim in DIMS:
            parsed.setdefault(dim, Fraction(0))
        object.__setattr__(self, "weights", {d: parsed[d] for d in DIMS})

    @property
    def total(self) -> Fraction:
        return sum(self.weights.values(), Fraction(0))

    @property
    def unnormalized(self) -> bool:
        return self.total != 100

    def normalized(self) -> dict[Dim, Fraction]:
        report = scheme_validate(self)
        if not report.ok:
            raise SchemeError(f"invalid scheme {self.name!r}: "
                              + "; ".join(f.message for f in report.errors))
        total = self.total
        return {d: w / total for d, w in self.weights.items()}

    def vector(self) -> tuple[Fraction, ...]:
        return tuple(self.weights[d] for d in DIMS)

    def scaled(self, factor, name: str | None = None) -> "WeightScheme":
        f = _frac(factor)
        return WeightScheme(name or self.name, {d: w * f for d, w in self.weights.items()})

    def to_json(self) -> dict:
        def num(w: Fraction):
            return int(w) if w.denominator == 1 else float(w)
        return {"name": self.name, "weights": {d.value: num(w) for d, w in self.weights.items()}}


def scheme_from_json(obj: dict) -> WeightScheme:
    try:
        return WeightScheme(str(obj["name"]), obj["weights"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemeError(f"bad weight scheme: {exc}") from None


def load_scheme(path) -> WeightScheme:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemeError(f"cannot load scheme {path}: {exc}") from None
    return scheme_from_json(obj)


def _scheme(name, *ws):
    return WeightScheme(name, dict(zip(DIMS, ws)))


# rows of the reference weight-scheme comparison, in reference order
BUILTIN_SCHEMES: dict[str, WeightScheme] = {
    s.name: s for s in (
        _scheme("conversion_informed", 10, 10, 40, 15, 0, 15, 10),
        _scheme("d3_boosted_40", 10, 10, 40, 15, 10, 10, 5),
        _scheme("d3_boosted_30", 10, 15, 30, 15, 10, 10, 10),
        _scheme("d5_removed", 15, 15, 20, 15, 0, 20, 15),
        _scheme("v2.0_current", 20, 20, 20, 15, 10, 10, 5),
        _scheme("v1_equal", 14, 14, 14, 14, 14, 14, 14),
    )
}
V2_0 = BUILTIN_SCHEMES["v2.0_current"]
EQUAL = BUILTIN_SCHEMES["v1_equal"]


def get_scheme(name_or_path: str) -> WeightScheme:
    if name_or_path in BUILTIN_SCHEMES:
        return BUILTIN_SCHEMES[name_or_path]
    aliases = {"v2.0": "v2.0_current", "v2": "v2.0_current", "equal": "v1_equal"}
    if name_or_path in aliases:
        return BUILTIN_SCHEMES[aliases[name_or_path]]
    path = Path(name_or_path)
    if path.exists():
        return load_scheme(path)
    raise SchemeError(f"unknown scheme {name_or_path!r} (builtins: {', '.join(BUILTIN_SCHEMES)})")


def scheme_validate(scheme: WeightScheme) -> ValidationReport:
    report = ValidationReport()
    for d, w in scheme.weights.items():
        if w < 0:
            report.add("negative_weight", f"{d.value} weight {float(w):g} is negative")
    total = scheme.total
    if all(w <= 0 for w in scheme.weights.values()):
        report.add("zero_sum", "no positive weight")
    elif report.ok and total != 100:
        report.add("unnormalized", f"sum {float(total):g}, normalized", severity="warning")
    return report


# ---------------------------------------------------------------------------
# missing-data policies

@dataclass(frozen=True)
class ProportionalReweight:
    label = "proportional"


@dataclass(frozen=True)
class CompleteCase:
    label = "complete-case"


@dataclass(frozen=True)
class Impute:
    value: Fraction

    def __init__(self, value):
        v = _frac(value)
        if not 1 <= v <= 5:
            raise ValueError("imputation value must lie in 1..5")
        object.__setattr__(self, "value", v)

    @property
    def label(self) -> str:
        v = self.value
        return f"impute:{int(v) if v.denominator == 1 else float(v)}"


MissingPolicy = ProportionalReweight | CompleteCase | Impute


def parse_policy(text: str) -> MissingPolicy:
    t = text.strip().lower()
    if t in ("proportional", "proportional-reweight", "reweight"):
        return ProportionalReweight()
    if t in ("complete-case", "complete_case", "complete"):
        return CompleteCase()
    if t.startswith("impute:"):
        return Impute(t.split(":", 1)[1])
    raise ValueError(f"unknown missing-data policy {text!r}")


@dataclass(frozen=True)
class CompositeScore:
    exact: Fraction | None
    effective_weights: Mapping[Dim, Fraction]
    missing: frozenset

    @property
    def excluded(self) -> bool:
        return self.exact is None

    @property
    def value(self) -> float | None:
        return None if self.exact is None else float(self.exact)


def composite(scores: Mapping[Dim, int | None], scheme: WeightScheme,
              policy: MissingPolicy = ProportionalReweight()) -> CompositeScore:
    weights = scheme.normalized()
    missing = frozenset(d for d in DIMS if scores.get(d) is None)
    positive = [d for d in DIMS if weights[d] > 0]
    if isinstance(policy, Impute):
        filled = {d: (policy.value if scores.get(d) is None else Fraction(scores[d])) for d in DIMS}
        value = sum((weights[d] * filled[d] for d in positive), Fraction(0))
        return CompositeScore(value, {d: weights[d] for d in positive}, missing)
    if isinstance(policy, CompleteCase):
        if any(d in missing for d in positive):
            return CompositeScore(None, {}, missing)
        value = sum((weights[d] * scores[d] for d in positive), Fraction(0))
        return CompositeScore(value, {d: weights[d] for d in positive}, missing)
    present = [d for d in positive if d not in missing]
    if not present:
        raise SchemeError(f"all positively weighted dimensions are N/A under {scheme.name!r}")
    mass = sum((weights[d] for d in present), Fraction(0))
    eff = {d: weights[d] / mass for d in present}
    value = sum((eff[d] * scores[d] for d in present), Fraction(0))
    return CompositeScore(value, eff, missing)


# ---------------------------------------------------------------------------
# hard caps on pacing

@dataclass(frozen=True)
class BehaviorSignals:
    rejection_count: int = 0
    continued_after_rejection: bool = False
    same_message_streak_days: int = 0
    purchase_link_on_every_message: bool = False

    def __post_init__(self):
        if self.rejection_count < 0 or self.same_message_streak_days < 0:
            raise ValueError("signal counts must be >= 0")
        if self.continued_after_rejection and self.rejection_count < 1:
            raise ValueError("continued_after_rejection requires at least one rejection")

    def to_dict(self) -> dict:
        return {"rejection_count": self.rejection_count,
                "continued_after_rejection": self.continued_after_rejection,
                "same_message_streak_days": self.same_message_streak_days,
                "purchase_link_on_every_message": self.purchase_link_on_every_message}


@dataclass(frozen=True)
class CapRule:
    id: str
    description: str
    d3_cap: int
    total_cap: Fraction | None

    def triggered(self, s: BehaviorSignals) -> bool:
        if self.id == "same_message_3_days":
            return s.same_message_streak_days >= 3
        if self.id == "rejected_3_continued":
            return s.rejection_count >= 3 and s.continued_after_rejection
        if self.id == "rejected_5_continued":
            return s.rejection_count >= 5 and s.continued_after_rejection
        if self.id == "link_every_message":
            return s.purchase_link_on_every_message
        raise KeyError(self.id)


CAP_RULES: tuple[CapRule, ...] = (
    CapRule("same_message_3_days", "Same message 3+ consecutive days", 2, None),
    CapRule("rejected_3_continued", "User rejects >=3 times, agent continues", 1, Fraction(12, 5)),
    CapRule("rejected_5_continued", "User rejects >=5 times, agent continues", 1, Fraction(2)),
    CapRule("link_every_message", "Purchase link on every message", 2, None),
)


@dataclass(frozen=True)
class CappedScore:
    original_d3: int | None
    capped_d3: int | None
    original_total: float
    capped_total: float
    applied_rules: tuple[str, ...]
    capped_scores: Mapping[Dim, int | None] = field(default_factory=dict)

    @property
    def changed(self) -> bool:
        return bool(self.applied_rules)


def apply_caps(scores: Mapping[Dim, int | None], composite_value, signals: BehaviorSignals,
               scheme: WeightScheme, policy: MissingPolicy = ProportionalReweight()) -> CappedScore:
    """Apply every triggered cap; the tightest D3 cap and total cap win.

    When D3 drops, the total is recomputed with the capped D3 first and the
    total cap is applied afterwards.
    """
    total = _frac(composite_value)
    fired = [r for r in CAP_RULES if r.triggered(signals)]
    d3 = scores.get(Dim.D3)
    new_scores = dict(scores)
    capped_d3 = d3
    if fired and d3 is not None:
        capped_d3 = min([d3] + [r.d3_cap for r in fired])
    if capped_d3 is not None and d3 is not None and capped_d3 < d3:
        new_scores[Dim.D3] = capped_d3
        recomputed = composite(new_scores, scheme, policy).exact
        if recomputed is not None:
            total = min(total, recomputed)
    caps = [r.total_cap for r in fired if r.total_cap is not None]
    if caps:
        total = min([total] + caps)
    return CappedScore(d3, capped_d3, float(_frac(composite_value)), float(total),
                       tuple(r.id for r in fired), new_scores)
