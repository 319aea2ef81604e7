"""Three-layer release gate: L3 safety cases, L2 rubric quality, L1 business metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .composite import (
    V2_0,
    BehaviorSignals,
    MissingPolicy,
    ProportionalReweight,
    WeightScheme,
    apply_caps,
    composite,
)
from .dataset import DIMS, Dataset, Dim


class Decision(str, Enum):
    GO = "GO"
    NO_GO = "NO-GO"


class P0FormatError(ValueError):
    pass


@dataclass(frozen=True)
class P0Case:
    id: str
    passed: bool
    description: str = ""


@dataclass(frozen=True)
class L3Result:
    passed: int
    total: int
    failed_ids: tuple[str, ...]

    @property
    def pass_rate(self) -> float:
        return self.passed / self.total

    @property
    def decision(self) -> Decision:
        return Decision.GO if self.passed == self.total else Decision.NO_GO

    def to_dict(self) -> dict:
        return {"passed": self.passed, "total": self.total, "pass_rate": self.pass_rate,
                "failed_ids": list(self.failed_ids), "decision": self.decision.value}


def l3_evaluate(cases: Sequence[P0Case]) -> L3Result:
    if not cases:
        raise ValueError("no P0 cases supplied")
    ids = [c.id for c in cases]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise ValueError(f"duplicate P0 case ids: {', '.join(dup)}")
    failed = tuple(c.id for c in cases if not c.passed)
    return L3Result(len(cases) - len(failed), len(cases), failed)


@dataclass(frozen=True)
class L2Result:
    scheme: str
    n: int
    dim_means: Mapping[Dim, float | None]
    weighted_total: float | None
    capped_ids: tuple[str, ...] = ()

    @property
    def d3_mean(self) -> float | None:
        return self.dim_means.get(Dim.D3)

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "n": self.n,
                "dim_means": {d.value: v for d, v in self.dim_means.items()},
                "weighted_total": self.weighted_total, "capped_ids": list(self.capped_ids)}


def l2_evaluate(d: Dataset, scheme: WeightScheme = V2_0,
                policy: MissingPolicy = ProportionalReweight(),
                signals: Mapping[str, BehaviorSignals] | None = None) -> L2Result:
    """Per-dimension means and the mean composite.

    With ``signals``, the pacing caps are applied per conversation and the
    capped D3 feeds both the D3 mean and the composite.
    """
    if len(d) == 0:
        raise ValueError("empty dataset")
    signals = signals or {}
    unknown = sorted(set(signals) - set(d.ids))
    if unknown:
        raise ValueError(f"signals for unknown conversations: {', '.join(unknown)}")
    sums = {dim: Fraction(0) for dim in DIMS}
    counts = {dim: 0 for dim in DIMS}
    totals: list[Fraction] = []
    capped = []
    for r in d.records:
        scores = dict(r.scores)
        c = composite(scores, scheme, policy)
        total = c.exact
        if r.id in signals and total is not None:
            cs = apply_caps(scores, total, signals[r.id], scheme, policy)
            if cs.changed:
                capped.append(r.id)
                scores = dict(cs.capped_scores)
                total = Fraction(cs.capped_total)
        for dim in DIMS:
            if scores.get(dim) is not None:
                sums[dim] += scores[dim]
                counts[dim] += 1
        if total is not None:
            totals.append(total)
    means = {dim: (float(sums[dim] / counts[dim]) if counts[dim] else None) for dim in DIMS}
    wt = float(sum(totals, Fraction(0)) / len(totals)) if totals else None
    return L2Result(scheme.name, len(d), means, wt, tuple(capped))


@dataclass(frozen=True)
class L1Metrics:
    values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.values.items():
            if not math.isfinite(float(v)):
                raise ValueError(f"L1 metric {k!r} is not finite")

    def to_dict(self) -> dict:
        return {k: float(self.values[k]) for k in sorted(self.values)}


@dataclass(frozen=True)
class GateDecision:
    l3: L3Result
    l2: L2Result | None
    l1: L1Metrics | None
    verdict: Decision
    rationale: str

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "rationale": self.rationale,
                "l3": self.l3.to_dict(), "l2": self.l2.to_dict() if self.l2 else None,
                "l1": self.l1.to_dict() if self.l1 else None}


def _fmt(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def decide(l3: L3Result, l2: L2Result | None = None, l1: L1Metrics | None = None) -> GateDecision:
    if l3.decision is Decision.NO_GO:
        why = (f"P0 pass rate {l3.passed}/{l3.total}; failed: {', '.join(l3.failed_ids)}. "
               "Safety failures block release regardless of quality scores.")
        return GateDecision(l3, l2, l1, Decision.NO_GO, why)
    if l2 is None or all(v is None for v in l2.dim_means.values()):
        why = f"all {l3.total} P0 cases pass; warning: no L2 scores available"
    else:
        why = (f"all {l3.total} P0 cases pass; D3 mean {_fmt(l2.d3_mean)}, "
               f"weighted total {_fmt(l2.weighted_total)} ({l2.scheme})")
    return GateDecision(l3, l2, l1, Decision.GO, why)


def p0_from_json(obj) -> tuple[str, list[P0Case]]:
    if not isinstance(obj, dict) or not isinstance(obj.get("cases"), list):
        raise P0FormatError("P0 file must be an object with a 'cases' list")
    cases = []
    for i, c in enumerate(obj["cases"]):
        if not isinstance(c, dict) or "id" not in c or not isinstance(c.get("pass"), bool):
            raise P0FormatError(f"case {i}: needs 'id' and boolean 'pass'")
        cases.append(P0Case(str(c["id"]), c["pass"], str(c.get("description", ""))))
    return str(obj.get("config", "")), cases


def load_p0(path) -> tuple[str, list[P0Case]]:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise P0FormatError(f"{path}: invalid JSON ({exc.msg})") from None
    return p0_from_json(obj)


# ---------------------------------------------------------------------------
# cycle comparison

@dataclass(frozen=True)
class CycleColumn:
    config: str
    decision: GateDecision
    d3_delta: float | None
    total_delta: float | None

    def to_dict(self) -> dict:
        return {"config": self.config, **self.decision.to_dict(),
                "d3_delta": self.d3_delta, "weighted_total_delta": self.total_delta}


@dataclass(frozen=True)
class CycleReport:
    baseline: str
    columns: tuple[CycleColumn, ...]

    def to_dict(self) -> dict:
        return {"baseline": self.baseline, "configs": [c.to_dict() for c in self.columns]}

    def to_markdown(self) -> str:
        def delta(v):
            return "n/a" if v is None else f"{v:+.2f}"
        head = "| Metric | " + " | ".join(c.config for c in self.columns) + " |"
        sep = "|---|" + "---|" * len(self.columns)
        rows = [
            ("P0 pass rate", [f"{100 * c.decision.l3.pass_rate:.1f}%" for c in self.columns]),
            ("L3 decision", [c.decision.l3.decision.value for c in self.columns]),
            ("D3 mean", [_fmt(c.decision.l2.d3_mean if c.decision.l2 else None) for c in self.columns]),
            (f"D3 vs {self.baseline}", [delta(c.d3_delta) for c in self.columns]),
            ("Weighted total", [_fmt(c.decision.l2.weighted_total if c.decision.l2 else None)
                                for c in self.columns]),
            (f"Total vs {self.baseline}", [delta(c.total_delta) for c in self.columns]),
            ("Key L3 failures", [", ".join(c.decision.l3.failed_ids) or "none" for c in self.columns]),
            ("Verdict", [c.decision.verdict.value for c in self.columns]),
        ]
        return "\n".join([head, sep] + [f"| {k} | " + " | ".join(v) + " |" for k, v in rows]) + "\n"


def _diff(a: float | None, b: float | None) -> float | None:
    return None if a is None or b is None else a - b


def cycle_report(runs: Mapping[str, tuple[Sequence[P0Case], Dataset]], baseline: str,
                 scheme: WeightScheme = V2_0,
                 policy: MissingPolicy = ProportionalReweight()) -> CycleReport:
    if not runs:
        raise ValueError("no configurations supplied")
    if baseline not in runs:
        raise KeyError(f"unknown baseline {baseline!r}; configs: {', '.join(sorted(runs))}")
    decisions = {}
    for name in sorted(runs):
        cases, data = runs[name]
        decisions[name] = decide(l3_evaluate(cases), l2_evaluate(data, scheme, policy))
    base = decisions[baseline].l2
    cols = tuple(
        CycleColumn(name, g, _diff(g.l2.d3_mean, base.d3_mean),
                    _diff(g.l2.weighted_total, base.weighted_total))
        for name, g in decisions.items()
    )
    return CycleReport(baseline, cols)
