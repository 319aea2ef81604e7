"""Dimension-outcome analyses shared by the CLI and the reproduction bundle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

from .composite import MissingPolicy, ProportionalReweight, WeightScheme
from .dataset import (
    DIMS,
    Converted,
    Dataset,
    DatasetError,
    Dim,
    deal_flag,
    excluded_by_view,
    outcome_value,
    phase1_analysis_view,
)
from .report import csv_text, fmt3, markdown_table
from .stats import (
    CorrelationResult,
    DegenerateInputError,
    EffectSize,
    LogisticFit,
    cohens_d,
    design_matrix,
    logistic_fit,
    partial_spearman,
    spearman,
    vif,
)
from .weights import composites_for, evaluate_scheme

OUTCOME_CHOICES = ("auto", "trust", "converted")


@dataclass(frozen=True)
class PreparedData:
    data: Dataset
    outcome: str
    excluded_ids: tuple[str, ...] = ()


def prepare(d: Dataset, outcome: str = "auto") -> PreparedData:
    """Resolve the outcome kind and apply the matching analysis view.

    Trust-proxy data drops T6 records. Asking for ``converted`` on trust data
    recodes each record to its binary deal flag (T5 = deal).
    """
    if outcome not in OUTCOME_CHOICES:
        raise ValueError(f"outcome must be one of {OUTCOME_CHOICES}")
    kind = d.outcome_kind
    if kind is None:
        return PreparedData(d, "converted" if outcome == "converted" else "trust")
    if outcome == "trust" and kind != "trust":
        raise DatasetError("--outcome trust requested but the data carries binary outcomes")
    if kind == "converted":
        return PreparedData(d, "converted")
    view = phase1_analysis_view(d)
    excluded = tuple(excluded_by_view(d))
    if outcome == "converted":
        recs = tuple(replace(r, outcome=Converted(deal_flag(r))) for r in view.records)
        view = replace(view, records=recs)
        return PreparedData(view, "converted", excluded)
    return PreparedData(view, "trust", excluded)


@dataclass(frozen=True)
class DimensionRow:
    label: str
    n: int
    result: CorrelationResult | None = None
    effect: EffectSize | None = None
    error: str | None = None

    @property
    def sort_key(self):
        return (-abs(self.result.rho) if self.result else math.inf, self.label)

    def to_dict(self) -> dict:
        return {"label": self.label, "n": self.n,
                "rho": self.result.rho if self.result else None,
                "p": self.result.p_uncorrected if self.result else None,
                "p_bonferroni": self.result.p_bonferroni if self.result else None,
                "cohens_d": self.effect.d if self.effect else None,
                "effect": self.effect.to_dict() if self.effect else None,
                "error": self.error}


def _effect(xs: Sequence[float], groups: Sequence[bool]) -> tuple[EffectSize | None, str | None]:
    g1 = [x for x, g in zip(xs, groups) if g]
    g0 = [x for x, g in zip(xs, groups) if not g]
    try:
        return cohens_d(g1, g0), None
    except (ValueError, DegenerateInputError) as exc:
        return None, f"cohen's d: {exc}"


def _row(label: str, xs: list[float], ys: list[int], groups: list[bool],
         bonferroni_m: int | None) -> DimensionRow:
    try:
        res = spearman(xs, ys, bonferroni_m)
    except (DegenerateInputError, ValueError) as exc:
        return DimensionRow(label, len(xs), error=str(exc))
    eff, err = _effect(xs, groups)
    return DimensionRow(label, len(xs), res, eff, err)


@dataclass(frozen=True)
class CorrelationReport:
    outcome: str
    n: int
    excluded_ids: tuple[str, ...]
    rows: tuple[DimensionRow, ...]
    composite: DimensionRow
    scheme: str
    policy: str
    group_means: dict = field(default_factory=dict)

    def row(self, label: str) -> DimensionRow:
        for r in self.rows + (self.composite,):
            if r.label == label:
                return r
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {"outcome": self.outcome, "n": self.n, "excluded_ids": list(self.excluded_ids),
                "scheme": self.scheme, "policy": self.policy,
                "dimensions": [r.to_dict() for r in self.rows],
                "composite": self.composite.to_dict(), "composite_group_means": self.group_means}

    def to_markdown(self) -> str:
        body = [[r.label, r.n, r.result.rho if r.result else None,
                 r.result.p_uncorrected if r.result else None,
                 r.result.p_bonferroni if r.result else None,
                 r.effect.d if r.effect else None, r.error or ""]
                for r in self.rows + (self.composite,)]
        head = ["Dimension", "n", "Spearman rho", "p", "Bonf. p", "Cohen's d", "Note"]
        text = markdown_table(head, body)
        if self.group_means:
            g = self.group_means
            text += (f"\nComposite mean ({self.scheme}): deal {fmt3(g.get('deal'))} (n={g.get('n_deal')}), "
                     f"no deal {fmt3(g.get('no_deal'))} (n={g.get('n_no_deal')})\n")
        if self.excluded_ids:
            text += f"\nExcluded (trust collapse): {', '.join(self.excluded_ids)}\n"
        return text

    def to_csv(self) -> str:
        return csv_text(["dimension", "rho", "p", "p_bonf", "d"],
                        [[r.label, r.result.rho if r.result else None,
                          r.result.p_uncorrected if r.result else None,
                          r.result.p_bonferroni if r.result else None,
                          r.effect.d if r.effect else None]
                         for r in self.rows + (self.composite,)])


def correlate(prepared: PreparedData, scheme: WeightScheme,
              policy: MissingPolicy = ProportionalReweight(),
              bonferroni_m: int | None = 7) -> CorrelationReport:
    """Per-dimension Spearman vs outcome (complete cases per dimension) plus the composite row."""
    d = prepared.data
    rows = []
    for dim in DIMS:
        recs = [r for r in d.records if r.scores.get(dim) is not None]
        rows.append(_row(dim.value, [float(r.scores[dim]) for r in recs],
                         [outcome_value(r) for r in recs], [deal_flag(r) for r in recs],
                         bonferroni_m))
    rows.sort(key=lambda r: r.sort_key)
    label = f"composite ({scheme.name})"
    means = {}
    try:
        ev = evaluate_scheme(d, scheme, policy)
        kept, _ = composites_for(d, scheme, policy)
        xs = [float(c) for _, c in kept]
        groups = [deal_flag(r) for r, _ in kept]
        eff, err = _effect(xs, groups)
        comp = DimensionRow(label, ev.n, ev.result, eff, err)
        deal = [c for (r, c), g in zip(kept, groups) if g]
        nodeal = [c for (r, c), g in zip(kept, groups) if not g]
        means = {"deal": float(sum(deal, Fraction(0)) / len(deal)) if deal else None,
                 "no_deal": float(sum(nodeal, Fraction(0)) / len(nodeal)) if nodeal else None,
                 "n_deal": len(deal), "n_no_deal": len(nodeal)}
    except (DegenerateInputError, ValueError) as exc:
        comp = DimensionRow(label, len(d), error=str(exc))
    return CorrelationReport(prepared.outcome, len(d), prepared.excluded_ids, tuple(rows), comp,
                             scheme.name, policy.label, means)


def _covariate(d: Dataset, name: str) -> list[float | None]:
    if name == "message_count":
        return [None if r.message_count is None else float(r.message_count) for r in d.records]
    dim = Dim.parse(name)
    return [None if r.scores.get(dim) is None else float(r.scores[dim]) for r in d.records]


def partial_rows(prepared: PreparedData, covariate: str,
                 bonferroni_m: int | None = 7) -> list[DimensionRow]:
    """Per-dimension Spearman vs outcome controlling for ``covariate`` (a dimension or message_count)."""
    d = prepared.data
    cov = _covariate(d, covariate)
    out = []
    for dim in DIMS:
        idx = [i for i, r in enumerate(d.records)
               if r.scores.get(dim) is not None and cov[i] is not None]
        if covariate.upper() == dim.value:
            continue
        try:
            res = partial_spearman([float(d.records[i].scores[dim]) for i in idx],
                                   [outcome_value(d.records[i]) for i in idx],
                                   [cov[i] for i in idx], bonferroni_m)
            out.append(DimensionRow(dim.value, len(idx), res))
        except (DegenerateInputError, ValueError) as exc:
            out.append(DimensionRow(dim.value, len(idx), error=str(exc)))
    return out


def logistic_section(prepared: PreparedData, dims: Sequence[Dim]) -> dict:
    """Logistic regression of the binary deal flag on the chosen dimensions (complete cases).

    Includes VIFs when two or more predictors are given.
    """
    d = prepared.data
    recs = [r for r in d.records if all(r.scores.get(x) is not None for x in dims)]
    if not recs:
        raise DegenerateInputError("no complete cases for the requested predictors")
    cols = {x.value: [float(r.scores[x]) for r in recs] for x in dims}
    X, names = design_matrix(cols)
    y = [1.0 if deal_flag(r) else 0.0 for r in recs]
    fit: LogisticFit = logistic_fit(X, y, names)
    out = {"fit": fit.to_dict(), "vif": None}
    if len(dims) >= 2:
        Xp, pnames = design_matrix(cols, intercept=False)
        try:
            out["vif"] = vif(Xp, pnames).vif
        except ValueError as exc:
            out["vif_error"] = str(exc)
    return out
