"""Scheme evaluation against outcomes, simplex grid search and temporal CV."""

from __future__ import annotations

import functools
import statistics
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .composite import (
    EQUAL,
    CompleteCase,
    Impute,
    MissingPolicy,
    ProportionalReweight,
    WeightScheme,
    composite,
)
from .dataset import DIMS, Dataset, Dim, outcome_value
from .stats import CorrelationResult, DegenerateInputError, spearman


@dataclass(frozen=True)
class SchemeEvaluation:
    scheme: WeightScheme
    result: CorrelationResult
    policy: str
    excluded_ids: tuple[str, ...] = ()

    @property
    def name(self) -> str:
        return self.scheme.name

    @property
    def rho(self) -> float:
        return self.result.rho

    @property
    def p(self) -> float:
        return self.result.p_uncorrected

    @property
    def n(self) -> int:
        return self.result.n

    def to_dict(self) -> dict:
        return {"scheme": self.scheme.to_json(), "rho": self.rho, "p": self.p, "n": self.n,
                "policy": self.policy, "excluded_ids": list(self.excluded_ids)}


def composites_for(d: Dataset, scheme: WeightScheme, policy: MissingPolicy = ProportionalReweight()):
    """(record, exact composite) pairs; records excluded by the policy are dropped."""
    kept, dropped = [], []
    for r in d.records:
        c = composite(r.scores, scheme, policy)
        if c.excluded:
            dropped.append(r.id)
        else:
            kept.append((r, c.exact))
    return kept, dropped


def evaluate_scheme(d: Dataset, scheme: WeightScheme,
                    policy: MissingPolicy = ProportionalReweight(),
                    bonferroni_m: int | None = None) -> SchemeEvaluation:
    if len(d) == 0:
        raise DegenerateInputError("empty dataset")
    kept, dropped = composites_for(d, scheme, policy)
    if len(kept) < 3:
        raise DegenerateInputError(f"only {len(kept)} records left after {policy.label}")
    xs = [float(c) for _, c in kept]
    ys = [outcome_value(r) for r, _ in kept]
    if len(set(xs)) < 2:
        raise DegenerateInputError(f"all composites identical under {scheme.name!r}")
    res = spearman(xs, ys, bonferroni_m)
    return SchemeEvaluation(scheme, res, policy.label, tuple(dropped))


def compare_schemes(d: Dataset, schemes: Sequence[WeightScheme],
                    policy: MissingPolicy = ProportionalReweight()) -> list[SchemeEvaluation]:
    evals = [evaluate_scheme(d, s, policy) for s in schemes]
    return sorted(evals, key=lambda e: (-e.rho, e.name))


# ---------------------------------------------------------------------------
# grid search

@dataclass(frozen=True)
class SearchConfig:
    step: int = 5
    bounds: Mapping[Dim, tuple[int, int]] | None = None
    objective: str = "spearman_rho"

    def __post_init__(self):
        if self.step <= 0 or 100 % self.step:
            raise ValueError("step must be a positive divisor of 100")
        if self.objective != "spearman_rho":
            raise ValueError("only the spearman_rho objective is supported")

    def levels(self) -> list[list[int]]:
        out = []
        for d in DIMS:
            lo, hi = (0, 100)
            if self.bounds and d in self.bounds:
                lo, hi = self.bounds[d]
            vals = [v for v in range(0, 101, self.step) if lo <= v <= hi]
            if not vals:
                raise ValueError(f"infeasible bounds for {d.value}: no grid value in [{lo}, {hi}]")
            out.append(vals)
        if sum(v[0] for v in out) > 100 or sum(v[-1] for v in out) < 100:
            raise ValueError("infeasible bounds: grid weights cannot sum to 100")
        return out


def enumerate_grid(cfg: SearchConfig) -> np.ndarray:
    """All grid weight vectors summing to 100, in ascending lexicographic order."""
    levels = tuple(tuple(v) for v in cfg.levels())
    return _grid_for_levels(levels).copy()


@functools.lru_cache(maxsize=16)
def _grid_for_levels(levels: tuple[tuple[int, ...], ...]) -> np.ndarray:
    mins = [v[0] for v in levels]
    maxs = [v[-1] for v in levels]
    tail_min = [sum(mins[i:]) for i in range(8)]
    tail_max = [sum(maxs[i:]) for i in range(8)]
    rows: list[tuple[int, ...]] = []

    def rec(i: int, remaining: int, prefix: tuple[int, ...]):
        if i == 6:
            if remaining in levels[6]:
                rows.append(prefix + (remaining,))
            return
        for v in levels[i]:
            rest = remaining - v
            if rest < tail_min[i + 1]:
                break
            if rest > tail_max[i + 1]:
                continue
            rec(i + 1, rest, prefix + (v,))

    rec(0, 100, ())
    if not rows:
        raise ValueError("infeasible bounds: empty grid")
    return np.array(rows, dtype=np.int64)


def _score_arrays(records, policy):
    """Integer score matrix scaled so imputed values stay integral, plus presence mask."""
    S = np.array([[r.scores.get(d) or 0 for d in DIMS] for r in records], dtype=np.int64)
    P = np.array([[r.scores.get(d) is not None for d in DIMS] for r in records], dtype=bool)
    if isinstance(policy, Impute):
        q = policy.value.denominator
        S = np.where(P, S * q, policy.value.numerator)
        return S, np.ones_like(P), q
    return S, P, 1


def _doubled_rank_rows(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # compare num_i/den_i with num_j/den_j by cross-multiplication: exact ties
    a = num[:, :, None] * den[:, None, :]
    b = num[:, None, :] * den[:, :, None]
    less = (b < a).sum(axis=2)
    equal = (b == a).sum(axis=2)
    return 2 * less + equal + 1


def _doubled_rank_rows_int(num: np.ndarray) -> np.ndarray:
    # same result as _doubled_rank_rows with a common denominator, via one flat sort
    k, n = num.shape
    base = num - num.min()
    span = int(base.max()) + 1
    flat = (base + np.arange(k, dtype=np.int64)[:, None] * span).ravel()
    order = np.argsort(flat, kind="stable")
    srt = flat[order]
    pos = np.arange(flat.size)
    change = srt[1:] != srt[:-1]
    first = np.maximum.accumulate(np.where(np.r_[True, change], pos, 0))
    last = np.minimum.accumulate(np.where(np.r_[change, True], pos, flat.size)[::-1])[::-1]
    left = np.empty_like(pos)
    left[order] = first
    right = np.empty_like(pos)
    right[order] = last + 1
    less = left - np.repeat(np.arange(k) * n, n)
    return (2 * less + (right - left) + 1).reshape(k, n)


def _rho_rows(rx: np.ndarray, ry: np.ndarray) -> np.ndarray:
    n = rx.shape[1]
    sx = rx.sum(axis=1)
    sy = int(ry.sum())
    sxy = rx @ ry
    sxx = (rx * rx).sum(axis=1)
    syy = int(ry @ ry)
    num = n * sxy - sx * sy
    vx = n * sxx - sx * sx
    vy = n * syy - sy * sy
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = num.astype(float) / np.sqrt(vx.astype(float) * float(vy))
    rho[(vx == 0) | (vy == 0)] = np.nan
    return rho


def grid_rhos(records, W: np.ndarray, policy: MissingPolicy = ProportionalReweight(),
              chunk_cells: int = 2_000_000) -> np.ndarray:
    """Spearman rho of every weight row in ``W`` against the records' outcomes.

    Composite ranks are computed from exact integer numerators/denominators.
    Rows whose composite is undefined or constant give NaN.
    """
    records = list(records)
    m = W.shape[0]
    out = np.full(m, np.nan)
    y = np.array([outcome_value(r) for r in records], dtype=np.int64)
    S, P, q = _score_arrays(records, policy)
    if isinstance(policy, CompleteCase):
        support = W > 0
        keys = np.packbits(support, axis=1, bitorder="little")[:, 0]
        for key in np.unique(keys):
            sel = np.nonzero(keys == key)[0]
            needed = support[sel[0]]
            rows = np.all(P[:, needed], axis=1)
            if rows.sum() < 3:
                continue
            out[sel] = _grid_block(S[rows], np.ones_like(P[rows]), y[rows], W[sel], 1, chunk_cells)
        return out
    return _grid_block(S, P, y, W, q, chunk_cells)


def _grid_block(S, P, y, W, q, chunk_cells):
    n = S.shape[0]
    out = np.full(W.shape[0], np.nan)
    if n < 3:
        return out
    SP = (S * P).T
    PT = P.astype(np.int64).T * q
    ry = np.asarray(_doubled_rank_rows(y[None, :], np.ones((1, n), dtype=np.int64))[0])
    step = max(1, chunk_cells // (n * n))
    for start in range(0, W.shape[0], step):
        w = W[start:start + step]
        num = w @ SP
        den = w @ PT
        bad = np.any(den == 0, axis=1)
        den = np.where(den == 0, 1, den)
        if np.all(den == den[:, :1]):
            rx = _doubled_rank_rows_int(num)
        else:
            rx = _doubled_rank_rows(num, den)
        rho = _rho_rows(rx, ry)
        rho[bad] = np.nan
        out[start:start + step] = rho
    return out


@dataclass(frozen=True)
class SearchResult:
    scheme: WeightScheme
    evaluation: SchemeEvaluation
    n_candidates: int
    n_tied_best: int

    def to_dict(self) -> dict:
        return {"best": self.evaluation.to_dict(), "n_candidates": self.n_candidates,
                "n_tied_best": self.n_tied_best}


def search_weights(d: Dataset, cfg: SearchConfig = SearchConfig(),
                   policy: MissingPolicy = ProportionalReweight(),
                   name: str | None = None) -> SearchResult:
    """Exhaustive argmax of Spearman rho over the step grid.

    Ties on rho go to the lexicographically smallest weight vector.
    """
    if len(d) == 0:
        raise DegenerateInputError("empty dataset")
    W = enumerate_grid(cfg)
    rhos = grid_rhos(d.records, W, policy)
    if np.all(np.isnan(rhos)):
        raise DegenerateInputError("no grid point yields a defined correlation")
    key = np.where(np.isnan(rhos), -np.inf, rhos)
    best = int(np.argmax(key))  # first maximum == lexicographically smallest
    n_tied = int(np.count_nonzero(key == key[best]))
    vec = W[best]
    scheme = WeightScheme(name or f"searched_step{cfg.step}", dict(zip(DIMS, map(int, vec))))
    return SearchResult(scheme, evaluate_scheme(d, scheme, policy), len(W), n_tied)


# ---------------------------------------------------------------------------
# temporal cross-validation

@dataclass(frozen=True)
class CVConfig:
    folds: int = 4
    ordering: str = "chronological"

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.ordering != "chronological":
            raise ValueError("only chronological ordering is supported")


def fold_sizes(n: int, folds: int) -> list[int]:
    base, extra = divmod(n, folds)
    return [base + (1 if i < extra else 0) for i in range(folds)]


def temporal_folds(d: Dataset, folds: int) -> list[list[str]]:
    ordered = d.chronological()
    out, start = [], 0
    for size in fold_sizes(len(ordered), folds):
        out.append([r.id for r in ordered[start:start + size]])
        start += size
    return out


@dataclass(frozen=True)
class FoldResult:
    index: int
    test_ids: tuple[str, ...]
    trained: WeightScheme | None
    trained_rho: float | None
    equal_rho: float | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def delta(self) -> float | None:
        if not self.ok:
            return None
        return self.trained_rho - self.equal_rho

    def to_dict(self) -> dict:
        return {"fold": self.index, "n_test": len(self.test_ids),
                "trained_weights": self.trained.to_json()["weights"] if self.trained else None,
                "trained_rho": self.trained_rho, "equal_rho": self.equal_rho,
                "delta": self.delta, "error": self.error}


@dataclass(frozen=True)
class CVResult:
    folds: tuple[FoldResult, ...]
    mean_trained: float | None
    sd_trained: float | None
    mean_equal: float | None
    sd_equal: float | None
    mean_delta: float | None
    wins: int
    n_valid: int

    def to_dict(self) -> dict:
        return {"folds": [f.to_dict() for f in self.folds], "mean_trained_rho": self.mean_trained,
                "sd_trained_rho": self.sd_trained, "mean_equal_rho": self.mean_equal,
                "sd_equal_rho": self.sd_equal, "mean_delta_rho": self.mean_delta,
                "wins": self.wins, "n_valid_folds": self.n_valid}


def _mean_sd(xs):
    if not xs:
        return None, None
    return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)


def temporal_cv(d: Dataset, cv: CVConfig = CVConfig(), search: SearchConfig = SearchConfig(step=10),
                policy: MissingPolicy = ProportionalReweight(),
                equal: WeightScheme = EQUAL) -> CVResult:
    """Leave-one-contiguous-fold-out validation of searched weights vs equal weights."""
    n = len(d)
    if n < 2 * cv.folds:
        raise ValueError(f"need at least {2 * cv.folds} records for {cv.folds} folds")
    fold_ids = temporal_folds(d, cv.folds)
    results = []
    for i, test_ids in enumerate(fold_ids):
        test_set = set(test_ids)
        train = d.filter(lambda r: r.id not in test_set)
        test = d.filter(lambda r: r.id in test_set)
        trained = None
        try:
            trained = search_weights(train, search, policy, name=f"fold{i}_trained").scheme
            t_rho = evaluate_scheme(test, trained, policy).rho
            e_rho = evaluate_scheme(test, equal, policy).rho
        except (DegenerateInputError, ValueError) as exc:
            results.append(FoldResult(i, tuple(test_ids), trained, None, None, str(exc)))
            continue
        results.append(FoldResult(i, tuple(test_ids), trained, t_rho, e_rho))
    valid = [f for f in results if f.ok]
    mt, st = _mean_sd([f.trained_rho for f in valid])
    me, se = _mean_sd([f.equal_rho for f in valid])
    md = statistics.fmean([f.delta for f in valid]) if valid else None
    wins = sum(1 for f in valid if f.trained_rho > f.equal_rho)
    return CVResult(tuple(results), mt, st, me, se, md, wins, len(valid))
