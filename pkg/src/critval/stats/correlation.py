"""Rank correlation: tie-averaged ranks, Spearman, partial Spearman, Bonferroni."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .special import t_two_sided_p

EXACT_MAX_N = 10


class DegenerateInputError(ValueError):
    """Input for which the requested statistic is undefined (constant columns, etc.)."""


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_uncorrected: float
    n: int
    method: str = "t_approx"
    p_bonferroni: float | None = None
    df: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def p(self) -> float:
        return self.p_uncorrected

    def to_dict(self) -> dict:
        return {"rho": self.rho, "p": self.p_uncorrected, "p_bonferroni": self.p_bonferroni,
                "n": self.n, "df": self.df, "method": self.method}


def _as_floats(values, what="values") -> list[float]:
    out = [float(v) for v in values]
    if not all(math.isfinite(v) for v in out):
        raise ValueError(f"{what} must be finite")
    return out


def rank_average_ties(values: Sequence[float]) -> list[float]:
    """Ranks 1..n; tied values share the mean of the positions they occupy."""
    xs = _as_floats(values)
    if not xs:
        raise ValueError("rank_average_ties needs at least one value")
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    ranks = [0.0] * len(xs)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        avg = (i + j + 2) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _pearson(a: Sequence[float], b: Sequence[float]) -> float:
    n = len(a)
    ma = math.fsum(a) / n
    mb = math.fsum(b) / n
    da = [v - ma for v in a]
    db = [v - mb for v in b]
    sab = math.fsum(x * y for x, y in zip(da, db))
    saa = math.fsum(x * x for x in da)
    sbb = math.fsum(y * y for y in db)
    if saa == 0.0 or sbb == 0.0:
        raise DegenerateInputError("correlation undefined for constant input")
    r = sab / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, r))


def _t_p(r: float, df: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt(df / (1.0 - r * r))
    return t_two_sided_p(t, df)


def bonferroni(p: float, m: int) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if m < 1:
        raise ValueError("m must be >= 1")
    return min(1.0, m * p)


def _doubled_ranks(values) -> np.ndarray:
    return np.rint(np.asarray(rank_average_ties(values)) * 2).astype(np.int64)


def exact_permutation_p(x: Sequence[float], y: Sequence[float]) -> float:
    """Two-sided p from all n! reorderings of y's ranks against x's ranks.

    Ranks are doubled so the comparison statistic is an exact integer.
    """
    n = len(x)
    if n > EXACT_MAX_N:
        raise ValueError(f"exact permutation p limited to n <= {EXACT_MAX_N}")
    rx = _doubled_ranks(x)
    ry = _doubled_ranks(y)
    sx, sy = int(rx.sum()), int(ry.sum())
    observed = abs(n * int(rx @ ry) - sx * sy)
    hits = 0
    total = 0
    perms = itertools.permutations(ry.tolist())
    chunk = 50_000
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(perms, chunk)),
                            dtype=np.int64)
        if block.size == 0:
            break
        block = block.reshape(-1, n)
        stat = np.abs(n * (block @ rx) - sx * sy)
        hits += int(np.count_nonzero(stat >= observed))
        total += block.shape[0]
    return hits / total


def spearman(x: Sequence[float], y: Sequence[float], bonferroni_m: int | None = None,
             method: str = "t_approx") -> CorrelationResult:
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise DegenerateInputError("spearman needs n >= 3")
    rx = rank_average_ties(x)
    ry = rank_average_ties(y)
    if len(set(rx)) < 2 or len(set(ry)) < 2:
        raise DegenerateInputError("spearman undefined for constant input")
    rho = _pearson(rx, ry)
    if method == "t_approx":
        p = _t_p(rho, n - 2)
    elif method == "exact_permutation":
        p = exact_permutation_p(x, y)
    else:
        raise ValueError(f"unknown method {method!r}")
    pb = bonferroni(p, bonferroni_m) if bonferroni_m is not None else None
    return CorrelationResult(rho, p, n, method, pb, n - 2)


def _residualize(r: list[float], z: list[float]) -> list[float]:
    n = len(r)
    mr = math.fsum(r) / n
    mz = math.fsum(z) / n
    dz = [v - mz for v in z]
    szz = math.fsum(v * v for v in dz)
    slope = math.fsum(a * (b - mr) for a, b in zip(dz, r)) / szz
    return [(b - mr) - slope * a for a, b in zip(dz, r)]


def partial_spearman(x: Sequence[float], y: Sequence[float], covariate: Sequence[float],
                     bonferroni_m: int | None = None) -> CorrelationResult:
    """Rank-based partial correlation of x and y given one covariate.

    All three variables are rank-transformed, x- and y-ranks are each
    regressed on the covariate ranks (with intercept) and the residuals
    correlated. The p-value uses a t reference on n - 3 degrees of freedom.
    """
    n = len(x)
    if not (len(y) == n and len(covariate) == n):
        raise ValueError("x, y and covariate must have equal lengths")
    if n < 4:
        raise DegenerateInputError("partial_spearman needs n >= 4")
    rx = rank_average_ties(x)
    ry = rank_average_ties(y)
    rz = rank_average_ties(covariate)
    if len(set(rz)) < 2:
        raise DegenerateInputError("covariate is constant")
    if len(set(rx)) < 2 or len(set(ry)) < 2:
        raise DegenerateInputError("x or y is constant")
    ex = _residualize(rx, rz)
    ey = _residualize(ry, rz)
    scale_x = math.fsum((v - math.fsum(rx) / n) ** 2 for v in rx)
    scale_y = math.fsum((v - math.fsum(ry) / n) ** 2 for v in ry)
    if (math.fsum(v * v for v in ex) <= 1e-12 * scale_x
            or math.fsum(v * v for v in ey) <= 1e-12 * scale_y):
        raise DegenerateInputError("residuals vanish: covariate explains x or y completely")
    r = _pearson(ex, ey)
    df = n - 3
    p = _t_p(r, df)
    pb = bonferroni(p, bonferroni_m) if bonferroni_m is not None else None
    return CorrelationResult(r, p, n, "partial_t_approx", pb, df)
