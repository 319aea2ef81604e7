from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .correlation import DegenerateInputError


@dataclass(frozen=True)
class EffectSize:
    d: float
    n1: int
    n2: int
    mean1: float
    mean2: float
    pooled_sd: float

    def to_dict(self) -> dict:
        return {"d": self.d, "n1": self.n1, "n2": self.n2, "mean1": self.mean1,
                "mean2": self.mean2, "pooled_sd": self.pooled_sd}


def _mean_var(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    m = math.fsum(xs) / n
    return m, math.fsum((v - m) ** 2 for v in xs) / (n - 1)


def cohens_d(group1: Sequence[float], group2: Sequence[float]) -> EffectSize:
    """Standardized mean difference (group1 - group2) over the pooled SD.

    Both group variances use n - 1 denominators and are pooled with
    weights n_i - 1.
    """
    a = [float(v) for v in group1]
    b = [float(v) for v in group2]
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise DegenerateInputError("cohens_d needs at least two values per group")
    m1, v1 = _mean_var(a)
    m2, v2 = _mean_var(b)
    pooled = math.sqrt(((n1 - 1) * v1 + (n2 - 1) * v2) / (n1 + n2 - 2))
    if pooled == 0.0:
        raise DegenerateInputError("pooled standard deviation is zero")
    return EffectSize((m1 - m2) / pooled, n1, n2, m1, m2, pooled)
