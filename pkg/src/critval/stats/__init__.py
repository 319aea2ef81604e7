from .correlation import (
    CorrelationResult,
    DegenerateInputError,
    bonferroni,
    exact_permutation_p,
    partial_spearman,
    rank_average_ties,
    spearman,
)
from .effect import EffectSize, cohens_d
from .regression import (
    CollinearityReport,
    LogisticFit,
    RankDeficientError,
    design_matrix,
    logistic_fit,
    logistic_loglik,
    logistic_score,
    vif,
)
from .special import betainc, normal_two_sided_p, t_sf, t_two_sided_p

__all__ = [
    "CorrelationResult", "DegenerateInputError", "bonferroni", "exact_permutation_p",
    "partial_spearman", "rank_average_ties", "spearman", "EffectSize", "cohens_d",
    "CollinearityReport", "LogisticFit", "RankDeficientError", "design_matrix",
    "logistic_fit", "logistic_loglik", "logistic_score", "vif", "betainc",
    "normal_two_sided_p", "t_sf", "t_two_sided_p",
]
