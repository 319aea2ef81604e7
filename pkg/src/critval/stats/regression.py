"""Logistic regression by IRLS, and variance inflation factors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .correlation import DegenerateInputError
from .special import normal_two_sided_p

Z_95 = 1.959964
SEPARATION_BOUND = 15.0
INFINITE_VIF = math.inf


class RankDeficientError(DegenerateInputError):
    def __init__(self, column: str):
        super().__init__(f"design is rank deficient: column {column!r} is a linear "
                         "combination of earlier columns")
        self.column = column


@dataclass(frozen=True)
class LogisticFit:
    names: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    p_values: np.ndarray
    log_likelihood: float
    aic: float
    converged: bool
    iterations: int
    n: int
    intercept_index: int | None = None
    ridge_used: bool = False
    loglik_history: tuple[float, ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return len(self.coefficients)

    def _terms(self):
        return [i for i in range(self.k) if i != self.intercept_index]

    @property
    def odds_ratios(self) -> dict[str, float]:
        return {self.names[i]: math.exp(self.coefficients[i]) for i in self._terms()}

    @property
    def ci_low(self) -> dict[str, float]:
        return {self.names[i]: math.exp(self.coefficients[i] - Z_95 * self.standard_errors[i])
                for i in self._terms()}

    @property
    def ci_high(self) -> dict[str, float]:
        return {self.names[i]: math.exp(self.coefficients[i] + Z_95 * self.standard_errors[i])
                for i in self._terms()}

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def to_dict(self) -> dict:
        terms = {}
        for i, name in enumerate(self.names):
            row = {"coef": float(self.coefficients[i]), "se": float(self.standard_errors[i]),
                   "p": float(self.p_values[i])}
            if i != self.intercept_index:
                row["odds_ratio"] = self.odds_ratios[name]
                row["ci_low"] = self.ci_low[name]
                row["ci_high"] = self.ci_high[name]
            terms[name] = row
        return {"terms": terms, "log_likelihood": self.log_likelihood, "aic": self.aic,
                "converged": self.converged, "iterations": self.iterations, "n": self.n,
                "ridge_used": self.ridge_used, "notes": list(self.notes)}


def design_matrix(columns: Mapping[str, Sequence[float]], intercept: bool = True):
    names = list(columns)
    cols = [np.asarray(columns[c], dtype=float) for c in names]
    if intercept:
        cols.insert(0, np.ones(len(cols[0]) if cols else 0))
        names.insert(0, "intercept")
    return np.column_stack(cols), tuple(names)


def logistic_loglik(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logistic_score(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mu = _expit(X @ beta)
    return X.T @ (y - mu)


def _expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def _check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    for j in range(X.shape[1]):
        if np.linalg.matrix_rank(X[:, : j + 1]) < j + 1:
            raise RankDeficientError(names[j])


def logistic_fit(design, y, names: Sequence[str] | None = None, max_iter: int = 100,
                 tol: float = 1e-8) -> LogisticFit:
    """Maximum-likelihood logistic regression.

    ``design`` must already contain the intercept column if one is wanted.
    Newton/IRLS steps are halved until the log-likelihood does not drop, so
    the recorded history is non-decreasing.
    """
    X = np.asarray(design, dtype=float)
    if X.ndim != 2:
        raise ValueError("design must be a 2-D matrix")
    yv = np.asarray(y, dtype=float)
    n, k = X.shape
    if names is None:
        names = tuple(f"x{j}" for j in range(k))
    names = tuple(names)
    if len(names) != k:
        raise ValueError("names must match design columns")
    if yv.shape != (n,):
        raise ValueError("y length must match design rows")
    if not np.all((yv == 0) | (yv == 1)):
        raise ValueError("y must be 0/1")
    if yv.min() == yv.max():
        raise DegenerateInputError("y contains a single class")
    if n < k + 1:
        raise DegenerateInputError(f"need at least {k + 1} rows for {k} parameters")
    _check_rank(X, names)

    intercept_index = None
    for j in range(k):
        if np.all(X[:, j] == 1.0):
            intercept_index = j
            break

    beta = np.zeros(k)
    ll = logistic_loglik(X, yv, beta)
    history = [ll]
    ridge = False
    converged = False
    notes = []
    it = 0
    for it in range(1, max_iter + 1):
        mu = _expit(X @ beta)
        w = mu * (1.0 - mu)
        info = X.T @ (X * w[:, None])
        grad = X.T @ (yv - mu)
        try:
            if np.linalg.cond(info) > 1e14:
                raise np.linalg.LinAlgError("ill-conditioned")
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            ridge = True
            step = np.linalg.solve(info + 1e-10 * np.eye(k), grad)
        scale = 1.0
        for _ in range(60):
            cand = beta + scale * step
            ll_new = logistic_loglik(X, yv, cand)
            if ll_new >= ll:
                break
            scale *= 0.5
        else:
            # no ascent possible at working precision
            converged = float(np.max(np.abs(grad))) < 1e-6
            break
        delta = scale * step
        beta = cand
        ll = ll_new
        history.append(ll)
        if float(np.max(np.abs(delta))) < tol:
            converged = True
            break
    else:
        notes.append(f"no convergence within {max_iter} iterations")

    if np.any(np.abs(beta) > SEPARATION_BOUND):
        converged = False
        notes.append("quasi-separation suspected (|coef| > 15)")
    if ridge:
        notes.append("ridge 1e-10 added to singular information matrix")

    mu = _expit(X @ beta)
    w = mu * (1.0 - mu)
    info = X.T @ (X * w[:, None])
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.linalg.inv(info + 1e-10 * np.eye(k))
        ridge = True
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, beta / se, np.inf)
    pvals = np.array([normal_two_sided_p(float(v)) for v in z])
    aic = 2 * k - 2 * ll
    return LogisticFit(names, beta, se, pvals, ll, aic, converged, it, n, intercept_index,
                       ridge, tuple(history), tuple(notes))


@dataclass(frozen=True)
class CollinearityReport:
    vif: dict[str, float] = field(default_factory=dict)

    @property
    def max_vif(self) -> float:
        return max(self.vif.values())

    def is_collinear(self, name: str) -> bool:
        return math.isinf(self.vif[name])


def _ols_r2(target: np.ndarray, others: np.ndarray) -> float:
    A = np.column_stack([np.ones(len(target)), others])
    coef, *_ = np.linalg.lstsq(A, target, rcond=None)
    resid = target - A @ coef
    centered = target - target.mean()
    sst = float(centered @ centered)
    if sst == 0.0:
        raise DegenerateInputError("constant predictor")
    return 1.0 - float(resid @ resid) / sst


def vif(design, names: Sequence[str] | None = None) -> CollinearityReport:
    """VIF_j = 1 / (1 - R^2_j), regressing predictor j on the rest plus intercept.

    Perfectly collinear predictors get ``math.inf``.
    """
    X = np.asarray(design, dtype=float)
    n, k = X.shape
    if k < 2:
        raise ValueError("vif needs at least two predictors")
    if n < k + 2:
        raise ValueError(f"vif needs at least {k + 2} rows")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(k))
    out = {}
    for j in range(k):
        r2 = _ols_r2(X[:, j], np.delete(X, j, axis=1))
        gap = 1.0 - r2
        out[names[j]] = INFINITE_VIF if gap < 1e-10 else 1.0 / gap
    return CollinearityReport(out)
