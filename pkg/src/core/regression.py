"""
Statistical fitting kernels: logistic IRLS, OLS, Huber M-estimation, quantiles.

Designs are passed without an intercept column; the intercept is always
prepended, so a fitted model has one more coefficient than design columns.
"""

import math
from typing import Sequence

import numpy as np
import structlog
from scipy.special import expit

from src.exceptions import (
    DegenerateResponseError,
    DimensionError,
    EmptyInputError,
    ParameterError,
    RankError,
    SeparationError,
)
from src.models.estimates import FittedLinearModel

logger = structlog.get_logger()

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
HUBER_C = 1.345
SEPARATION_NORM = 1e4
SEPARATION_MARGIN = 15.0
MAD_NORMALIZER = 0.6745


def add_intercept(design) -> np.ndarray:
    """Prepend a column of ones."""
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return np.hstack([np.ones((X.shape[0], 1)), X])


def quantile(values, p: float) -> float:
    """
    Nearest-rank quantile: the smallest value whose cumulative proportion is >= p.

    Args:
        values: Non-empty sequence of reals
        p: Level in [0, 1]

    Returns:
        The selected order statistic
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInputError("quantile of an empty sequence")
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"quantile level must lie in [0, 1], got {p}")
    rank = max(math.ceil(round(p * v.size, 9)), 1)
    return float(np.sort(v)[rank - 1])


def _log_likelihood(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logistic(
    design,
    y,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    column_names: Sequence[str] = (),
) -> FittedLinearModel:
    """
    Maximum-likelihood logistic regression by iteratively reweighted least squares.

    Iterates Newton steps (with step halving whenever the log-likelihood would
    drop) until the largest absolute score component falls below `tol`.

    Raises:
        DegenerateResponseError: y holds a single class
        SeparationError: coefficient norm diverges past 1e4
        RankError: weighted normal equations are singular
    """
    X = add_intercept(design)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise DimensionError(f"design has {n} rows but response has {y.shape[0]}")
    if n < p:
        raise RankError(f"{n} observations cannot identify {p} coefficients")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DegenerateResponseError("logistic response must be binary")
    if y.min() == y.max():
        raise DegenerateResponseError(f"logistic response has a single class ({int(y[0])})")

    beta = np.zeros(p)
    ll = _log_likelihood(X, y, beta)
    converged = False
    iterations = 0
    hessian = None

    for iterations in range(1, max_iter + 1):
        prob = expit(X @ beta)
        score = X.T @ (y - prob)
        weights = prob * (1.0 - prob)
        hessian = X.T @ (X * weights[:, None])
        if np.max(np.abs(score)) < tol:
            converged = True
            break
        try:
            step = np.linalg.solve(hessian, score)
        except np.linalg.LinAlgError as e:
            raise RankError(f"singular weighted normal equations: {e}") from e
        if not np.all(np.isfinite(step)):
            raise RankError("non-finite Newton step")

        scale = 1.0
        candidate = beta + step
        new_ll = _log_likelihood(X, y, candidate)
        while new_ll < ll and scale > 1e-10:
            scale *= 0.5
            candidate = beta + scale * step
            new_ll = _log_likelihood(X, y, candidate)
        if new_ll < ll:
            # no ascent direction left at machine precision
            converged = bool(np.max(np.abs(score)) < tol)
            break
        beta, ll = candidate, new_ll

        if np.linalg.norm(beta) > SEPARATION_NORM:
            raise SeparationError(
                f"logistic coefficients diverged (norm {np.linalg.norm(beta):.3g}); "
                "the treatment is (quasi-)separated by the design"
            )
    else:
        prob = expit(X @ beta)
        score = X.T @ (y - prob)
        hessian = X.T @ (X * (prob * (1.0 - prob))[:, None])
        converged = bool(np.max(np.abs(score)) < tol)

    margin = (2.0 * y - 1.0) * (X @ beta)
    if margin.min() > SEPARATION_MARGIN:
        raise SeparationError(
            f"every unit is classified with logit margin > {SEPARATION_MARGIN}; "
            "the treatment is completely separated by the design"
        )

    if not converged:
        logger.warning("logistic_not_converged", iterations=iterations, max_score=float(np.max(np.abs(score))))

    se = None
    try:
        se = np.sqrt(np.clip(np.diag(np.linalg.inv(hessian)), 0.0, None))
    except np.linalg.LinAlgError:
        pass

    return FittedLinearModel(
        coefficients=beta,
        family="logistic",
        converged=converged,
        iterations=iterations,
        coefficient_se=se,
        column_names=tuple(column_names),
    )


def predict_logistic(model: FittedLinearModel, design) -> np.ndarray:
    """Fitted probabilities, kept strictly inside (0, 1)."""
    X = add_intercept(design)
    if X.shape[1] != model.coefficients.shape[0]:
        raise DimensionError(
            f"design has {X.shape[1] - 1} columns, model expects {model.n_columns}"
        )
    eps = np.finfo(float).eps
    return np.clip(expit(X @ model.coefficients), eps, 1.0 - eps)


def _check_rank(X: np.ndarray):
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise RankError(f"design has rank {rank} < {X.shape[1]} columns")


def fit_ols(design, y, column_names: Sequence[str] = ()) -> FittedLinearModel:
    """Ordinary least squares with classical standard errors."""
    X = add_intercept(design)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise DimensionError(f"design has {X.shape[0]} rows but response has {y.shape[0]}")
    _check_rank(X)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    dof = max(X.shape[0] - X.shape[1], 1)
    sigma2 = float(resid @ resid) / dof
    se = np.sqrt(np.clip(np.diag(np.linalg.pinv(X.T @ X)) * sigma2, 0.0, None))
    return FittedLinearModel(
        coefficients=beta,
        family="gaussian",
        converged=True,
        iterations=1,
        coefficient_se=se,
        column_names=tuple(column_names),
        scale=math.sqrt(sigma2),
    )


def predict_linear(model: FittedLinearModel, design) -> np.ndarray:
    X = add_intercept(design)
    if X.shape[1] != model.coefficients.shape[0]:
        raise DimensionError(
            f"design has {X.shape[1] - 1} columns, model expects {model.n_columns}"
        )
    return X @ model.coefficients


def _mad_scale(resid: np.ndarray) -> float:
    return float(np.median(np.abs(resid - np.median(resid)))) / MAD_NORMALIZER


def _huber_sandwich(X: np.ndarray, resid: np.ndarray, scale: float, c: float) -> np.ndarray:
    n, p = X.shape
    if scale <= 0.0:
        return np.zeros(p)
    u = resid / scale
    psi = np.clip(u, -c, c)
    dpsi = (np.abs(u) <= c).astype(float)
    bread = X.T @ (X * dpsi[:, None])
    meat = X.T @ (X * (psi**2)[:, None])
    bread_inv = np.linalg.pinv(bread)
    cov = scale**2 * (n / max(n - p, 1)) * bread_inv @ meat @ bread_inv
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def fit_huber(
    design,
    y,
    c: float = HUBER_C,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    column_names: Sequence[str] = (),
) -> FittedLinearModel:
    """
    Huber M-estimation by IRLS.

    Weights are min(1, c*s/|r_i|) with the scale s re-estimated every
    iteration as MAD/0.6745. Standard errors use the M-estimation sandwich
    A^-1 B A^-1 with A = X' diag(psi') X and B = X' diag(psi^2) X.

    Non-convergence is not an error: the last iterate is returned with
    converged=False.
    """
    if c <= 0:
        raise ParameterError(f"Huber tuning constant must be positive, got {c}")
    X = add_intercept(design)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise DimensionError(f"design has {X.shape[0]} rows but response has {y.shape[0]}")
    _check_rank(X)

    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    floor = 1e-12 * max(1.0, float(np.max(np.abs(y))) if y.size else 1.0)
    converged = False
    scale = 0.0
    iterations = 0

    for iterations in range(1, max_iter + 1):
        resid = y - X @ beta
        scale = _mad_scale(resid)
        if scale <= floor:
            # exact fit on at least half the data; residual weights are all 1
            converged = True
            break
        abs_r = np.abs(resid)
        weights = np.ones_like(abs_r)
        large = abs_r > c * scale
        weights[large] = c * scale / abs_r[large]
        sw = np.sqrt(weights)
        new_beta, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
        change = float(np.max(np.abs(new_beta - beta)))
        beta = new_beta
        if change <= tol * max(1.0, float(np.max(np.abs(beta)))):
            converged = True
            break

    resid = y - X @ beta
    scale = _mad_scale(resid)
    if not converged:
        logger.warning("huber_not_converged", iterations=iterations, scale=scale)

    return FittedLinearModel(
        coefficients=beta,
        family="huber",
        converged=converged,
        iterations=iterations,
        coefficient_se=_huber_sandwich(X, resid, scale, c),
        column_names=tuple(column_names),
        scale=scale,
    )


def design_rank_deficient_columns(design, names: Sequence[str]) -> list:
    """Columns that add nothing to the rank of [1, design], in order."""
    X = np.asarray(design, dtype=float)
    kept = np.ones((X.shape[0], 1))
    rank = 1
    offending = []
    for k, name in enumerate(names):
        trial = np.hstack([kept, X[:, [k]]])
        trial_rank = np.linalg.matrix_rank(trial)
        if trial_rank > rank:
            kept, rank = trial, trial_rank
        else:
            offending.append(name)
    return offending
