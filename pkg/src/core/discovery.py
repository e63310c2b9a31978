"""
Subgroup discovery: robust regression of de-meaned IATEs on median-split covariates.
"""

import math
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
import structlog

from src.core.regression import HUBER_C, design_rank_deficient_columns, fit_huber, quantile
from src.exceptions import (
    CollinearityError,
    DegenerateCovariateError,
    DimensionError,
    EmptyInputError,
    ParameterError,
)
from src.models.estimates import DiscoveryReport, DiscoveryRow

logger = structlog.get_logger()

Z_95 = 1.96
# Relative size below which a coefficient or SE is round-off
SNAP_TOL = 1e-10


def binarize_at_median(covariates: pd.DataFrame) -> Tuple[pd.DataFrame, Dict[str, float]]:
    """
    1 where a value exceeds its column's nearest-rank median, else 0.

    Returns:
        (binary frame with the same columns and index, cut value per column)
    """
    binary = {}
    cuts: Dict[str, float] = {}
    for name in covariates.columns:
        values = covariates[name].to_numpy(dtype=float)
        if np.unique(values).size < 2:
            raise DegenerateCovariateError(f"covariate {name!r} has fewer than two distinct values")
        cuts[name] = quantile(values, 0.5)
        binary[name] = (values > cuts[name]).astype(float)
    return pd.DataFrame(binary, index=covariates.index, columns=list(covariates.columns)), cuts


def demean(values) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInputError("cannot de-mean an empty vector")
    return v - v.mean()


def discover(
    iates,
    binarized: pd.DataFrame,
    estimand: str = "direct",
    held_level: int = 0,
    method: str = "AIPW",
    cuts: Optional[Dict[str, float]] = None,
    c: float = HUBER_C,
) -> DiscoveryReport:
    """
    Regress de-meaned IATEs jointly on every binarized covariate with Huber IRLS.

    Each coefficient is the additive deviation of the covariate's upper-half
    group from the average effect; CIs are coefficient +/- 1.96 robust SE.

    Raises:
        CollinearityError: a binarized column adds no rank to [1, design]
    """
    iates = np.asarray(iates, dtype=float).ravel()
    if iates.shape[0] != len(binarized):
        raise DimensionError(f"{iates.shape[0]} IATEs for {len(binarized)} covariate rows")
    names = list(binarized.columns)
    design = binarized.to_numpy(dtype=float)

    offending = design_rank_deficient_columns(design, names)
    if offending:
        raise CollinearityError(offending)

    average = float(iates.mean())
    model = fit_huber(design, demean(iates), c=c, column_names=names)
    se = model.coefficient_se if model.coefficient_se is not None else np.zeros_like(model.coefficients)
    tol = SNAP_TOL * max(1.0, float(np.abs(iates).max(initial=0.0)))

    rows = []
    for k, name in enumerate(names, start=1):
        coefficient = _snap(float(model.coefficients[k]), tol)
        se_k = _snap(float(se[k]), tol)
        half_width = Z_95 * se_k
        lower, upper = coefficient - half_width, coefficient + half_width
        # a zero SE means an exact fit: only a nonzero deviation counts
        significant = coefficient != 0.0 if se_k == 0.0 else (lower > 0.0 or upper < 0.0)
        rows.append(
            DiscoveryRow(
                covariate=name,
                coefficient=coefficient,
                se=se_k,
                ci_lower=lower,
                ci_upper=upper,
                significant=bool(significant),
            )
        )

    logger.debug(
        "discovery_fitted",
        estimand=estimand,
        held_level=held_level,
        method=method,
        significant=sum(r.significant for r in rows),
        converged=model.converged,
    )
    return DiscoveryReport(
        estimand=estimand,
        held_level=held_level,
        method=method,
        average_effect=average,
        intercept=float(model.coefficients[0]),
        converged=model.converged,
        cuts=dict(cuts or {}),
        rows=rows,
    )


def _snap(value: float, tol: float) -> float:
    return 0.0 if abs(value) <= tol else value


def trim_outcomes(Y, fraction: float) -> np.ndarray:
    """
    Indices kept after dropping the floor(fraction * n) smallest and largest outcomes.

    Returned in ascending index order; ties are broken by position.
    """
    if not 0.0 <= fraction < 0.5:
        raise ParameterError(f"trim fraction must lie in [0, 0.5), got {fraction}")
    Y = np.asarray(Y, dtype=float)
    cut = math.floor(round(fraction * Y.shape[0], 9))
    if cut == 0:
        return np.arange(Y.shape[0])
    order = np.argsort(Y, kind="stable")
    return np.sort(order[cut : Y.shape[0] - cut])
