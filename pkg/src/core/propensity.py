"""
Propensity Module.

Fits the intervention-level treatment model, truncates component scores and
builds each outcome unit's joint propensity psi_i(z, g).
"""

from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from src.core.design import design_matrix, formula_from_columns
from src.core.mappings import ExposureMapping, get_mapping
from src.core.regression import fit_logistic, predict_logistic, quantile
from src.exceptions import MappingError, ParameterError, PropensityError
from src.models.estimates import PropensityBundle, PropensityFit, TruncationConfig
from src.models.network import BipartiteNetwork, EtaSummary, UnitTable

logger = structlog.get_logger()

Bounds = Tuple[float, float]
CELLS = ((1, 1), (1, 0), (0, 1), (0, 0))


def propensity_frame(
    intervention_covariates: Union[UnitTable, pd.DataFrame],
    eta_summaries: Iterable[Union[EtaSummary, pd.DataFrame]] = (),
) -> pd.DataFrame:
    """Intervention covariates joined with eta summaries; empty eta groups imputed."""
    if isinstance(intervention_covariates, UnitTable):
        base = intervention_covariates.covariates
    else:
        base = intervention_covariates
    parts = [base.reset_index(drop=True)]
    for summary in eta_summaries:
        eta = summary.imputed() if isinstance(summary, EtaSummary) else summary
        if len(eta) != len(base):
            raise MappingError(f"eta summary has {len(eta)} rows, expected {len(base)}")
        parts.append(eta.reset_index(drop=True))
    frame = pd.concat(parts, axis=1)
    frame.index = base.index
    return frame


def fit_intervention_propensity(
    intervention_covariates: Union[UnitTable, pd.DataFrame],
    eta_summaries: Iterable[Union[EtaSummary, pd.DataFrame]],
    T,
    formula: Optional[str] = None,
    fit_rows: Optional[Sequence[int]] = None,
) -> PropensityFit:
    """
    Logistic model of P(T_j = 1) on intervention covariates and eta summaries.

    The model is fit on `fit_rows` (all units by default) and scored on every
    unit. Design columns constant over the fit rows are dropped with a warning,
    so an uninformative design reduces to the intercept-only fit.

    Args:
        intervention_covariates: J-row covariate table
        eta_summaries: Key/upwind outcome-covariate summaries, J rows each
        T: Binary treatment vector of length J
        formula: patsy right-hand side; defaults to every column, linear
        fit_rows: Subset of intervention indices to fit on

    Returns:
        PropensityFit with phi for all J units
    """
    frame = propensity_frame(intervention_covariates, eta_summaries)
    formula = formula if formula is not None else formula_from_columns(frame.columns)
    design, names, _ = design_matrix(formula, frame)

    T = np.asarray(T, dtype=float)
    rows = np.arange(len(frame)) if fit_rows is None else np.asarray(fit_rows, dtype=np.int64)

    fit_design = design[rows]
    constant = np.ptp(fit_design, axis=0) == 0.0 if fit_design.size else np.zeros(len(names), dtype=bool)
    dropped = tuple(name for name, flag in zip(names, constant) if flag)
    if dropped:
        logger.warning("propensity_columns_dropped", columns=list(dropped), reason="zero variance")
    keep = ~constant
    kept_names = tuple(name for name, flag in zip(names, keep) if flag)

    model = fit_logistic(design[rows][:, keep], T[rows], column_names=kept_names)
    phi = predict_logistic(model, design[:, keep])
    logger.debug(
        "propensity_fitted",
        units=int(rows.size),
        columns=len(kept_names),
        converged=model.converged,
        iterations=model.iterations,
    )
    return PropensityFit(
        model=model, phi=phi, formula=formula, columns=kept_names, frame=frame, dropped=dropped
    )


def _check_quantiles(lower_q: float, upper_q: float):
    if not 0.0 <= lower_q < upper_q <= 1.0:
        raise ParameterError(
            f"truncation quantiles need 0 <= lower < upper <= 1, got ({lower_q}, {upper_q})"
        )


def truncation_bounds(scores, lower_q: float, upper_q: float) -> Bounds:
    """Nearest-rank clip values for the given quantile levels."""
    _check_quantiles(lower_q, upper_q)
    return quantile(scores, lower_q), quantile(scores, upper_q)


def truncate_scores(
    scores, lower_q: float, upper_q: float, bounds: Optional[Bounds] = None
) -> np.ndarray:
    """
    Clip scores to their nearest-rank lower_q / upper_q quantiles.

    Precomputed `bounds` replace the quantiles of `scores` themselves.
    """
    _check_quantiles(lower_q, upper_q)
    values = np.asarray(scores, dtype=float)
    lower, upper = bounds if bounds is not None else truncation_bounds(values, lower_q, upper_q)
    return np.clip(values, lower, upper)


def build_joint_propensity(
    network: BipartiteNetwork,
    phi,
    truncation: Optional[TruncationConfig] = None,
    mapping: Optional[ExposureMapping] = None,
    outcome_index: Optional[Sequence[int]] = None,
    fixed_bounds: Optional[Dict[str, Bounds]] = None,
) -> PropensityBundle:
    """
    Joint propensity psi_i(z, g) = P(Z_i = z) * P(G_i = g) under independent assignment.

    Component scores are truncated first (key and upwind separately), then each
    of the four joint cells is truncated with bounds computed per cell over the
    outcome units. `outcome_index` selects (possibly repeated) outcome units;
    `fixed_bounds` reuses previously recorded bounds instead of recomputing them.
    """
    truncation = truncation or TruncationConfig()
    mapping = mapping or get_mapping()
    phi = np.asarray(phi, dtype=float)

    p_key, p_upwind = mapping.component_probabilities(network, phi)
    if outcome_index is not None:
        index = np.asarray(outcome_index, dtype=np.int64)
        p_key, p_upwind = p_key[index], p_upwind[index]
    for name, values in (("key", p_key), ("upwind", p_upwind)):
        if ((values <= 0.0) | (values >= 1.0)).any():
            raise PropensityError(f"{name} component scores must lie strictly inside (0, 1)")

    bounds: Dict[str, Bounds] = {}

    def _clip(name: str, values: np.ndarray, levels: Bounds) -> np.ndarray:
        given = fixed_bounds.get(name) if fixed_bounds else None
        bounds[name] = given if given is not None else truncation_bounds(values, *levels)
        return np.clip(values, *bounds[name])

    p_key = _clip("component_key", p_key, truncation.component)
    p_upwind = _clip("component_upwind", p_upwind, truncation.component)

    psi = np.empty((p_key.shape[0], 2, 2))
    key_level = (1.0 - p_key, p_key)
    upwind_level = (1.0 - p_upwind, p_upwind)
    for z, g in CELLS:
        psi[:, z, g] = _clip(f"joint_{z}{g}", key_level[z] * upwind_level[g], truncation.joint)

    return PropensityBundle(
        phi=phi,
        psi=psi,
        p_key=p_key,
        p_upwind=p_upwind,
        truncation_bounds=bounds,
    )
