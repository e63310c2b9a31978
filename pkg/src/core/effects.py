"""
Effects Module.

G-computation, AIPW and SAIPW estimators of the mean potential outcome
mu(z, g), the direct and spillover contrasts built from them, their
subgroup versions and per-unit IATE vectors.

Every estimator is the mean of a per-unit pseudo-outcome:

    G:      mu_hat_i(z, g)
    AIPW:   w_i * Y_i + (1 - w_i) * mu_hat_i(z, g),      w_i = I_i(z, g) / psi_i(z, g)
    SAIPW:  as AIPW with w_i scaled by 1 / mean_k(w_k), the mean taken over
            the full sample even when averaging inside a subgroup.
"""

from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from src.core.design import design_matrix, formula_from_columns, rebuild_design
from src.core.regression import fit_ols, predict_linear
from src.exceptions import (
    ConfigError,
    DimensionError,
    ParameterError,
    PropensityError,
    StabilizationError,
    SubgroupError,
)
from src.models.estimates import (
    ESTIMANDS,
    METHODS,
    EffectEstimate,
    OutcomePredictions,
    PropensityBundle,
)
from src.models.network import ExposureAssignment

logger = structlog.get_logger()

PsiLike = Union[PropensityBundle, np.ndarray]


def default_outcome_formula(columns: Sequence[str]) -> str:
    """Every covariate linearly plus the Z and G main effects."""
    terms = formula_from_columns([c for c in columns if c not in ("Z", "G")])
    return f"{terms} + Z + G" if terms else "Z + G"


def fit_outcome_model(
    covariates: pd.DataFrame,
    assignment: ExposureAssignment,
    Y,
    formula: Optional[str] = None,
) -> OutcomePredictions:
    """
    OLS outcome model, evaluated at all four (z, g) cells.

    `covariates` holds outcome-unit covariates and the key intervention unit's
    covariates, one row per outcome unit. Counterfactual prediction toggles
    only Z and G; everything else stays at its observed value.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] != len(covariates) or assignment.n != len(covariates):
        raise DimensionError(
            f"outcome model inputs disagree: {len(covariates)} rows, {assignment.n} exposures, {Y.shape[0]} outcomes"
        )
    data = covariates.reset_index(drop=True).copy()
    data["Z"] = assignment.Z.astype(float)
    data["G"] = assignment.G.astype(float)

    formula = formula if formula is not None else default_outcome_formula(list(covariates.columns))
    design, names, design_info = design_matrix(formula, data)
    if "Z" not in names or "G" not in names:
        raise ConfigError(f"outcome formula must contain the Z and G main effects: {formula!r}")

    model = fit_ols(design, Y, column_names=names)
    mu_hat = np.empty((len(data), 2, 2))
    for z in (0, 1):
        for g in (0, 1):
            counterfactual = data.assign(Z=float(z), G=float(g))
            mu_hat[:, z, g] = predict_linear(model, rebuild_design(design_info, counterfactual))
    logger.debug("outcome_model_fitted", n=len(data), columns=len(names))
    return OutcomePredictions(mu_hat=mu_hat, model=model)


def _psi_cell(psi: PsiLike, z: int, g: int) -> np.ndarray:
    table = psi.psi if isinstance(psi, PropensityBundle) else np.asarray(psi, dtype=float)
    return table[:, z, g]


def _members(subgroup: Optional[np.ndarray], n: int) -> np.ndarray:
    if subgroup is None:
        return np.ones(n, dtype=bool)
    mask = np.asarray(subgroup, dtype=bool)
    if mask.shape != (n,):
        raise DimensionError(f"subgroup mask has shape {mask.shape}, expected ({n},)")
    if not mask.any():
        raise SubgroupError("subgroup has no members")
    return mask


def _ipw_weights(assignment: ExposureAssignment, psi: PsiLike, z: int, g: int) -> np.ndarray:
    cell = _psi_cell(psi, z, g)
    if not (cell > 0.0).all():
        raise PropensityError(f"joint propensity psi({z},{g}) is not strictly positive for every unit")
    return assignment.in_cell(z, g) / cell


def pseudo_outcomes(
    method: str,
    Y,
    assignment: ExposureAssignment,
    psi: Optional[PsiLike],
    predictions: OutcomePredictions,
    z: int,
    g: int,
) -> np.ndarray:
    """Per-unit summands of the method's mu(z, g) estimator over the full sample."""
    mu = predictions.mu_hat[:, z, g]
    if method == "G":
        return mu.copy()
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}; expected one of {METHODS}")

    weights = _ipw_weights(assignment, psi, z, g)
    if method == "SAIPW":
        total = weights.sum()
        if not assignment.in_cell(z, g).any() or total <= 0.0:
            raise StabilizationError(f"no unit in cell (z={z}, g={g}); stabilization is undefined")
        weights = weights * (weights.shape[0] / total)
    return weights * np.asarray(Y, dtype=float) + (1.0 - weights) * mu


def gcomp_mu(predictions: OutcomePredictions, z: int, g: int, subgroup: Optional[np.ndarray] = None) -> float:
    """Mean counterfactual prediction over the subgroup."""
    members = _members(subgroup, predictions.n)
    return float(predictions.mu_hat[members, z, g].mean())


def aipw_mu(
    Y,
    assignment: ExposureAssignment,
    psi: PsiLike,
    predictions: OutcomePredictions,
    z: int,
    g: int,
    subgroup: Optional[np.ndarray] = None,
) -> float:
    """Doubly robust mean of the (z, g) potential outcome over the subgroup."""
    members = _members(subgroup, predictions.n)
    return float(pseudo_outcomes("AIPW", Y, assignment, psi, predictions, z, g)[members].mean())


def saipw_mu(
    Y,
    assignment: ExposureAssignment,
    psi: PsiLike,
    predictions: OutcomePredictions,
    z: int,
    g: int,
    subgroup: Optional[np.ndarray] = None,
) -> float:
    """AIPW with weights normalized to average one over the full sample."""
    members = _members(subgroup, predictions.n)
    return float(pseudo_outcomes("SAIPW", Y, assignment, psi, predictions, z, g)[members].mean())


def contrast_cells(kind: str, held_level: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """(treated cell, control cell) of a direct or spillover contrast."""
    if held_level not in (0, 1):
        raise ParameterError(f"held level must be 0 or 1, got {held_level}")
    if kind == "direct":
        return (1, held_level), (0, held_level)
    if kind == "spillover":
        return (held_level, 1), (held_level, 0)
    raise ParameterError(f"unknown estimand {kind!r}; expected one of {ESTIMANDS}")


def percent_absolute_bias(estimate: float, truth: float, xi: float) -> float:
    """|estimate - truth| / |xi| * 100."""
    if xi == 0:
        raise ParameterError("percent absolute bias is undefined for xi = 0")
    return abs(estimate - truth) / abs(xi) * 100.0


def subgroup_masks(frame: pd.DataFrame, predicates: Mapping[str, str]) -> Dict[str, np.ndarray]:
    """Evaluate named pandas `eval` predicates on an outcome-level frame."""
    masks: Dict[str, np.ndarray] = {}
    for name, expression in predicates.items():
        try:
            result = frame.eval(expression)
        except Exception as e:
            raise ConfigError(f"subgroup {name!r}: cannot evaluate {expression!r}: {e}") from e
        values = np.asarray(result)
        if values.dtype != bool or values.shape != (len(frame),):
            raise ConfigError(f"subgroup {name!r}: {expression!r} is not a row-wise condition")
        masks[name] = values
    return masks


class EffectEstimator:
    """
    Direct and spillover effects on one dataset.

    Pseudo-outcome vectors are cached per (method, z, g), so a full grid of
    estimands, methods and subgroups touches each cell once.
    """

    def __init__(
        self,
        Y,
        assignment: ExposureAssignment,
        predictions: OutcomePredictions,
        propensity: Optional[PsiLike] = None,
        subgroups: Optional[Mapping[str, np.ndarray]] = None,
    ):
        self.Y = np.asarray(Y, dtype=float)
        self.assignment = assignment
        self.predictions = predictions
        self.propensity = propensity
        self.subgroups: Dict[str, np.ndarray] = dict(subgroups or {})
        n = self.Y.shape[0]
        if assignment.n != n or predictions.n != n:
            raise DimensionError(
                f"estimator inputs disagree: {n} outcomes, {assignment.n} exposures, {predictions.n} predictions"
            )
        self._cache: Dict[Tuple[str, int, int], np.ndarray] = {}

    @property
    def n(self) -> int:
        return int(self.Y.shape[0])

    def pseudo(self, method: str, z: int, g: int) -> np.ndarray:
        key = (method, z, g)
        if key not in self._cache:
            if method != "G" and self.propensity is None:
                raise ConfigError(f"method {method} needs joint propensities")
            self._cache[key] = pseudo_outcomes(
                method, self.Y, self.assignment, self.propensity, self.predictions, z, g
            )
        return self._cache[key]

    def _mask(self, subgroup: Optional[str]) -> Optional[np.ndarray]:
        if subgroup is None or subgroup == "all":
            return None
        if subgroup not in self.subgroups:
            raise ConfigError(f"unknown subgroup {subgroup!r}")
        return self.subgroups[subgroup]

    def mu(self, method: str, z: int, g: int, subgroup: Optional[str] = None) -> float:
        members = _members(self._mask(subgroup), self.n)
        return float(self.pseudo(method, z, g)[members].mean())

    def iate(self, method: str, kind: str, held_level: int) -> np.ndarray:
        """Per-unit contrast of pseudo-outcomes; its mean is the population effect."""
        treated, control = contrast_cells(kind, held_level)
        return self.pseudo(method, *treated) - self.pseudo(method, *control)

    def effect(
        self, method: str, kind: str, held_level: int, subgroup: Optional[str] = None
    ) -> EffectEstimate:
        members = _members(self._mask(subgroup), self.n)
        treated, control = contrast_cells(kind, held_level)
        estimate = float(self.pseudo(method, *treated)[members].mean()) - float(
            self.pseudo(method, *control)[members].mean()
        )
        return EffectEstimate(
            estimand=kind,
            held_level=held_level,
            method=method,
            subgroup=None if subgroup in (None, "all") else subgroup,
            n_x=int(members.sum()),
            estimate=estimate,
        )

    def grid(
        self,
        methods: Iterable[str] = METHODS,
        estimands: Iterable[str] = ESTIMANDS,
        subgroups: Optional[Sequence[str]] = None,
    ) -> List[EffectEstimate]:
        """Every (estimand, held level, method, subgroup) combination, in that nesting order."""
        groups = ["all"] + list(self.subgroups) if subgroups is None else list(subgroups)
        methods, estimands = list(methods), list(estimands)
        return [
            self.effect(method, kind, held, group)
            for kind in estimands
            for held in (0, 1)
            for method in methods
            for group in groups
        ]
