"""
Composition of the estimation stages on one dataset.

`prepare_inputs` derives everything that is fixed for a dataset (exposures,
eta summaries, the outcome-level covariate frame, subgroup masks);
`run_analysis` fits both nuisance models and evaluates the estimand grid,
optionally on a resample of outcome units.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import structlog

from src.core.effects import EffectEstimator, fit_outcome_model, subgroup_masks
from src.core.exposure import (
    cell_counts,
    derive_exposure_structure,
    key_plant_covariates,
    map_treatments,
    summarize_outcome_covariates,
)
from src.core.mappings import ExposureMapping, get_mapping
from src.core.propensity import build_joint_propensity, fit_intervention_propensity
from src.exceptions import MappingError, SubgroupError
from src.models.estimates import (
    EffectEstimate,
    EstimationSettings,
    OutcomePredictions,
    PropensityBundle,
    PropensityFit,
)
from src.models.network import BipartiteDataset, EtaSummary, ExposureAssignment

logger = structlog.get_logger()


@dataclass(frozen=True, eq=False)
class AnalysisInputs:
    """Dataset-level quantities shared by the full-data fit and every resample."""

    dataset: BipartiteDataset
    mapping: ExposureMapping
    T: np.ndarray
    Y: Optional[np.ndarray]
    assignment: ExposureAssignment
    eta: List[EtaSummary]
    outcome_frame: pd.DataFrame  # outcome covariates + KeyPlant covariates, one row per outcome unit
    subgroups: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def network(self):
        return self.dataset.network

    @property
    def n(self) -> int:
        return self.dataset.network.n

    def require_outcome(self) -> np.ndarray:
        if self.Y is None:
            raise MappingError("outcome table has no outcome column")
        return self.Y


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    propensity: Optional[PropensityFit]
    bundle: Optional[PropensityBundle]
    predictions: OutcomePredictions
    estimator: EffectEstimator
    estimates: List[EffectEstimate]
    outcome_index: Optional[np.ndarray] = None


def frozen_eta(eta: Sequence[EtaSummary], intervention_ids: Sequence[str]) -> List[EtaSummary]:
    """Eta summaries of a larger population, restricted to the given intervention units."""
    restricted = []
    for summary in eta:
        frame = summary.frame.loc[list(intervention_ids)]
        position = summary.frame.index.get_indexer(list(intervention_ids))
        restricted.append(
            EtaSummary(
                role=summary.role,
                frame=frame,
                empty=summary.empty[position],
                group_sizes=summary.group_sizes[position],
            )
        )
    return restricted


def prepare_inputs(
    dataset: BipartiteDataset,
    settings: Optional[EstimationSettings] = None,
    eta: Optional[Sequence[EtaSummary]] = None,
) -> AnalysisInputs:
    """
    Derive exposures, eta summaries and subgroup masks for a dataset.

    Eta summaries computed on a larger population can be passed in; they are
    restricted to the dataset's intervention units instead of recomputed.
    """
    settings = settings or EstimationSettings()
    network = dataset.network
    if not network.derived:
        network = derive_exposure_structure(network)
        dataset = BipartiteDataset(network, dataset.interventions, dataset.outcomes)
    if dataset.interventions.treatment is None:
        raise MappingError("intervention table has no treatment column")

    mapping = get_mapping(settings.mapping)
    T = dataset.interventions.treatment
    assignment = map_treatments(network, T, mapping)
    if eta is None:
        eta = [
            summarize_outcome_covariates(network, dataset.outcomes, "key"),
            summarize_outcome_covariates(network, dataset.outcomes, "upwind"),
        ]
    else:
        eta = frozen_eta(eta, network.intervention_ids)
    outcome_frame = pd.concat(
        [dataset.outcomes.covariates, key_plant_covariates(network, dataset.interventions)], axis=1
    )
    subgroups = subgroup_masks(outcome_frame, settings.subgroups)

    counts = cell_counts(assignment)
    logger.info(
        "exposures_mapped",
        J=network.J,
        n=network.n,
        treated_fraction=float(np.mean(T)),
        n_11=int(counts[1, 1]),
        n_10=int(counts[1, 0]),
        n_01=int(counts[0, 1]),
        n_00=int(counts[0, 0]),
    )
    return AnalysisInputs(
        dataset=dataset,
        mapping=mapping,
        T=np.asarray(T, dtype=float),
        Y=dataset.outcomes.outcome,
        assignment=assignment,
        eta=eta,
        outcome_frame=outcome_frame,
        subgroups=subgroups,
    )


def needs_propensity(settings: EstimationSettings) -> bool:
    return any(method != "G" for method in settings.methods)


def run_analysis(
    inputs: AnalysisInputs,
    settings: EstimationSettings,
    outcome_index: Optional[Sequence[int]] = None,
    fit_rows: Optional[Sequence[int]] = None,
    fixed_bounds: Optional[Dict] = None,
    skip_empty_subgroups: bool = False,
) -> AnalysisResult:
    """
    Fit the propensity and outcome models and evaluate the estimand grid.

    Args:
        inputs: Prepared dataset quantities
        settings: Formulas, truncation and estimand grid
        outcome_index: Outcome units (with repeats) to analyse; all by default
        fit_rows: Intervention units the propensity model is fit on
        fixed_bounds: Truncation bounds to reuse instead of recomputing
        skip_empty_subgroups: Drop subgroups without members instead of failing
    """
    Y = inputs.require_outcome()
    index = None if outcome_index is None else np.asarray(outcome_index, dtype=np.int64)

    propensity = bundle = None
    if needs_propensity(settings):
        propensity = fit_intervention_propensity(
            inputs.dataset.interventions,
            inputs.eta,
            inputs.T,
            formula=settings.propensity_formula,
            fit_rows=fit_rows,
        )
        bundle = build_joint_propensity(
            inputs.network,
            propensity.phi,
            settings.truncation,
            inputs.mapping,
            outcome_index=index,
            fixed_bounds=fixed_bounds,
        )

    if index is None:
        frame, assignment, y = inputs.outcome_frame, inputs.assignment, Y
        masks = inputs.subgroups
    else:
        frame = inputs.outcome_frame.iloc[index]
        assignment, y = inputs.assignment.take(index), Y[index]
        masks = {name: mask[index] for name, mask in inputs.subgroups.items()}

    if skip_empty_subgroups:
        empty = [name for name, mask in masks.items() if not mask.any()]
        if empty:
            logger.debug("subgroups_skipped", subgroups=empty)
        masks = {name: mask for name, mask in masks.items() if mask.any()}
    else:
        for name, mask in masks.items():
            if not mask.any():
                raise SubgroupError(f"subgroup {name!r} has no members")

    predictions = fit_outcome_model(frame, assignment, y, settings.outcome_formula)
    estimator = EffectEstimator(y, assignment, predictions, bundle, masks)
    estimates = estimator.grid(settings.methods, settings.estimands)
    return AnalysisResult(
        propensity=propensity,
        bundle=bundle,
        predictions=predictions,
        estimator=estimator,
        estimates=estimates,
        outcome_index=index,
    )


def estimates_frame(estimates: Sequence[EffectEstimate]) -> pd.DataFrame:
    """Rows `estimand,held_level,method,subgroup,n_x,estimate,ci_lower,ci_upper`."""
    return pd.DataFrame(
        [e.as_row() for e in estimates],
        columns=["estimand", "held_level", "method", "subgroup", "n_x", "estimate", "ci_lower", "ci_upper"],
    )
