"""
Monte Carlo runner for one scenario.

Steps outside the replication loop (fixed per scenario): population,
low-influence filter, eta summaries, treatments, planted subgroups, sample
draw and the propensity fit. Inside the loop only outcomes are regenerated
and the outcome model is refit.
"""

import dataclasses
import time
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import structlog

from src.core.analysis import AnalysisInputs, prepare_inputs
from src.core.effects import EffectEstimator, contrast_cells, fit_outcome_model, percent_absolute_bias
from src.core.exposure import (
    cell_counts,
    derive_exposure_structure,
    exposure_units,
    filter_low_influence,
    restrict_dataset,
    summarize_outcome_covariates,
)
from src.core.propensity import build_joint_propensity, fit_intervention_propensity
from src.core.streams import (
    STAGE_NETWORK,
    STAGE_OUTCOME,
    STAGE_SAMPLE,
    STAGE_TREATMENT,
    parallel_map,
    replicate_rng,
)
from src.exceptions import BNIError, ConfigError, ParameterError
from src.integrations.csv_io import read_dataset
from src.models.estimates import ESTIMANDS, METHODS, EstimationSettings, PropensityBundle
from src.models.network import BipartiteDataset
from src.models.scenario import SUBGROUP_LABELS, PlantedEffects, SimScenario
from src.simulation.generators import (
    generate_outcomes,
    generate_synthetic_network,
    generate_treatments,
    plant_heterogeneity,
)
from src.simulation.specs import outcome_formula, propensity_formula

logger = structlog.get_logger()

AB_COLUMNS = [
    "scenario",
    "replicate",
    "subgroup",
    "estimand",
    "held_level",
    "method",
    "estimate",
    "truth",
    "ab",
]
FAILURE_COLUMNS = ["scenario", "replicate", "error", "message"]


@dataclass(frozen=True, eq=False)
class ScenarioPopulation:
    """Everything held fixed across the replications of a scenario."""

    inputs: AnalysisInputs
    planted: PlantedEffects
    true_p: np.ndarray
    settings: EstimationSettings


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    scenario: SimScenario
    table: pd.DataFrame
    failures: pd.DataFrame
    cell_counts: np.ndarray
    treated_fraction: float


def _load_population(scenario: SimScenario) -> BipartiteDataset:
    paths = (scenario.network_path, scenario.interventions_path, scenario.outcomes_path)
    if any(paths):
        if not all(paths):
            raise ConfigError("a loaded population needs network_path, interventions_path and outcomes_path")
        dataset = read_dataset(*paths)
        network = derive_exposure_structure(dataset.network)
        return BipartiteDataset(network, dataset.interventions, dataset.outcomes)
    return generate_synthetic_network(scenario.network, replicate_rng(scenario.seed, STAGE_NETWORK))


def build_population(scenario: SimScenario) -> ScenarioPopulation:
    """Population, treatments, planted effects and sample of one scenario."""
    dataset = _load_population(scenario)
    if scenario.filter_low_influence:
        dataset = filter_low_influence(dataset, scenario.filter_quantile)
    network = dataset.network

    # eta is computed once on the full population and frozen
    eta = [
        summarize_outcome_covariates(network, dataset.outcomes, "key"),
        summarize_outcome_covariates(network, dataset.outcomes, "upwind"),
    ]
    T, true_p = generate_treatments(
        eta[0].imputed(),
        dataset.interventions.covariates,
        replicate_rng(scenario.seed, STAGE_TREATMENT),
    )
    dataset = BipartiteDataset(network, dataset.interventions.with_treatment(T), dataset.outcomes)
    planted = plant_heterogeneity(dataset.outcomes.covariates, scenario.xi)

    if scenario.sample_proportion < 1.0:
        rng = replicate_rng(scenario.seed, STAGE_SAMPLE)
        size = max(int(round(scenario.sample_proportion * network.n)), 2)
        sample = np.sort(rng.choice(network.n, size=size, replace=False))
        retained = exposure_units(network, sample)
        true_p = true_p[retained]
        dataset = restrict_dataset(dataset, sample, retained)
        planted = planted.take(sample)
        logger.debug("population_sampled", n=size, J=int(retained.size))

    settings = EstimationSettings(
        propensity_formula=propensity_formula(scenario),
        outcome_formula=outcome_formula(scenario),
        truncation=scenario.truncation,
    )
    inputs = prepare_inputs(dataset, settings, eta=eta)
    outcome_frame = inputs.outcome_frame.assign(
        SubgroupMid=(planted.labels == "mid").astype(float),
        SubgroupHigh=(planted.labels == "high").astype(float),
    )
    inputs = dataclasses.replace(inputs, outcome_frame=outcome_frame, subgroups=planted.masks())
    return ScenarioPopulation(inputs=inputs, planted=planted, true_p=true_p, settings=settings)


def fit_scenario_propensity(population: ScenarioPopulation) -> PropensityBundle:
    inputs, settings = population.inputs, population.settings
    fit = fit_intervention_propensity(
        inputs.dataset.interventions, inputs.eta, inputs.T, formula=settings.propensity_formula
    )
    logger.debug(
        "scenario_propensity_fitted",
        mean_abs_error=float(np.mean(np.abs(fit.phi - population.true_p))),
    )
    return build_joint_propensity(inputs.network, fit.phi, settings.truncation, inputs.mapping)


def replicate_rows(
    scenario: SimScenario,
    population: ScenarioPopulation,
    bundle: PropensityBundle,
    replicate: int,
) -> List[Dict[str, object]]:
    """AB rows of one Monte Carlo replication."""
    inputs = population.inputs
    rng = replicate_rng(scenario.seed, STAGE_OUTCOME, replicate)
    outcomes = generate_outcomes(
        inputs.dataset.outcomes.covariates, inputs.assignment, population.planted, scenario.sigma2, rng
    )
    predictions = fit_outcome_model(
        inputs.outcome_frame, inputs.assignment, outcomes.observed, population.settings.outcome_formula
    )
    estimator = EffectEstimator(outcomes.observed, inputs.assignment, predictions, bundle, inputs.subgroups)

    rows = []
    for label in SUBGROUP_LABELS:
        members = inputs.subgroups[label]
        if not members.any():
            continue
        for kind in ESTIMANDS:
            for held in (0, 1):
                treated, control = contrast_cells(kind, held)
                truth = float(
                    np.mean(outcomes.table[members, treated[0], treated[1]] - outcomes.table[members, control[0], control[1]])
                )
                for method in METHODS:
                    estimate = estimator.effect(method, kind, held, label).estimate
                    rows.append(
                        {
                            "scenario": scenario.name,
                            "replicate": replicate,
                            "subgroup": label,
                            "estimand": kind,
                            "held_level": held,
                            "method": method,
                            "estimate": estimate,
                            "truth": truth,
                            "ab": percent_absolute_bias(estimate, truth, scenario.xi),
                        }
                    )
    return rows


def run_scenario(scenario: SimScenario, threads: int = 1, population: Optional[ScenarioPopulation] = None) -> ScenarioResult:
    """
    Run the replications of one scenario and record percent absolute bias.

    Replicate failures are recorded in `failures` and do not stop the run.
    """
    if scenario.xi == 0:
        raise ParameterError("percent absolute bias needs a nonzero xi")
    start_time = time.time()
    population = population or build_population(scenario)
    bundle = fit_scenario_propensity(population)
    counts = cell_counts(population.inputs.assignment)
    treated_fraction = float(np.mean(population.inputs.T))
    logger.info(
        "scenario_starting",
        scenario=scenario.name,
        misspec=scenario.misspec,
        J=population.inputs.network.J,
        n=population.inputs.n,
        treated_fraction=treated_fraction,
        cell_counts=counts.tolist(),
        replications=scenario.replications,
    )

    def _one(replicate: int):
        try:
            return replicate_rows(scenario, population, bundle, replicate), None
        except BNIError as e:
            logger.warning("replicate_failed", scenario=scenario.name, replicate=replicate, error=str(e))
            return [], {
                "scenario": scenario.name,
                "replicate": replicate,
                "error": type(e).__name__,
                "message": str(e),
            }

    outcomes = parallel_map(_one, list(range(scenario.replications)), threads)
    table = pd.DataFrame([row for rows, _ in outcomes for row in rows], columns=AB_COLUMNS)
    failures = pd.DataFrame([f for _, f in outcomes if f is not None], columns=FAILURE_COLUMNS)

    logger.info(
        "scenario_complete",
        scenario=scenario.name,
        rows=len(table),
        failures=len(failures),
        duration=time.time() - start_time,
    )
    return ScenarioResult(scenario, table, failures, counts, treated_fraction)
