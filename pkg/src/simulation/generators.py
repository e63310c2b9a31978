"""
Synthetic populations and the treatment / outcome generating laws.

Covariate distributions are documented defaults matched to the usual means
and ranges of the county-level covariates they stand in for:

    outcome level
        LogPop         Normal(8.3, 1.2) clipped to [1.39, 11.65]
        SmokeRate      Beta, mean 0.26, clipped to [0.10, 0.43]
        PctHighSchool  Beta, mean 0.35
        PctUrban       Beta, mean 0.25 + 0.32 * x (x = east-west position)
        PctPoor        Beta, mean 0.12
        PctNonwhite    Beta, mean 0.11
    intervention level
        LogOpTime      Normal(7.75, 0.7) clipped to [5.46, 8.93]
"""

from typing import Tuple

import numpy as np
import pandas as pd
import structlog
from scipy.special import expit

from src.core.exposure import derive_exposure_structure
from src.core.regression import quantile
from src.exceptions import ParameterError, UnitTableError
from src.models.network import BipartiteDataset, BipartiteNetwork, ExposureAssignment, UnitTable
from src.models.scenario import PlantedEffects, PotentialOutcomes, SyntheticNetworkSpec

logger = structlog.get_logger()

OUTCOME_COVARIATES = ("LogPop", "SmokeRate", "PctHighSchool", "PctUrban", "PctPoor", "PctNonwhite")
INTERVENTION_COVARIATES = ("LogOpTime",)

NONWHITE_LEVEL = 0.33
POOR_LEVEL = 0.5


def _beta(rng: np.random.Generator, mean, concentration: float, size: int) -> np.ndarray:
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (size,))
    return rng.beta(mean * concentration, (1.0 - mean) * concentration)


def generate_synthetic_network(
    spec: SyntheticNetworkSpec, rng: np.random.Generator
) -> BipartiteDataset:
    """
    Distance-decay network in the unit square with synthetic covariates.

    h_ji = exp(-decay * distance(j, i)) * LogNormal(0, noise_sd), one entry for
    every (intervention, outcome) pair, so every weight is positive.
    """
    if spec.J < 2 or spec.n < 2:
        raise ParameterError(f"synthetic network needs J >= 2 and n >= 2, got J={spec.J}, n={spec.n}")
    if spec.decay < 0 or spec.noise_sd < 0:
        raise ParameterError("decay and noise_sd must be nonnegative")

    plants = rng.uniform(size=(spec.J, 2))
    sites = rng.uniform(size=(spec.n, 2))
    distance = np.linalg.norm(plants[:, None, :] - sites[None, :, :], axis=2)
    noise = rng.lognormal(mean=0.0, sigma=spec.noise_sd, size=distance.shape)
    weights = np.exp(-spec.decay * distance) * noise

    rows, cols = np.meshgrid(np.arange(spec.J), np.arange(spec.n), indexing="ij")
    network = BipartiteNetwork(
        intervention_ids=tuple(f"P{j:04d}" for j in range(spec.J)),
        outcome_ids=tuple(f"Z{i:05d}" for i in range(spec.n)),
        rows=rows.ravel(),
        cols=cols.ravel(),
        weights=weights.ravel(),
    )
    network = derive_exposure_structure(network)

    n = spec.n
    outcome_covariates = pd.DataFrame(
        {
            "LogPop": np.clip(rng.normal(8.3, 1.2, n), 1.39, 11.65),
            "SmokeRate": np.clip(_beta(rng, 0.26, 60.0, n), 0.10, 0.43),
            "PctHighSchool": _beta(rng, 0.35, 30.0, n),
            "PctUrban": _beta(rng, 0.25 + 0.32 * sites[:, 0], 10.0, n),
            "PctPoor": _beta(rng, 0.12, 30.0, n),
            "PctNonwhite": _beta(rng, 0.11, 8.0, n),
        },
        index=pd.Index(network.outcome_ids, name="id"),
    )
    intervention_covariates = pd.DataFrame(
        {"LogOpTime": np.clip(rng.normal(7.75, 0.7, spec.J), 5.46, 8.93)},
        index=pd.Index(network.intervention_ids, name="id"),
    )
    logger.debug("synthetic_network_generated", J=spec.J, n=n, decay=spec.decay)
    return BipartiteDataset(
        network=network,
        interventions=UnitTable(network.intervention_ids, intervention_covariates),
        outcomes=UnitTable(network.outcome_ids, outcome_covariates),
    )


def _require(frame: pd.DataFrame, columns, what: str):
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise UnitTableError(f"{what} is missing column(s) {missing}")


def treatment_probability(key_summary: pd.DataFrame, intervention_covariates: pd.DataFrame) -> np.ndarray:
    """logit p_j = 0.1 KeyLogPop - 1.5 KeyLogPop * KeyPctUrban + 0.05 LogOpTime^2."""
    _require(key_summary, ("KeyLogPop", "KeyPctUrban"), "key summary")
    _require(intervention_covariates, ("LogOpTime",), "intervention covariates")
    key_log_pop = key_summary["KeyLogPop"].to_numpy(dtype=float)
    key_urban = key_summary["KeyPctUrban"].to_numpy(dtype=float)
    op_time = intervention_covariates["LogOpTime"].to_numpy(dtype=float)
    return expit(0.1 * key_log_pop - 1.5 * key_log_pop * key_urban + 0.05 * op_time**2)


def generate_treatments(
    key_summary: pd.DataFrame,
    intervention_covariates: pd.DataFrame,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw T_j ~ Bernoulli(p_j) independently across intervention units.

    Returns:
        (T, true p_j)
    """
    p = treatment_probability(key_summary, intervention_covariates)
    T = (rng.uniform(size=p.shape[0]) < p).astype(float)
    return T, p


def plant_heterogeneity(outcome_covariates: pd.DataFrame, xi: float) -> PlantedEffects:
    """
    Three subgroups with direct and spillover effects 0, xi and 2 xi.

    low:  PctNonwhite at or below its 33rd percentile
    mid:  above it, PctPoor at or below its median
    high: above it, PctPoor above its median
    """
    _require(outcome_covariates, ("PctNonwhite", "PctPoor"), "outcome covariates")
    nonwhite = outcome_covariates["PctNonwhite"].to_numpy(dtype=float)
    poor = outcome_covariates["PctPoor"].to_numpy(dtype=float)
    nonwhite_cut = quantile(nonwhite, NONWHITE_LEVEL)
    poor_cut = quantile(poor, POOR_LEVEL)

    exceeds = nonwhite > nonwhite_cut
    labels = np.where(~exceeds, "low", np.where(poor > poor_cut, "high", "mid"))
    multiplier = np.select([labels == "mid", labels == "high"], [1.0, 2.0], default=0.0)
    effect = multiplier * xi
    return PlantedEffects(
        tau=effect,
        delta=effect.copy(),
        labels=labels,
        thresholds={"PctNonwhite": nonwhite_cut, "PctPoor": poor_cut},
    )


def baseline_mean(outcome_covariates: pd.DataFrame) -> np.ndarray:
    """2 LogPop + 5 SmokeRate + 5 PctPoor + 10 PctNonwhite + 5 PctNonwhite * SmokeRate."""
    _require(outcome_covariates, ("LogPop", "SmokeRate", "PctPoor", "PctNonwhite"), "outcome covariates")
    c = outcome_covariates
    return (
        2.0 * c["LogPop"].to_numpy(dtype=float)
        + 5.0 * c["SmokeRate"].to_numpy(dtype=float)
        + 5.0 * c["PctPoor"].to_numpy(dtype=float)
        + 10.0 * c["PctNonwhite"].to_numpy(dtype=float)
        + 5.0 * (c["PctNonwhite"] * c["SmokeRate"]).to_numpy(dtype=float)
    )


def generate_outcomes(
    outcome_covariates: pd.DataFrame,
    assignment: ExposureAssignment,
    planted: PlantedEffects,
    sigma2: float,
    rng: np.random.Generator,
) -> PotentialOutcomes:
    """
    Y_i(z, g) = baseline_i + tau_i z + delta_i g + e_i with e_i ~ Normal(0, sigma2).

    One noise draw per unit is shared by its four potential outcomes, so unit
    level contrasts equal the planted effects exactly.
    """
    if sigma2 <= 0:
        raise ParameterError(f"outcome error variance must be positive, got {sigma2}")
    base = baseline_mean(outcome_covariates)
    if not (base.shape[0] == assignment.n == planted.tau.shape[0]):
        raise UnitTableError("covariates, exposures and planted effects cover different units")
    noise = rng.normal(0.0, np.sqrt(sigma2), size=base.shape[0])

    table = np.empty((base.shape[0], 2, 2))
    for z in (0, 1):
        for g in (0, 1):
            table[:, z, g] = base + planted.tau * z + planted.delta * g + noise
    observed = table[np.arange(base.shape[0]), assignment.Z, assignment.G]
    return PotentialOutcomes(table=table, observed=observed)
