"""
Tests for the synthetic generators, the scenario runner and the named studies.
"""

import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.core.discovery import binarize_at_median, discover  # noqa: E402
from src.core.effects import EffectEstimator, fit_outcome_model  # noqa: E402
from src.core.regression import quantile  # noqa: E402
from src.core.streams import STAGE_OUTCOME, replicate_rng  # noqa: E402
from src.exceptions import ConfigError, ParameterError  # noqa: E402
from src.models.estimates import ESTIMANDS  # noqa: E402
from src.models.network import ExposureAssignment  # noqa: E402
from src.models.scenario import SimScenario, SyntheticNetworkSpec  # noqa: E402
from src.simulation.generators import (  # noqa: E402
    baseline_mean,
    generate_outcomes,
    generate_synthetic_network,
    plant_heterogeneity,
    treatment_probability,
)
from src.simulation.runner import AB_COLUMNS, build_population, fit_scenario_propensity, run_scenario  # noqa: E402
from src.simulation.specs import (  # noqa: E402
    OUTCOME_BASELINE,
    OUTCOME_CORRECT,
    OUTCOME_NO_INTERACTIONS,
    outcome_formula,
)
from src.simulation.studies import median_ab, run_study, study_scenarios, summarize  # noqa: E402


def small_scenario(**overrides) -> SimScenario:
    values = {
        "name": "A",
        "misspec": "A",
        "replications": 3,
        "seed": 7,
        "network": {"J": 40, "n": 600},
    }
    values.update(overrides)
    return SimScenario(**values)


class TestGenerators:
    def test_treatment_probability(self):
        key = pd.DataFrame({"KeyLogPop": [0.0, 1.0], "KeyPctUrban": [0.0, 1.0]})
        plants = pd.DataFrame({"LogOpTime": [0.0, 0.0]})
        np.testing.assert_allclose(treatment_probability(key, plants), [0.5, 0.19782], atol=1e-5)

    def test_planted_subgroups(self):
        covariates = pd.DataFrame(
            {
                "PctNonwhite": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
                "PctPoor": [0.9, 0.9, 0.1, 0.2, 0.3, 0.4],
            }
        )
        planted = plant_heterogeneity(covariates, xi=2.0)
        assert planted.labels.tolist() == ["low", "low", "mid", "mid", "mid", "high"]
        assert planted.tau.tolist() == [0.0, 0.0, 2.0, 2.0, 2.0, 4.0]
        np.testing.assert_array_equal(planted.delta, planted.tau)
        assert planted.thresholds == {"PctNonwhite": 0.2, "PctPoor": 0.3}

    def test_unit_contrasts_equal_planted_effects(self):
        dataset = generate_synthetic_network(SyntheticNetworkSpec(J=5, n=200), replicate_rng(1, 0))
        covariates = dataset.outcomes.covariates
        planted = plant_heterogeneity(covariates, xi=3.0)
        rng = np.random.default_rng(0)
        assignment = ExposureAssignment(Z=rng.integers(0, 2, 200), G=rng.integers(0, 2, 200))
        outcomes = generate_outcomes(covariates, assignment, planted, 2.0, replicate_rng(1, 3))
        np.testing.assert_allclose(outcomes.table[:, 1, 0] - outcomes.table[:, 0, 0], planted.tau, atol=1e-9)
        np.testing.assert_allclose(outcomes.table[:, 1, 1] - outcomes.table[:, 1, 0], planted.delta, atol=1e-9)
        observed = outcomes.table[np.arange(200), assignment.Z, assignment.G]
        np.testing.assert_array_equal(outcomes.observed, observed)

    def test_noise_averages_out(self):
        dataset = generate_synthetic_network(SyntheticNetworkSpec(J=3, n=20000), replicate_rng(2, 0))
        covariates = dataset.outcomes.covariates
        planted = plant_heterogeneity(covariates, xi=1.0)
        assignment = ExposureAssignment(Z=np.zeros(20000, dtype=int), G=np.zeros(20000, dtype=int))
        outcomes = generate_outcomes(covariates, assignment, planted, 4.0, replicate_rng(2, 3))
        residual = outcomes.observed - baseline_mean(covariates)
        assert abs(residual.mean()) < 0.1
        assert residual.var() == pytest.approx(4.0, rel=0.05)

    def test_nonpositive_variance(self):
        dataset = generate_synthetic_network(SyntheticNetworkSpec(J=2, n=10), replicate_rng(3, 0))
        covariates = dataset.outcomes.covariates
        assignment = ExposureAssignment(Z=np.zeros(10, dtype=int), G=np.zeros(10, dtype=int))
        with pytest.raises(ParameterError):
            generate_outcomes(covariates, assignment, plant_heterogeneity(covariates, 1.0), 0.0, replicate_rng(3, 3))

    def test_network_is_deterministic(self):
        spec = SyntheticNetworkSpec(J=6, n=50)
        first = generate_synthetic_network(spec, replicate_rng(4, 0))
        second = generate_synthetic_network(spec, replicate_rng(4, 0))
        np.testing.assert_array_equal(first.network.weights, second.network.weights)
        pd.testing.assert_frame_equal(first.outcomes.covariates, second.outcomes.covariates)

    def test_network_shape(self):
        dataset = generate_synthetic_network(SyntheticNetworkSpec(J=4, n=30), replicate_rng(5, 0))
        assert dataset.network.nnz == 4 * 30
        assert dataset.network.intervention_ids[0] == "P0000"
        assert dataset.network.outcome_ids[-1] == "Z00029"
        assert (dataset.network.weights > 0).all()
        poor = dataset.outcomes.covariates["PctPoor"]
        assert ((poor > 0.0) & (poor < 1.0)).all()

    def test_equal_weights_follow_tie_rule(self):
        dataset = generate_synthetic_network(
            SyntheticNetworkSpec(J=3, n=5, decay=0.0, noise_sd=0.0), replicate_rng(6, 0)
        )
        assert set(dataset.network.key_ids()) == {"P0000"}
        assert set(dataset.network.upwind_ids()) == {"P0001"}


class TestScenarioRunner:
    def test_table_layout(self):
        result = run_scenario(small_scenario())
        assert list(result.table.columns) == AB_COLUMNS
        assert set(result.table["method"]) == {"G", "AIPW", "SAIPW"}
        assert set(result.table["replicate"]) == {0, 1, 2}
        assert result.failures.empty
        assert 0.0 < result.treated_fraction < 1.0

    def test_correct_models_nearly_unbiased(self):
        result = run_scenario(small_scenario(sigma2=1e-6))
        assert median_ab(result.table, "AIPW") < 0.5
        assert median_ab(result.table, "G") < 0.5

    def test_outcome_formula_follows_subgroup_terms(self):
        assert outcome_formula(small_scenario()) == OUTCOME_CORRECT
        assert outcome_formula(small_scenario(misspec="B", subgroup_terms=False)) == OUTCOME_BASELINE
        assert outcome_formula(small_scenario(misspec="C", subgroup_terms=False)) == OUTCOME_NO_INTERACTIONS

    def test_g_computation_misses_subgroups_without_terms(self):
        table = run_scenario(small_scenario(sigma2=1e-6, subgroup_terms=False)).table
        # one common effect for planted effects 0, xi and 2 xi
        assert median_ab(table, "G") > 50.0

    def test_deterministic_under_seed(self):
        scenario = small_scenario(replications=2)
        pd.testing.assert_frame_equal(run_scenario(scenario).table, run_scenario(scenario).table)

    def test_thread_count_does_not_matter(self):
        scenario = small_scenario(replications=3)
        pd.testing.assert_frame_equal(run_scenario(scenario, threads=1).table, run_scenario(scenario, threads=2).table)

    def test_truth_is_planted_effect(self):
        scenario = small_scenario(xi=2.0, replications=1)
        table = run_scenario(scenario).table
        truth = table.groupby("subgroup")["truth"].unique()
        np.testing.assert_allclose(truth["low"], 0.0, atol=1e-9)
        np.testing.assert_allclose(truth["mid"], 2.0, atol=1e-9)
        np.testing.assert_allclose(truth["high"], 4.0, atol=1e-9)

    def test_zero_xi(self):
        with pytest.raises(ParameterError):
            run_scenario(small_scenario(xi=0.0))

    def test_sampling_shrinks_population(self):
        population = build_population(small_scenario(sample_proportion=0.5))
        full = build_population(small_scenario())
        assert population.inputs.n == pytest.approx(full.inputs.n / 2, abs=1)
        assert population.planted.tau.shape == (population.inputs.n,)


class TestStudies:
    def test_default_misspecification_scenarios(self):
        scenarios = study_scenarios("misspecification", small_scenario())
        assert [s.name for s in scenarios] == ["A", "B", "C", "D"]
        assert [s.propensity_correct for s in scenarios] == [True, False, True, False]
        assert [s.outcome_correct for s in scenarios] == [True, True, False, False]
        assert {s.seed for s in scenarios} == {7}

    def test_string_values_are_coerced(self):
        scenarios = study_scenarios("sample_size", small_scenario(), ["0.5", "0.1"])
        assert [s.name for s in scenarios] == ["p=0.5", "p=0.1"]
        assert scenarios[1].sample_proportion == 0.1

    @pytest.mark.parametrize(
        "study,values",
        [("variance", ["-1"]), ("sample_size", ["1.5"]), ("misspecification", ["E"]), ("pate", ["many"])],
    )
    def test_invalid_values(self, study, values):
        with pytest.raises(ConfigError):
            study_scenarios(study, small_scenario(), values)

    def test_unknown_study(self):
        with pytest.raises(ConfigError):
            study_scenarios("coverage", small_scenario())

    def test_summary_matches_quantiles(self):
        table = pd.DataFrame(
            {
                "scenario": ["A"] * 4,
                "estimand": ["direct"] * 4,
                "method": ["G"] * 4,
                "ab": [4.0, 1.0, 3.0, 2.0],
            }
        )
        row = summarize(table).iloc[0]
        assert row["median"] == quantile([4.0, 1.0, 3.0, 2.0], 0.5) == 2.0
        assert row["q1"] == 1.0
        assert row["q3"] == 3.0
        assert row["iqr"] == 2.0
        assert row["count"] == 4

    def test_variance_study(self):
        result = run_study("variance", small_scenario(replications=2), values=[0.5, 2.0])
        assert set(result.table["scenario"]) == {"sigma2=0.5", "sigma2=2"}
        assert len(result.summary) == 2 * 2 * 3


@pytest.mark.slow
def test_misspecified_outcome_model_is_biased():
    result = run_study("misspecification", small_scenario(replications=5, network={"J": 40, "n": 1500}), values=["A", "D"])
    assert median_ab(result.table, "G", scenario="A") < median_ab(result.table, "G", scenario="D")


@pytest.mark.slow
def test_discovery_finds_planted_modifier():
    scenario = small_scenario(xi=5.0, network={"J": 40, "n": 1500})
    population = build_population(scenario)
    inputs = population.inputs
    outcomes = generate_outcomes(
        inputs.dataset.outcomes.covariates, inputs.assignment, population.planted, 1.0, replicate_rng(7, 3)
    )
    predictions = fit_outcome_model(inputs.outcome_frame, inputs.assignment, outcomes.observed, OUTCOME_CORRECT)
    iates = EffectEstimator(outcomes.observed, inputs.assignment, predictions).iate("G", "direct", 0)
    binarized, cuts = binarize_at_median(inputs.outcome_frame[["PctNonwhite", "LogPop"]])
    report = discover(iates, binarized, "direct", 0, "G", cuts)
    nonwhite = report.row("PctNonwhite")
    assert nonwhite.significant
    assert nonwhite.coefficient > 0.0


def _desk_scenario(**overrides) -> SimScenario:
    return small_scenario(**{"seed": 3, "replications": 20, "network": {"J": 40, "n": 3000}, **overrides})


@pytest.mark.slow
def test_aipw_beats_misspecified_g_computation():
    table = run_study("misspecification", _desk_scenario()).table
    for estimand in ESTIMANDS:
        assert median_ab(table, "AIPW", "C", estimand) < median_ab(table, "G", "C", estimand)
        assert median_ab(table, "AIPW", "A", estimand) < median_ab(table, "AIPW", "D", estimand)


@pytest.mark.slow
def test_aipw_beats_g_computation_without_subgroup_terms():
    table = run_study("misspecification", _desk_scenario(subgroup_terms=False), values=["B", "C"]).table
    for scenario in ("B", "C"):
        for estimand in ESTIMANDS:
            assert median_ab(table, "AIPW", scenario, estimand) < median_ab(table, "G", scenario, estimand)


def _medians(table, names, estimand):
    return [median_ab(table, "AIPW", name, estimand) for name in names]


@pytest.mark.slow
def test_bias_grows_with_noise_variance():
    table = run_study("variance", _desk_scenario(), values=[0.2, 1.0, 5.0]).table
    for estimand in ESTIMANDS:
        medians = _medians(table, ["sigma2=0.2", "sigma2=1", "sigma2=5"], estimand)
        assert all(later >= 0.9 * earlier for earlier, later in zip(medians, medians[1:]))
        assert medians[-1] > medians[0]


@pytest.mark.slow
def test_bias_shrinks_with_effect_size():
    table = run_study("pate", _desk_scenario(), values=[1.0, 5.0, 10.0]).table
    for estimand in ESTIMANDS:
        medians = _medians(table, ["xi=1", "xi=5", "xi=10"], estimand)
        assert all(later <= 1.1 * earlier for earlier, later in zip(medians, medians[1:]))
        assert medians[-1] < medians[0]


@pytest.mark.slow
def test_bias_shrinks_with_sample_size():
    base = _desk_scenario(network={"J": 40, "n": 8000})
    table = run_study("sample_size", base, values=[0.05, 0.2, 0.5]).table
    for estimand in ESTIMANDS:
        medians = _medians(table, ["p=0.05", "p=0.2", "p=0.5"], estimand)
        assert all(later <= 1.1 * earlier for earlier, later in zip(medians, medians[1:]))


@pytest.mark.slow
def test_correct_models_centred_on_truth():
    # signed errors over replications average out for every subgroup
    table = run_scenario(_desk_scenario(seed=21, replications=60)).table
    table = table.assign(error=table["estimate"] - table["truth"])
    for key, group in table.groupby(["subgroup", "estimand", "held_level", "method"]):
        errors = group["error"].to_numpy(dtype=float)
        spread = errors.std(ddof=1) / np.sqrt(errors.size)
        assert abs(errors.mean()) < 4.0 * spread + 1e-3, key


# outcome model an analyst would fit without knowing the planted subgroups
DISCOVERY_OUTCOME = OUTCOME_BASELINE + " + Z:PctPoor + Z:PctNonwhite + G:PctPoor + G:PctNonwhite"


def _poor_bin_rows(xi: float, replications: int = 100):
    """PctPoor discovery rows of the AIPW direct-effect IATEs, one per replication."""
    population = build_population(small_scenario(xi=xi, seed=13, network={"J": 40, "n": 3000}))
    inputs = population.inputs
    bundle = fit_scenario_propensity(population)
    binarized, cuts = binarize_at_median(inputs.outcome_frame[["PctPoor", "PctNonwhite"]])
    rows = []
    for r in range(replications):
        outcomes = generate_outcomes(
            inputs.dataset.outcomes.covariates,
            inputs.assignment,
            population.planted,
            1.0,
            replicate_rng(13, STAGE_OUTCOME, r),
        )
        predictions = fit_outcome_model(inputs.outcome_frame, inputs.assignment, outcomes.observed, DISCOVERY_OUTCOME)
        iates = EffectEstimator(outcomes.observed, inputs.assignment, predictions, bundle).iate("AIPW", "direct", 0)
        rows.append(discover(iates, binarized, "direct", 0, "AIPW", cuts).row("PctPoor"))
    return rows


@pytest.mark.slow
def test_discovery_power_on_planted_modifier():
    rows = _poor_bin_rows(xi=1.0)
    assert sum(row.significant and row.coefficient > 0.0 for row in rows) >= 90


@pytest.mark.slow
def test_discovery_size_without_heterogeneity():
    rows = _poor_bin_rows(xi=0.0)
    assert sum(row.significant for row in rows) <= 10
