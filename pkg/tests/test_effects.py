"""
Tests for the outcome model and the G-computation / AIPW / SAIPW estimators.
"""

import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.core.analysis import prepare_inputs, run_analysis  # noqa: E402
from src.core.effects import (  # noqa: E402
    EffectEstimator,
    aipw_mu,
    contrast_cells,
    fit_outcome_model,
    gcomp_mu,
    percent_absolute_bias,
    saipw_mu,
    subgroup_masks,
)
from src.core.exposure import cell_counts, derive_exposure_structure, load_network, map_treatments  # noqa: E402
from src.core.propensity import build_joint_propensity  # noqa: E402
from src.exceptions import (  # noqa: E402
    ConfigError,
    ParameterError,
    StabilizationError,
    SubgroupError,
)
from src.models.estimates import OutcomePredictions, TruncationConfig  # noqa: E402
from src.models.network import BipartiteDataset, ExposureAssignment  # noqa: E402


def _assignment(Z, G):
    return ExposureAssignment(Z=np.asarray(Z, dtype=int), G=np.asarray(G, dtype=int))


def _cells(n, **values):
    """mu_hat with the given constant per cell name, e.g. c10=5.0."""
    mu_hat = np.zeros((n, 2, 2))
    for name, value in values.items():
        mu_hat[:, int(name[1]), int(name[2])] = value
    return OutcomePredictions(mu_hat)


def _random_problem(seed, n=40):
    rng = np.random.default_rng(seed)
    assignment = _assignment(rng.integers(0, 2, n), rng.integers(0, 2, n))
    psi = rng.uniform(0.1, 0.9, size=(n, 2, 2))
    mu_hat = rng.normal(size=(n, 2, 2))
    Y = rng.normal(size=n)
    return Y, assignment, psi, OutcomePredictions(mu_hat)


class TestGComputation:
    def test_mean_of_predictions(self):
        predictions = OutcomePredictions(np.array([[[0.0, 0.0], [0.0, 2.0]], [[0.0, 0.0], [0.0, 4.0]]]))
        assert gcomp_mu(predictions, 1, 1) == 3.0

    def test_single_member_subgroup(self):
        predictions = OutcomePredictions(np.array([[[0.0, 0.0], [0.0, 2.0]], [[0.0, 0.0], [0.0, 4.0]]]))
        assert gcomp_mu(predictions, 1, 1, np.array([False, True])) == 4.0

    def test_empty_subgroup(self):
        with pytest.raises(SubgroupError):
            gcomp_mu(_cells(3, c11=1.0), 1, 1, np.zeros(3, dtype=bool))


class TestAIPW:
    # unit 0 sits in cell (1, 1) with Y = 10 and predicts 8; unit 1 sits in (0, 1) and predicts 6
    Y = np.array([10.0, 5.0])
    assignment = _assignment([1, 0], [1, 1])
    predictions = OutcomePredictions(np.array([[[0.0, 0.0], [0.0, 8.0]], [[0.0, 0.0], [0.0, 6.0]]]))

    def _psi(self, first):
        psi = np.full((2, 2, 2), 0.5)
        psi[0, 1, 1] = first
        return psi

    def test_hand_example(self):
        psi = self._psi(0.5)
        assert gcomp_mu(self.predictions, 1, 1) == pytest.approx(7.0, abs=1e-12)
        assert aipw_mu(self.Y, self.assignment, psi, self.predictions, 1, 1) == pytest.approx(9.0, abs=1e-12)
        assert saipw_mu(self.Y, self.assignment, psi, self.predictions, 1, 1) == pytest.approx(9.0, abs=1e-12)

    def test_small_propensity(self):
        psi = self._psi(0.25)
        assert aipw_mu(self.Y, self.assignment, psi, self.predictions, 1, 1) == pytest.approx(11.0, abs=1e-12)
        assert saipw_mu(self.Y, self.assignment, psi, self.predictions, 1, 1) == pytest.approx(9.0, abs=1e-12)

    def test_unit_propensity_all_in_cell(self):
        Y = np.array([1.0, 2.0, 6.0])
        assignment = _assignment([1, 1, 1], [0, 0, 0])
        predictions = _cells(3, c10=-4.0)
        assert aipw_mu(Y, assignment, np.ones((3, 2, 2)), predictions, 1, 0) == pytest.approx(3.0)

    def test_exact_outcome_model_equals_gcomp(self):
        Y, assignment, psi, _ = _random_problem(4)
        mu_hat = np.random.default_rng(5).normal(size=(Y.shape[0], 2, 2))
        mu_hat[np.arange(Y.shape[0]), assignment.Z, assignment.G] = Y
        predictions = OutcomePredictions(mu_hat)
        for z in (0, 1):
            for g in (0, 1):
                assert aipw_mu(Y, assignment, psi, predictions, z, g) == pytest.approx(gcomp_mu(predictions, z, g))

    def test_matches_explicit_sum(self):
        for seed in range(5):
            Y, assignment, psi, predictions = _random_problem(seed)
            n = Y.shape[0]
            total = 0.0
            for i in range(n):
                indicator = float(assignment.Z[i] == 1 and assignment.G[i] == 0)
                weight = indicator / psi[i, 1, 0]
                total += weight * Y[i] + (1.0 - weight) * predictions.mu_hat[i, 1, 0]
            assert aipw_mu(Y, assignment, psi, predictions, 1, 0) == pytest.approx(total / n)

    def test_stabilized_weights_average_one(self):
        Y, assignment, psi, predictions = _random_problem(9)
        # with mu_hat = 0 and Y = 1 the SAIPW mean is the mean stabilized weight
        ones = np.ones_like(Y)
        zero = OutcomePredictions(np.zeros_like(predictions.mu_hat))
        assert saipw_mu(ones, assignment, psi, zero, 0, 1) == pytest.approx(1.0)

    def test_stabilization_needs_occupied_cell(self):
        with pytest.raises(StabilizationError):
            saipw_mu(
                np.array([1.0, 2.0]), _assignment([0, 0], [0, 0]), np.full((2, 2, 2), 0.5), _cells(2), 1, 1
            )


class TestEffectEstimator:
    def test_gcomp_contrast(self):
        estimator = EffectEstimator(np.zeros(4), _assignment([1, 0, 1, 0], [0, 0, 1, 1]), _cells(4, c10=5.0, c00=3.0))
        assert estimator.effect("G", "direct", 0).estimate == pytest.approx(2.0)

    def test_constant_shift(self):
        estimator = EffectEstimator(
            np.zeros(3), _assignment([1, 0, 0], [0, 1, 0]), _cells(3, c11=7.0, c10=1.5, c01=6.0, c00=0.5)
        )
        assert estimator.effect("G", "spillover", 1).estimate == pytest.approx(5.5)
        assert estimator.effect("G", "spillover", 0).estimate == pytest.approx(5.5)
        assert estimator.effect("G", "direct", 0).estimate == pytest.approx(1.0)

    def test_antisymmetric_in_z(self):
        Y, assignment, psi, predictions = _random_problem(12)
        estimator = EffectEstimator(Y, assignment, predictions, psi)
        flipped = EffectEstimator(
            Y,
            _assignment(1 - assignment.Z, assignment.G),
            OutcomePredictions(predictions.mu_hat[:, ::-1, :].copy()),
            psi[:, ::-1, :].copy(),
        )
        for method in ("G", "AIPW", "SAIPW"):
            for held in (0, 1):
                assert flipped.effect(method, "direct", held).estimate == pytest.approx(
                    -estimator.effect(method, "direct", held).estimate
                )

    def test_iate_mean_is_effect(self):
        Y, assignment, psi, predictions = _random_problem(21)
        estimator = EffectEstimator(Y, assignment, predictions, psi)
        for method in ("G", "AIPW", "SAIPW"):
            for kind in ("direct", "spillover"):
                iate = estimator.iate(method, kind, 1)
                assert iate.mean() == pytest.approx(estimator.effect(method, kind, 1).estimate)

    def test_location_equivariance(self):
        Y, assignment, psi, predictions = _random_problem(30)
        shifted = EffectEstimator(Y + 4.0, assignment, OutcomePredictions(predictions.mu_hat + 4.0), psi)
        estimator = EffectEstimator(Y, assignment, predictions, psi)
        for method in ("G", "AIPW", "SAIPW"):
            assert shifted.mu(method, 0, 1) == pytest.approx(estimator.mu(method, 0, 1) + 4.0)
            assert shifted.effect(method, "direct", 1).estimate == pytest.approx(
                estimator.effect(method, "direct", 1).estimate
            )

    def test_grid_order_and_subgroups(self):
        Y, assignment, psi, predictions = _random_problem(8)
        mask = np.arange(Y.shape[0]) < 10
        estimator = EffectEstimator(Y, assignment, predictions, psi, {"first": mask})
        grid = estimator.grid()
        assert len(grid) == 2 * 2 * 3 * 2
        assert grid[0].key == ("direct", 0, "G", "all")
        assert grid[1].key == ("direct", 0, "G", "first")
        assert grid[1].n_x == 10

    def test_subgroup_restricts_mean_not_stabilization(self):
        Y, assignment, psi, predictions = _random_problem(40)
        mask = np.arange(Y.shape[0]) % 2 == 0
        estimator = EffectEstimator(Y, assignment, predictions, psi, {"even": mask})
        full_sample = estimator.pseudo("SAIPW", 1, 1)
        assert estimator.mu("SAIPW", 1, 1, "even") == pytest.approx(full_sample[mask].mean())

    def test_unknown_subgroup(self):
        Y, assignment, psi, predictions = _random_problem(1)
        with pytest.raises(ConfigError):
            EffectEstimator(Y, assignment, predictions, psi).effect("G", "direct", 0, "rural")

    def test_weighting_needs_propensity(self):
        Y, assignment, _, predictions = _random_problem(2)
        with pytest.raises(ConfigError):
            EffectEstimator(Y, assignment, predictions).effect("AIPW", "direct", 0)


class TestOutcomeModel:
    def _frame(self, n=40, seed=0):
        rng = np.random.default_rng(seed)
        covariates = pd.DataFrame({"x": rng.normal(size=n)})
        assignment = _assignment(rng.integers(0, 2, n), rng.integers(0, 2, n))
        return covariates, assignment

    def test_exact_interpolation(self):
        covariates, assignment = self._frame()
        Y = 1.0 + 2.0 * covariates["x"].to_numpy() + 3.0 * assignment.Z + 0.5 * assignment.G
        predictions = fit_outcome_model(covariates, assignment, Y)
        np.testing.assert_allclose(predictions.mu_hat[:, 1, 0] - predictions.mu_hat[:, 0, 0], 3.0, atol=1e-9)
        np.testing.assert_allclose(predictions.mu_hat[:, 0, 1] - predictions.mu_hat[:, 0, 0], 0.5, atol=1e-9)
        observed = predictions.mu_hat[np.arange(len(Y)), assignment.Z, assignment.G]
        np.testing.assert_allclose(observed, Y, atol=1e-9)

    def test_constant_outcome(self):
        covariates, assignment = self._frame(seed=1)
        predictions = fit_outcome_model(covariates, assignment, np.full(len(covariates), 2.5))
        np.testing.assert_allclose(predictions.mu_hat, 2.5, atol=1e-9)

    def test_formula_must_contain_exposures(self):
        covariates, assignment = self._frame(seed=2)
        with pytest.raises(ConfigError):
            fit_outcome_model(covariates, assignment, np.zeros(len(covariates)), formula="x + Z")


class TestHelpers:
    def test_contrast_cells(self):
        assert contrast_cells("direct", 1) == ((1, 1), (0, 1))
        assert contrast_cells("spillover", 0) == ((0, 1), (0, 0))

    def test_contrast_cells_invalid(self):
        with pytest.raises(ParameterError):
            contrast_cells("total", 0)
        with pytest.raises(ParameterError):
            contrast_cells("direct", 2)

    def test_percent_absolute_bias(self):
        assert percent_absolute_bias(1.5, 1.0, 1.0) == pytest.approx(50.0)
        assert percent_absolute_bias(2.0, 2.0, 5.0) == 0.0
        assert percent_absolute_bias(0.0, 1.0, -2.0) == pytest.approx(50.0)

    def test_percent_absolute_bias_zero_xi(self):
        with pytest.raises(ParameterError):
            percent_absolute_bias(1.0, 1.0, 0.0)

    def test_subgroup_masks(self):
        frame = pd.DataFrame({"PctPoor": [0.05, 0.2, 0.15]})
        masks = subgroup_masks(frame, {"poor": "PctPoor > 0.1"})
        assert masks["poor"].tolist() == [False, True, True]

    @pytest.mark.parametrize("expression", ["PctRich > 0.1", "PctPoor + 1"])
    def test_subgroup_masks_invalid(self, expression):
        with pytest.raises(ConfigError):
            subgroup_masks(pd.DataFrame({"PctPoor": [0.05, 0.2]}), {"bad": expression})


def test_location_equivariance_after_refit(synthetic_dataset, toy_settings):
    settings = toy_settings.model_copy(update={"subgroups": {"poor": "PctPoor > 0.12"}})
    shifted_dataset = BipartiteDataset(
        synthetic_dataset.network,
        synthetic_dataset.interventions,
        synthetic_dataset.outcomes.with_outcome(synthetic_dataset.outcomes.outcome + 100.0),
    )
    base = run_analysis(prepare_inputs(synthetic_dataset, settings), settings)
    shifted = run_analysis(prepare_inputs(shifted_dataset, settings), settings)
    np.testing.assert_allclose(shifted.predictions.mu_hat, base.predictions.mu_hat + 100.0, rtol=0, atol=1e-9)
    assert len(shifted.estimates) == len(base.estimates) == 2 * 2 * 3 * 2
    for before, after in zip(base.estimates, shifted.estimates):
        assert after.key == before.key
        assert abs(after.estimate - before.estimate) < 1e-9


def _summation_reference(method, kind, held, Y, Z, G, psi, mu_hat, members):
    """Contrast of two subgroup means written as explicit sums over units."""
    n = len(Y)

    def mean_potential(z, g):
        inverse = [(1.0 if (Z[i] == z and G[i] == g) else 0.0) / psi[i][z][g] for i in range(n)]
        scale = 1.0
        if method == "SAIPW":
            scale = n / sum(inverse)
        total, count = 0.0, 0
        for i in range(n):
            if not members[i]:
                continue
            value = mu_hat[i][z][g]
            if method != "G":
                value += scale * inverse[i] * (Y[i] - mu_hat[i][z][g])
            total += value
            count += 1
        return total / count

    if kind == "direct":
        return mean_potential(1, held) - mean_potential(0, held)
    return mean_potential(held, 1) - mean_potential(held, 0)


@pytest.mark.slow
def test_estimators_match_summation_on_random_networks():
    untruncated = TruncationConfig(component=(0.0, 1.0), joint=(0.0, 1.0))
    checked, seed = 0, 0
    while checked < 100:
        rng = np.random.default_rng(seed)
        seed += 1
        J, n = int(rng.integers(2, 7)), int(rng.integers(4, 21))
        weights = rng.uniform(0.05, 1.0, size=(J, n))
        network = derive_exposure_structure(
            load_network([(f"P{j}", f"z{i}", weights[j, i]) for j in range(J) for i in range(n)])
        )
        assignment = map_treatments(network, rng.integers(0, 2, J).astype(float))
        if (cell_counts(assignment) == 0).any():
            continue
        phi = rng.uniform(0.15, 0.85, J)
        bundle = build_joint_propensity(network, phi, untruncated)
        Y = rng.normal(size=n)
        mu_hat = rng.normal(size=(n, 2, 2))
        members = rng.uniform(size=n) < 0.5
        members[0] = True

        # psi from the component scores of the key and second-ranked units
        key, upwind = phi[network.key_of], phi[network.upwind_of]
        psi = [
            [[(1 - key[i]) * (1 - upwind[i]), (1 - key[i]) * upwind[i]], [key[i] * (1 - upwind[i]), key[i] * upwind[i]]]
            for i in range(n)
        ]
        estimator = EffectEstimator(Y, assignment, OutcomePredictions(mu_hat), bundle, {"half": members})
        for method in ("G", "AIPW", "SAIPW"):
            for kind in ("direct", "spillover"):
                for held in (0, 1):
                    for label, mask in (("all", np.ones(n, dtype=bool)), ("half", members)):
                        expected = _summation_reference(
                            method, kind, held, Y, assignment.Z, assignment.G, psi, mu_hat, mask
                        )
                        actual = estimator.effect(method, kind, held, label).estimate
                        assert actual == pytest.approx(expected, rel=1e-10, abs=1e-12)
        checked += 1
