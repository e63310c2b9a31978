"""
Shared fixtures: the 2-plant / 3-outcome toy network and a small synthetic dataset.
"""

import os
import sys

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.core.exposure import derive_exposure_structure, load_network  # noqa: E402
from src.core.streams import replicate_rng  # noqa: E402
from src.integrations.csv_io import write_network_csv, write_unit_table  # noqa: E402
from src.models.estimates import EstimationSettings  # noqa: E402
from src.models.network import BipartiteDataset  # noqa: E402
from src.models.scenario import SyntheticNetworkSpec  # noqa: E402
from src.simulation.generators import baseline_mean, generate_synthetic_network  # noqa: E402

# key = (P1, P2, P1), upwind = (P2, P1, P2)
TOY_TRIPLETS = [
    ("P1", "z1", 0.9),
    ("P2", "z1", 0.1),
    ("P1", "z2", 0.2),
    ("P2", "z2", 0.8),
    ("P1", "z3", 0.7),
    ("P2", "z3", 0.3),
]

TOY_FORMULAS = {
    "propensity_formula": "LogOpTime",
    "outcome_formula": "LogPop + PctPoor + PctNonwhite + Z + G",
}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo checks at reduced but non-trivial scale")


@pytest.fixture
def toy_network():
    return derive_exposure_structure(load_network(TOY_TRIPLETS))


def make_synthetic_dataset(J: int = 20, n: int = 300, seed: int = 11) -> BipartiteDataset:
    """Synthetic network with alternating treatments and a noisy linear outcome."""
    dataset = generate_synthetic_network(SyntheticNetworkSpec(J=J, n=n), replicate_rng(seed, 0))
    T = np.arange(J) % 2
    rng = replicate_rng(seed, 3)
    key_T = T[dataset.network.key_of]
    upwind_T = T[dataset.network.upwind_of]
    Y = baseline_mean(dataset.outcomes.covariates) + 1.5 * key_T + 0.5 * upwind_T + rng.normal(0.0, 1.0, n)
    return BipartiteDataset(
        dataset.network,
        dataset.interventions.with_treatment(T),
        dataset.outcomes.with_outcome(Y),
    )


@pytest.fixture
def synthetic_dataset():
    return make_synthetic_dataset()


@pytest.fixture
def toy_settings():
    return EstimationSettings(**TOY_FORMULAS)


@pytest.fixture
def synthetic_files(tmp_path, synthetic_dataset):
    """The synthetic dataset written as the three CLI input files."""
    paths = {
        "network": tmp_path / "network.csv",
        "interventions": tmp_path / "plants.csv",
        "outcomes": tmp_path / "zips.csv",
    }
    write_network_csv(synthetic_dataset.network, paths["network"])
    write_unit_table(synthetic_dataset.interventions, paths["interventions"])
    write_unit_table(synthetic_dataset.outcomes, paths["outcomes"])
    return paths
