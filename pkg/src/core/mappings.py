"""
Exposure mappings.

An exposure mapping collapses the treatments of an outcome unit's non-key
intervention units into the binary upwind status G_i, and supplies the
matching probability P(G_i = 1) under independent assignment.
"""

from abc import ABC, abstractmethod
from typing import Dict, Tuple, Type

import numpy as np

from src.exceptions import MappingError, MissingPropensityError
from src.models.network import BipartiteNetwork


class ExposureMapping(ABC):
    """Base class for binary exposure mappings."""

    name: str = "abstract"

    @abstractmethod
    def assign(self, network: BipartiteNetwork, treatment: np.ndarray) -> np.ndarray:
        """Upwind status G_i for every outcome unit."""

    @abstractmethod
    def upwind_probability(self, network: BipartiteNetwork, phi: np.ndarray) -> np.ndarray:
        """P(G_i = 1) for every outcome unit given intervention scores phi."""

    def key_probability(self, network: BipartiteNetwork, phi: np.ndarray) -> np.ndarray:
        """P(Z_i = 1): the key unit's own score."""
        network._require_derived()
        return _lookup(phi, network.key_of, "key")

    def component_probabilities(
        self, network: BipartiteNetwork, phi: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        return self.key_probability(network, phi), self.upwind_probability(network, phi)


def _lookup(values: np.ndarray, index: np.ndarray, role: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape[0] <= int(index.max(initial=-1)):
        raise MissingPropensityError(
            f"{role} unit index {int(index.max())} has no score (only {values.shape[0]} given)"
        )
    picked = values[index]
    if np.isnan(picked).any():
        raise MissingPropensityError(f"{int(np.isnan(picked).sum())} {role} unit score(s) are missing")
    return picked


class SecondRankedMapping(ExposureMapping):
    """G_i is the treatment of the intervention unit with the second-largest weight."""

    name = "second_ranked"

    def assign(self, network: BipartiteNetwork, treatment: np.ndarray) -> np.ndarray:
        network._require_derived()
        return np.asarray(treatment)[network.upwind_of]

    def upwind_probability(self, network: BipartiteNetwork, phi: np.ndarray) -> np.ndarray:
        network._require_derived()
        return _lookup(phi, network.upwind_of, "upwind")


_MAPPINGS: Dict[str, Type[ExposureMapping]] = {
    "second_ranked": SecondRankedMapping,
}


def register_mapping(name: str, mapping_class: Type[ExposureMapping]):
    """Make an exposure mapping available by name."""
    if not issubclass(mapping_class, ExposureMapping):
        raise MappingError(f"{mapping_class!r} is not an ExposureMapping")
    _MAPPINGS[name.lower()] = mapping_class


def get_mapping(name: str = "second_ranked") -> ExposureMapping:
    """
    Factory function to get a registered exposure mapping.

    Args:
        name: Registered mapping name

    Returns:
        ExposureMapping instance
    """
    mapping_class = _MAPPINGS.get(name.lower())
    if mapping_class is None:
        raise MappingError(f"unknown exposure mapping {name!r}; known: {sorted(_MAPPINGS)}")
    return mapping_class()


def available_mappings():
    return sorted(_MAPPINGS)
