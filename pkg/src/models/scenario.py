"""
Monte Carlo scenario description and planted effects.
"""

from dataclasses import dataclass
from typing import Dict, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.models.estimates import TruncationConfig

Misspecification = Literal["A", "B", "C", "D"]

SUBGROUP_LABELS = ("low", "mid", "high")


class SyntheticNetworkSpec(BaseModel):
    """Parameters of the synthetic distance-decay interference network."""

    model_config = ConfigDict(extra="forbid")

    J: int = Field(default=40, ge=2)
    n: int = Field(default=3000, ge=2)
    decay: float = Field(default=8.0, ge=0.0)
    noise_sd: float = Field(default=0.25, ge=0.0)


class SimScenario(BaseModel):
    """Full specification of one Monte Carlo condition."""

    model_config = ConfigDict(extra="forbid")

    name: str = "A"
    misspec: Misspecification = "A"
    sample_proportion: float = Field(default=1.0, gt=0.0, le=1.0)
    sigma2: float = Field(default=1.0, gt=0.0)
    xi: float = 1.0
    replications: int = Field(default=1000, ge=1)
    seed: int = 0
    network: SyntheticNetworkSpec = Field(default_factory=SyntheticNetworkSpec)
    network_path: Optional[str] = None
    outcomes_path: Optional[str] = None
    interventions_path: Optional[str] = None
    filter_quantile: float = Field(default=0.25, ge=0.0, lt=1.0)
    filter_low_influence: bool = True
    # planted-subgroup interactions in the correct outcome model
    subgroup_terms: bool = True
    truncation: TruncationConfig = Field(
        default_factory=lambda: TruncationConfig(component=(0.05, 0.95), joint=(0.0, 1.0))
    )

    @field_validator("truncation", mode="before")
    @classmethod
    def _simulation_truncation(cls, value):
        # a partial block keeps the simulation defaults for the stage it omits
        if isinstance(value, dict):
            value = {"component": (0.05, 0.95), "joint": (0.0, 1.0), **value}
        return value

    @property
    def propensity_correct(self) -> bool:
        return self.misspec in ("A", "C")

    @property
    def outcome_correct(self) -> bool:
        return self.misspec in ("A", "B")


@dataclass(frozen=True, eq=False)
class PlantedEffects:
    """Per-outcome true direct and spillover effects with their subgroup labels."""

    tau: np.ndarray
    delta: np.ndarray
    labels: np.ndarray  # "low" | "mid" | "high"
    thresholds: Dict[str, float]

    def masks(self) -> Dict[str, np.ndarray]:
        return {label: self.labels == label for label in SUBGROUP_LABELS}

    def take(self, index: np.ndarray) -> "PlantedEffects":
        return PlantedEffects(self.tau[index], self.delta[index], self.labels[index], self.thresholds)


@dataclass(frozen=True, eq=False)
class PotentialOutcomes:
    """All four potential outcomes per unit and the observed outcome."""

    table: np.ndarray  # shape (n, 2, 2)
    observed: np.ndarray
