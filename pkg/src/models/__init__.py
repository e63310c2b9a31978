"""Models package: network data, estimates, scenarios and pipeline state."""

from src.models.estimates import (
    BootstrapRun,
    DiscoveryReport,
    DiscoveryRow,
    EffectEstimate,
    EstimationSettings,
    OutcomePredictions,
    PropensityBundle,
    PropensityFit,
    TruncationConfig,
)
from src.models.network import (
    BipartiteDataset,
    BipartiteNetwork,
    EtaSummary,
    ExposureAssignment,
    UnitTable,
)
from src.models.scenario import PlantedEffects, PotentialOutcomes, SimScenario, SyntheticNetworkSpec
from src.models.state import PipelineState

__all__ = [
    "BipartiteDataset",
    "BipartiteNetwork",
    "BootstrapRun",
    "DiscoveryReport",
    "DiscoveryRow",
    "EffectEstimate",
    "EstimationSettings",
    "EtaSummary",
    "ExposureAssignment",
    "OutcomePredictions",
    "PipelineState",
    "PlantedEffects",
    "PotentialOutcomes",
    "PropensityBundle",
    "PropensityFit",
    "SimScenario",
    "SyntheticNetworkSpec",
    "TruncationConfig",
    "UnitTable",
]
