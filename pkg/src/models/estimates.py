"""
Fitted-model containers, estimator records and estimation settings.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.exceptions import NumericalError

Method = Literal["G", "AIPW", "SAIPW"]
Estimand = Literal["direct", "spillover"]
Family = Literal["logistic", "gaussian", "huber"]

METHODS: Tuple[str, ...] = ("G", "AIPW", "SAIPW")
ESTIMANDS: Tuple[str, ...] = ("direct", "spillover")


@dataclass(frozen=True, eq=False)
class FittedLinearModel:
    """Coefficients of a fitted linear predictor, intercept first."""

    coefficients: np.ndarray
    family: Family
    converged: bool
    iterations: int
    coefficient_se: Optional[np.ndarray] = None
    column_names: Tuple[str, ...] = ()
    scale: Optional[float] = None

    @property
    def n_columns(self) -> int:
        """Design columns, excluding the intercept."""
        return int(self.coefficients.shape[0]) - 1


@dataclass(frozen=True, eq=False)
class PropensityFit:
    """Intervention-level propensity model and its scores."""

    model: FittedLinearModel
    phi: np.ndarray  # P(T_j = 1), length J
    formula: str
    columns: Tuple[str, ...]  # design columns after zero-variance removal
    frame: pd.DataFrame  # intervention covariates joined with eta summaries
    dropped: Tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class PropensityBundle:
    """Intervention-level scores and outcome-level joint propensities."""

    phi: np.ndarray  # P(T_j = 1), length J
    psi: np.ndarray  # shape (n, 2, 2): psi[i, z, g]
    p_key: np.ndarray  # truncated phi of each outcome's key unit
    p_upwind: np.ndarray  # truncated P(G_i = 1)
    truncation_bounds: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.psi.shape[0])

    def cell(self, z: int, g: int) -> np.ndarray:
        return self.psi[:, z, g]

    def to_frame(self, outcome_ids) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "outcome_id": list(outcome_ids),
                "psi_11": self.psi[:, 1, 1],
                "psi_10": self.psi[:, 1, 0],
                "psi_01": self.psi[:, 0, 1],
                "psi_00": self.psi[:, 0, 0],
            }
        )


@dataclass(frozen=True, eq=False)
class OutcomePredictions:
    """mu_hat[i, z, g]: outcome-model prediction at each counterfactual cell."""

    mu_hat: np.ndarray
    model: Optional[FittedLinearModel] = None

    def __post_init__(self):
        if not np.isfinite(self.mu_hat).all():
            raise NumericalError("outcome predictions must be finite")

    @property
    def n(self) -> int:
        return int(self.mu_hat.shape[0])

    def take(self, index: np.ndarray) -> "OutcomePredictions":
        return OutcomePredictions(self.mu_hat[index], self.model)


class TruncationConfig(BaseModel):
    """Quantile clip levels for the component and joint propensity stages."""

    model_config = ConfigDict(extra="forbid")

    component: Tuple[float, float] = (0.05, 0.95)
    joint: Tuple[float, float] = (0.05, 0.95)

    @field_validator("component", "joint", mode="before")
    @classmethod
    def _parse_pair(cls, value):
        if isinstance(value, str):
            value = [float(v) for v in value.split(",")]
        return value

    @model_validator(mode="after")
    def _ordered(self):
        for name in ("component", "joint"):
            lower, upper = getattr(self, name)
            if not 0.0 <= lower < upper <= 1.0:
                raise ValueError(f"{name} truncation needs 0 <= lower < upper <= 1, got {lower}, {upper}")
        return self

    @classmethod
    def identity(cls) -> "TruncationConfig":
        return cls(component=(0.0, 1.0), joint=(0.0, 1.0))


class EffectEstimate(BaseModel):
    """A direct or spillover effect estimate, possibly within a subgroup."""

    estimand: Estimand
    held_level: Literal[0, 1]
    method: Method
    subgroup: Optional[str] = None
    n_x: Optional[int] = Field(default=None, ge=1)
    estimate: float
    ci: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def _ordered_ci(self):
        if self.ci is not None and self.ci[0] > self.ci[1]:
            raise ValueError(f"confidence interval is not ordered: {self.ci}")
        return self

    @property
    def key(self) -> Tuple[str, int, str, str]:
        return (self.estimand, self.held_level, self.method, self.subgroup or "all")

    def as_row(self) -> Dict[str, object]:
        return {
            "estimand": self.estimand,
            "held_level": self.held_level,
            "method": self.method,
            "subgroup": self.subgroup or "all",
            "n_x": self.n_x,
            "estimate": self.estimate,
            "ci_lower": self.ci[0] if self.ci else np.nan,
            "ci_upper": self.ci[1] if self.ci else np.nan,
        }


class DiscoveryRow(BaseModel):
    """Deviation of one binarized covariate's group from the average effect."""

    covariate: str
    coefficient: float
    se: float = Field(ge=0.0)
    ci_lower: float
    ci_upper: float
    significant: bool
    bootstrap_ci: Optional[Tuple[float, float]] = None


class DiscoveryReport(BaseModel):
    """Robust regression of de-meaned IATEs on binarized covariates."""

    estimand: Estimand
    held_level: Literal[0, 1]
    method: Method
    average_effect: float
    intercept: float
    converged: bool
    cuts: Dict[str, float] = Field(default_factory=dict)
    rows: List[DiscoveryRow] = Field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            [
                {
                    "covariate": row.covariate,
                    "coefficient": row.coefficient,
                    "ci_lower": row.ci_lower,
                    "ci_upper": row.ci_upper,
                    "significant": row.significant,
                }
                for row in self.rows
            ],
            columns=["covariate", "coefficient", "ci_lower", "ci_upper", "significant"],
        )
        if any(row.bootstrap_ci for row in self.rows):
            frame["boot_ci_lower"] = [r.bootstrap_ci[0] if r.bootstrap_ci else np.nan for r in self.rows]
            frame["boot_ci_upper"] = [r.bootstrap_ci[1] if r.bootstrap_ci else np.nan for r in self.rows]
        return frame

    def row(self, covariate: str) -> DiscoveryRow:
        for candidate in self.rows:
            if candidate.covariate == covariate:
                return candidate
        raise KeyError(covariate)


@dataclass(frozen=True, eq=False)
class BootstrapRun:
    """Replicate table and percentile intervals of a bootstrap."""

    B: int
    seed: int
    replicates: pd.DataFrame  # replicate, estimand, held_level, method, subgroup, estimate
    intervals: Dict[Tuple[str, int, str, str], Tuple[float, float]]
    level: float = 0.95
    redraws: int = 0
    discovery: Optional[pd.DataFrame] = None  # replicate, estimand, held_level, method, covariate, coefficient
    discovery_intervals: Dict[Tuple[str, int, str, str], Tuple[float, float]] = field(default_factory=dict)

    def interval(self, estimand: str, held_level: int, method: str, subgroup: str = "all"):
        return self.intervals[(estimand, held_level, method, subgroup)]


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class EstimationSettings(BaseModel):
    """Model formulas, truncation and the estimand grid of one analysis."""

    model_config = ConfigDict(extra="forbid")

    propensity_formula: Optional[str] = None
    outcome_formula: Optional[str] = None
    truncation: TruncationConfig = Field(default_factory=TruncationConfig)
    mapping: str = "second_ranked"
    methods: List[Method] = Field(default_factory=lambda: list(METHODS))
    estimands: List[Estimand] = Field(default_factory=lambda: list(ESTIMANDS))
    subgroups: Dict[str, str] = Field(default_factory=dict)
    fixed_bounds: bool = False

    @field_validator("methods", "estimands", mode="before")
    @classmethod
    def _parse_list(cls, value):
        return _split_list(value)
