"""
Data model for the bipartite interference graph.

Numeric containers are frozen dataclasses over numpy arrays; they are
immutable after construction and safe to share between worker threads.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp

from src.exceptions import MappingError, UnitTableError


@dataclass(frozen=True, eq=False)
class BipartiteNetwork:
    """Sparse J x n influence matrix H plus the derived exposure structure."""

    intervention_ids: Tuple[str, ...]
    outcome_ids: Tuple[str, ...]
    rows: np.ndarray  # intervention index j of each entry
    cols: np.ndarray  # outcome index i of each entry
    weights: np.ndarray  # h_ji >= 0
    key_of: Optional[np.ndarray] = None
    upwind_of: Optional[np.ndarray] = None
    key_weight: Optional[np.ndarray] = None

    @property
    def J(self) -> int:
        return len(self.intervention_ids)

    @property
    def n(self) -> int:
        return len(self.outcome_ids)

    @property
    def nnz(self) -> int:
        return int(self.weights.shape[0])

    @property
    def derived(self) -> bool:
        return self.key_of is not None and self.upwind_of is not None

    @cached_property
    def intervention_index(self) -> Dict[str, int]:
        return {uid: j for j, uid in enumerate(self.intervention_ids)}

    @cached_property
    def outcome_index(self) -> Dict[str, int]:
        return {uid: i for i, uid in enumerate(self.outcome_ids)}

    def matrix(self) -> sp.csc_matrix:
        """H as a CSC matrix (intervention rows, outcome columns)."""
        return sp.coo_matrix(
            (self.weights, (self.rows, self.cols)), shape=(self.J, self.n)
        ).tocsc()

    def weight(self, intervention_id: str, outcome_id: str) -> float:
        j = self.intervention_index[intervention_id]
        i = self.outcome_index[outcome_id]
        hit = np.flatnonzero((self.rows == j) & (self.cols == i))
        return float(self.weights[hit[0]]) if hit.size else 0.0

    def to_rows(self) -> List[Tuple[str, str, float]]:
        """Serialise back to (intervention id, outcome id, weight) triplets."""
        return [
            (self.intervention_ids[j], self.outcome_ids[i], float(w))
            for j, i, w in zip(self.rows.tolist(), self.cols.tolist(), self.weights)
        ]

    def key_ids(self) -> List[str]:
        self._require_derived()
        return [self.intervention_ids[j] for j in self.key_of]

    def upwind_ids(self) -> List[str]:
        self._require_derived()
        return [self.intervention_ids[j] for j in self.upwind_of]

    def _require_derived(self):
        if not self.derived:
            raise MappingError("exposure structure has not been derived")


@dataclass(frozen=True, eq=False)
class UnitTable:
    """Covariates and optional treatment/outcome columns for one side of the graph."""

    ids: Tuple[str, ...]
    covariates: pd.DataFrame
    treatment: Optional[np.ndarray] = None
    outcome: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            dupes = pd.Index(self.ids)[pd.Index(self.ids).duplicated()].tolist()
            raise UnitTableError(f"duplicate unit ids: {dupes[:5]}")
        if len(self.covariates) != len(self.ids):
            raise UnitTableError("covariate rows do not match ids")
        if self.covariates.isna().any().any():
            bad = self.covariates.columns[self.covariates.isna().any()].tolist()
            raise UnitTableError(f"missing covariate cells in columns: {bad}")
        if self.treatment is not None:
            if len(self.treatment) != len(self.ids):
                raise UnitTableError("treatment column does not match ids")
            if not np.isin(self.treatment, (0, 1)).all():
                raise UnitTableError("treatment values must be 0 or 1")
        if self.outcome is not None:
            if len(self.outcome) != len(self.ids):
                raise UnitTableError("outcome column does not match ids")
            if not np.isfinite(self.outcome).all():
                raise UnitTableError("outcome values must be finite")

    @classmethod
    def from_frame(
        cls,
        frame: pd.DataFrame,
        treatment_column: Optional[str] = None,
        outcome_column: Optional[str] = None,
    ) -> "UnitTable":
        """Build from a frame indexed by unit id."""
        ids = tuple(str(v) for v in frame.index)
        drop = [c for c in (treatment_column, outcome_column) if c and c in frame.columns]
        covariates = frame.drop(columns=drop).astype(float)
        covariates.index = pd.Index(ids, name="id")
        treatment = None
        if treatment_column and treatment_column in frame.columns:
            treatment = frame[treatment_column].to_numpy(dtype=float)
        outcome = None
        if outcome_column and outcome_column in frame.columns:
            outcome = frame[outcome_column].to_numpy(dtype=float)
        return cls(ids=ids, covariates=covariates, treatment=treatment, outcome=outcome)

    @property
    def covariate_names(self) -> List[str]:
        return list(self.covariates.columns)

    def reindex(self, ids: Sequence[str]) -> "UnitTable":
        """Re-order rows to `ids`; every id must be present."""
        position = {uid: k for k, uid in enumerate(self.ids)}
        missing = [uid for uid in ids if uid not in position]
        if missing:
            raise MappingError(f"{len(missing)} unit id(s) missing from table: {missing[:5]}")
        take = np.array([position[uid] for uid in ids], dtype=int)
        return UnitTable(
            ids=tuple(ids),
            covariates=self.covariates.iloc[take],
            treatment=None if self.treatment is None else self.treatment[take],
            outcome=None if self.outcome is None else self.outcome[take],
        )

    def with_treatment(self, treatment: np.ndarray) -> "UnitTable":
        return UnitTable(self.ids, self.covariates, np.asarray(treatment, dtype=float), self.outcome)

    def with_outcome(self, outcome: np.ndarray) -> "UnitTable":
        return UnitTable(self.ids, self.covariates, self.treatment, np.asarray(outcome, dtype=float))


@dataclass(frozen=True, eq=False)
class ExposureAssignment:
    """Per-outcome key-associated (Z) and upwind (G) binary treatments."""

    Z: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        if self.Z.shape != self.G.shape:
            raise MappingError("Z and G must have the same length")

    @property
    def n(self) -> int:
        return int(self.Z.shape[0])

    def take(self, index: np.ndarray) -> "ExposureAssignment":
        return ExposureAssignment(Z=self.Z[index], G=self.G[index])

    def in_cell(self, z: int, g: int) -> np.ndarray:
        return (self.Z == z) & (self.G == g)


@dataclass(frozen=True, eq=False)
class EtaSummary:
    """Per-intervention means of outcome covariates over the units where it holds `role`."""

    role: Literal["key", "upwind"]
    frame: pd.DataFrame  # NaN rows mark empty groups
    empty: np.ndarray
    group_sizes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def imputed(self) -> pd.DataFrame:
        """Empty-group rows replaced by the column mean over non-empty groups."""
        means = self.frame[~self.empty].mean()
        return self.frame.fillna(means)


@dataclass(frozen=True, eq=False)
class BipartiteDataset:
    """A network together with its intervention and outcome tables, aligned by index."""

    network: BipartiteNetwork
    interventions: UnitTable
    outcomes: UnitTable

    def __post_init__(self):
        if tuple(self.interventions.ids) != tuple(self.network.intervention_ids):
            raise MappingError("intervention table is not aligned with the network")
        if tuple(self.outcomes.ids) != tuple(self.network.outcome_ids):
            raise MappingError("outcome table is not aligned with the network")

    @classmethod
    def align(
        cls, network: BipartiteNetwork, interventions: UnitTable, outcomes: UnitTable
    ) -> "BipartiteDataset":
        """Re-order both tables to the network's index order."""
        return cls(
            network=network,
            interventions=interventions.reindex(network.intervention_ids),
            outcomes=outcomes.reindex(network.outcome_ids),
        )
