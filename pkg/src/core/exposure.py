"""
Bipartite interference structure: ingestion, key/upwind derivation,
low-influence filtering, covariate summaries and treatment mapping.
"""

import dataclasses
import math
from typing import Dict, Iterable, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from src.core.mappings import ExposureMapping, get_mapping
from src.core.regression import quantile
from src.exceptions import (
    DegenerateStructureError,
    DuplicateEntryError,
    MappingError,
    NetworkFormatError,
    ParameterError,
)
from src.models.network import (
    BipartiteDataset,
    BipartiteNetwork,
    EtaSummary,
    ExposureAssignment,
    UnitTable,
)

logger = structlog.get_logger()

ROLE_PREFIX = {"key": "Key", "upwind": "Upwind"}
KEY_PLANT_PREFIX = "KeyPlant"


def load_network(triplet_rows: Iterable[Tuple[str, str, object]]) -> BipartiteNetwork:
    """
    Build a network from (intervention id, outcome id, weight) triplets.

    Indices are assigned in order of first appearance.

    Raises:
        NetworkFormatError: empty id, unparsable, non-finite or negative weight
        DuplicateEntryError: the same pair appears twice
    """
    intervention_index: Dict[str, int] = {}
    outcome_index: Dict[str, int] = {}
    rows, cols, weights = [], [], []
    seen = set()

    for line, (jid, iid, raw) in enumerate(triplet_rows, start=1):
        jid, iid = str(jid).strip(), str(iid).strip()
        if not jid:
            raise NetworkFormatError(f"row {line}: empty intervention id", column="intervention_id")
        if not iid:
            raise NetworkFormatError(f"row {line}: empty outcome id", column="outcome_id")
        try:
            weight = float(raw)
        except (TypeError, ValueError):
            raise NetworkFormatError(f"row {line}: weight {raw!r} is not a number", column="weight")
        if not math.isfinite(weight) or weight < 0.0:
            raise NetworkFormatError(
                f"row {line}: weight must be finite and nonnegative, got {raw!r}", column="weight"
            )
        if (jid, iid) in seen:
            raise DuplicateEntryError(f"row {line}: duplicate pair ({jid}, {iid})")
        seen.add((jid, iid))

        j = intervention_index.setdefault(jid, len(intervention_index))
        i = outcome_index.setdefault(iid, len(outcome_index))
        rows.append(j)
        cols.append(i)
        weights.append(weight)

    network = BipartiteNetwork(
        intervention_ids=tuple(intervention_index),
        outcome_ids=tuple(outcome_index),
        rows=np.asarray(rows, dtype=np.int64),
        cols=np.asarray(cols, dtype=np.int64),
        weights=np.asarray(weights, dtype=float),
    )
    logger.debug("network_loaded", J=network.J, n=network.n, entries=network.nnz)
    return network


def derive_exposure_structure(network: BipartiteNetwork) -> BipartiteNetwork:
    """
    Populate key_of (largest weight) and upwind_of (second largest) per outcome unit.

    Ties go to the smallest intervention index for both ranks.
    """
    counts = np.bincount(network.cols, minlength=network.n)
    short = np.flatnonzero(counts < 2)
    if short.size:
        raise DegenerateStructureError([network.outcome_ids[i] for i in short])

    # by outcome, then weight descending, then intervention index
    order = np.lexsort((network.rows, -network.weights, network.cols))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    ranked_rows = network.rows[order]
    key_of = ranked_rows[starts]
    upwind_of = ranked_rows[starts + 1]
    key_weight = network.weights[order][starts]

    return dataclasses.replace(network, key_of=key_of, upwind_of=upwind_of, key_weight=key_weight)


def restrict_network(
    network: BipartiteNetwork,
    outcome_index: Sequence[int],
    intervention_index: Optional[Sequence[int]] = None,
) -> BipartiteNetwork:
    """
    Sub-network on the given outcome units (and intervention units).

    Without an explicit intervention set, every intervention unit with at least
    one entry on a retained outcome unit is kept. Original relative order is
    preserved on both sides and the exposure structure is re-derived when the
    input carried one.
    """
    keep_out = np.zeros(network.n, dtype=bool)
    keep_out[np.asarray(outcome_index, dtype=np.int64)] = True
    on_kept = keep_out[network.cols]

    keep_int = np.zeros(network.J, dtype=bool)
    if intervention_index is None:
        keep_int[network.rows[on_kept]] = True
    else:
        keep_int[np.asarray(intervention_index, dtype=np.int64)] = True

    entry = on_kept & keep_int[network.rows]
    new_out = np.cumsum(keep_out) - 1
    new_int = np.cumsum(keep_int) - 1

    restricted = BipartiteNetwork(
        intervention_ids=tuple(uid for uid, k in zip(network.intervention_ids, keep_int) if k),
        outcome_ids=tuple(uid for uid, k in zip(network.outcome_ids, keep_out) if k),
        rows=new_int[network.rows[entry]],
        cols=new_out[network.cols[entry]],
        weights=network.weights[entry],
    )
    if network.derived:
        restricted = derive_exposure_structure(restricted)
    return restricted


def restrict_dataset(
    dataset: BipartiteDataset,
    outcome_index: Sequence[int],
    intervention_index: Optional[Sequence[int]] = None,
) -> BipartiteDataset:
    """restrict_network, carrying both unit tables along."""
    network = restrict_network(dataset.network, outcome_index, intervention_index)
    return BipartiteDataset.align(network, dataset.interventions, dataset.outcomes)


def exposure_units(network: BipartiteNetwork, outcome_index: Sequence[int]) -> np.ndarray:
    """Sorted intervention indices serving as key or upwind for any of the given outcome units."""
    network._require_derived()
    index = np.asarray(outcome_index, dtype=np.int64)
    return np.union1d(network.key_of[index], network.upwind_of[index])


def filter_low_influence(dataset: BipartiteDataset, q: float) -> BipartiteDataset:
    """
    Drop outcome units whose key weight lies strictly below the nearest-rank
    q-quantile of all key weights, then intervention units left without entries.
    """
    if not 0.0 <= q < 1.0:
        raise ParameterError(f"filter quantile must lie in [0, 1), got {q}")
    network = dataset.network
    network._require_derived()
    if q == 0.0:
        return dataset

    threshold = quantile(network.key_weight, q)
    keep = np.flatnonzero(network.key_weight >= threshold)
    filtered = restrict_dataset(dataset, keep)
    logger.info(
        "low_influence_filtered",
        quantile=q,
        threshold=threshold,
        outcomes_dropped=network.n - filtered.network.n,
        interventions_dropped=network.J - filtered.network.J,
    )
    return filtered


def _covariate_frame(outcome_table: Union[UnitTable, pd.DataFrame]) -> pd.DataFrame:
    if isinstance(outcome_table, UnitTable):
        return outcome_table.covariates
    return outcome_table


def summarize_outcome_covariates(
    network: BipartiteNetwork,
    outcome_table: Union[UnitTable, pd.DataFrame],
    role: Literal["key", "upwind"] = "key",
) -> EtaSummary:
    """
    Per-intervention means of outcome covariates over the units where it holds `role`.

    Columns are named `Key<cov>` / `Upwind<cov>`. Intervention units holding
    the role for no outcome unit get a NaN row and are flagged in `empty`.
    """
    network._require_derived()
    if role not in ROLE_PREFIX:
        raise ParameterError(f"role must be 'key' or 'upwind', got {role!r}")
    covariates = _covariate_frame(outcome_table)
    if len(covariates) != network.n:
        raise MappingError(f"outcome table has {len(covariates)} rows, network has {network.n}")

    holder = network.key_of if role == "key" else network.upwind_of
    sizes = np.bincount(holder, minlength=network.J)
    empty = sizes == 0
    values = covariates.to_numpy(dtype=float)

    summary = np.full((network.J, values.shape[1]), np.nan)
    for k in range(values.shape[1]):
        sums = np.bincount(holder, weights=values[:, k], minlength=network.J)
        summary[~empty, k] = sums[~empty] / sizes[~empty]

    frame = pd.DataFrame(
        summary,
        index=pd.Index(network.intervention_ids, name="id"),
        columns=[f"{ROLE_PREFIX[role]}{name}" for name in covariates.columns],
    )
    if empty.any():
        logger.debug("eta_empty_groups", role=role, count=int(empty.sum()))
    return EtaSummary(role=role, frame=frame, empty=empty, group_sizes=sizes)


def key_plant_covariates(
    network: BipartiteNetwork, intervention_table: Union[UnitTable, pd.DataFrame]
) -> pd.DataFrame:
    """Each outcome unit's key intervention covariates, columns prefixed `KeyPlant`."""
    network._require_derived()
    covariates = _covariate_frame(intervention_table)
    if len(covariates) != network.J:
        raise MappingError(f"intervention table has {len(covariates)} rows, network has {network.J}")
    frame = covariates.iloc[network.key_of].copy()
    frame.columns = [f"{KEY_PLANT_PREFIX}{name}" for name in covariates.columns]
    frame.index = pd.Index(network.outcome_ids, name="id")
    return frame


def _treatment_vector(
    network: BipartiteNetwork, treatment: Union[np.ndarray, Sequence, Mapping[str, float], pd.Series]
) -> np.ndarray:
    if isinstance(treatment, (Mapping, pd.Series)):
        lookup = dict(treatment.items())
        missing = [uid for uid in network.intervention_ids if uid not in lookup]
        if missing:
            raise MappingError(f"no treatment for intervention unit(s): {missing[:5]}")
        values = np.array([lookup[uid] for uid in network.intervention_ids], dtype=float)
    else:
        values = np.asarray(treatment, dtype=float)
        if values.shape != (network.J,):
            raise MappingError(f"expected {network.J} treatments, got {values.shape[0] if values.ndim else 0}")
    if np.isnan(values).any():
        missing = [network.intervention_ids[j] for j in np.flatnonzero(np.isnan(values))]
        raise MappingError(f"no treatment for intervention unit(s): {missing[:5]}")
    if not np.isin(values, (0.0, 1.0)).all():
        raise MappingError("treatments must be 0 or 1")
    return values.astype(np.int64)


def map_treatments(
    network: BipartiteNetwork,
    treatment,
    mapping: Optional[ExposureMapping] = None,
) -> ExposureAssignment:
    """Z_i = T at the key unit; G_i = the exposure mapping of the non-key treatments."""
    network._require_derived()
    T = _treatment_vector(network, treatment)
    mapping = mapping or get_mapping()
    return ExposureAssignment(Z=T[network.key_of], G=np.asarray(mapping.assign(network, T), dtype=np.int64))


def cell_counts(assignment: ExposureAssignment) -> np.ndarray:
    """2x2 table n[z, g] of outcome units per exposure cell."""
    counts = np.zeros((2, 2), dtype=np.int64)
    np.add.at(counts, (assignment.Z.astype(np.int64), assignment.G.astype(np.int64)), 1)
    return counts


def exposure_frame(network: BipartiteNetwork, assignment: ExposureAssignment) -> pd.DataFrame:
    """Rows `outcome_id,key_id,upwind_id,Z,G`."""
    return pd.DataFrame(
        {
            "outcome_id": list(network.outcome_ids),
            "key_id": network.key_ids(),
            "upwind_id": network.upwind_ids(),
            "Z": assignment.Z.astype(int),
            "G": assignment.G.astype(int),
        }
    )
