"""
CSV reading and writing for networks, unit tables and result tables.

All files are UTF-8, comma-delimited with a header row; floats are written
with 17 significant digits.
"""

from pathlib import Path
from typing import Literal, Union

import numpy as np
import pandas as pd
import structlog

from src.core.exposure import load_network
from src.exceptions import DataFileError, NetworkFormatError, UnitTableError
from src.models.network import BipartiteDataset, BipartiteNetwork, UnitTable

logger = structlog.get_logger()

PathLike = Union[str, Path]
NETWORK_HEADER = ["intervention_id", "outcome_id", "weight"]
FLOAT_FORMAT = "%.17g"


def _read_raw(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataFileError(str(path))
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataFileError(str(path), reason=f"cannot read CSV ({e})") from e


def read_network_csv(path: PathLike) -> BipartiteNetwork:
    """Read `intervention_id,outcome_id,weight` triplets."""
    raw = _read_raw(path)
    header = [c.strip() for c in raw.columns]
    for position, expected in enumerate(NETWORK_HEADER):
        found = header[position] if position < len(header) else None
        if found != expected:
            raise NetworkFormatError(
                f"{path}: header column {position + 1} must be {expected!r}, found {found!r}",
                column=expected,
            )
    if len(header) > len(NETWORK_HEADER):
        raise NetworkFormatError(f"{path}: unexpected column {header[3]!r}", column=header[3])
    network = load_network(raw.itertuples(index=False, name=None))
    logger.info("network_read", path=str(path), J=network.J, n=network.n, entries=network.nnz)
    return network


def _parse_cell(text: str) -> float:
    try:
        return float(text) if text else np.nan
    except ValueError:
        return np.nan


def write_network_csv(network: BipartiteNetwork, path: PathLike):
    frame = pd.DataFrame(network.to_rows(), columns=NETWORK_HEADER)
    write_frame(frame, path)


def read_unit_table(path: PathLike, role: Literal["intervention", "outcome"]) -> UnitTable:
    """
    Read `id,<covariate...>[,treatment]` (intervention) or `id,<covariate...>[,outcome]` (outcome).

    Every covariate cell must parse as a real number.
    """
    raw = _read_raw(path)
    raw.columns = [c.strip() for c in raw.columns]
    if not len(raw.columns) or raw.columns[0] != "id":
        found = raw.columns[0] if len(raw.columns) else None
        raise UnitTableError(f"{path}: first header column must be 'id', found {found!r}")

    special = "treatment" if role == "intervention" else "outcome"
    frame = raw.set_index("id")
    frame.index = frame.index.map(str.strip)
    numeric = {}
    for column in frame.columns:
        cells = frame[column].str.strip()
        # float() rounds correctly, so %.17g output reads back exactly
        values = cells.map(_parse_cell).astype(float)
        bad = values.isna() & (cells != "")
        if bad.any():
            raise UnitTableError(
                f"{path}: column {column!r} has non-numeric value {frame[column][bad].iloc[0]!r}"
            )
        numeric[column] = values
    table = UnitTable.from_frame(
        pd.DataFrame(numeric, index=frame.index),
        treatment_column=special if role == "intervention" else None,
        outcome_column=special if role == "outcome" else None,
    )
    logger.debug("unit_table_read", path=str(path), role=role, rows=len(table.ids), covariates=len(table.covariate_names))
    return table


def write_unit_table(table: UnitTable, path: PathLike):
    frame = table.covariates.copy()
    if table.treatment is not None:
        frame["treatment"] = table.treatment.astype(int)
    if table.outcome is not None:
        frame["outcome"] = table.outcome
    frame.insert(0, "id", list(table.ids))
    write_frame(frame.reset_index(drop=True), path)


def read_dataset(
    network_path: PathLike,
    interventions_path: PathLike,
    outcomes_path: PathLike,
) -> BipartiteDataset:
    """Read all three files and align both tables to the network's index order."""
    network = read_network_csv(network_path)
    interventions = read_unit_table(interventions_path, "intervention")
    outcomes = read_unit_table(outcomes_path, "outcome")
    for name, table, ids in (
        ("intervention", interventions, network.intervention_ids),
        ("outcome", outcomes, network.outcome_ids),
    ):
        extra = len(set(table.ids) - set(ids))
        if extra:
            logger.info("unit_rows_dropped", table=name, rows=extra, reason="not in network")
    return BipartiteDataset.align(network, interventions, outcomes)


def write_frame(frame: pd.DataFrame, path: PathLike):
    """Write a result table with a header row and 17-significant-digit floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")

