"""
Formula-driven design matrices (patsy), fitted without patsy's intercept.

The regression kernels prepend their own intercept, so every formula is
evaluated with `- 1` appended.
"""

from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd
import patsy

from src.exceptions import ConfigError, DimensionError


def quote_term(name: str) -> str:
    """A column name usable as a patsy term."""
    return name if name.isidentifier() else f'Q("{name}")'


def formula_from_columns(columns: Sequence[str]) -> str:
    """Linear main-effects formula over the given columns."""
    return " + ".join(quote_term(c) for c in columns)


def design_matrix(formula: str, frame: pd.DataFrame) -> Tuple[np.ndarray, List[str], object]:
    """
    Evaluate `formula` on `frame`.

    Returns:
        (matrix without intercept, column names, patsy DesignInfo)
    """
    if not formula or not formula.strip():
        return np.zeros((len(frame), 0)), [], None
    try:
        design = patsy.dmatrix(formula + " - 1", frame, return_type="dataframe", NA_action="raise")
    except patsy.PatsyError as e:
        raise ConfigError(f"cannot evaluate formula {formula!r}: {e}") from e
    return design.to_numpy(dtype=float), list(design.columns), design.design_info


def rebuild_design(design_info, frame: pd.DataFrame) -> np.ndarray:
    """Re-evaluate a fitted design on new data (counterfactual prediction)."""
    if design_info is None:
        return np.zeros((len(frame), 0))
    try:
        (design,) = patsy.build_design_matrices([design_info], frame, return_type="dataframe")
    except patsy.PatsyError as e:
        raise DimensionError(f"cannot rebuild design on new data: {e}") from e
    return design.to_numpy(dtype=float)
