"""
Named simulation studies: sweeps of one scenario parameter around a base scenario.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd
import structlog
from pydantic import ValidationError

from src.core.regression import quantile
from src.exceptions import ConfigError
from src.models.scenario import SimScenario
from src.simulation.runner import AB_COLUMNS, FAILURE_COLUMNS, run_scenario

logger = structlog.get_logger()

DEFAULT_VALUES: Dict[str, Sequence] = {
    "misspecification": ("A", "B", "C", "D"),
    "sample_size": (0.5, 0.2, 0.1, 0.05, 0.03, 0.01, 0.005),
    "variance": (0.2, 1.0, 5.0, 10.0),
    "pate": (1.0, 5.0, 10.0),
}

SUMMARY_COLUMNS = ["scenario", "estimand", "method", "median", "q1", "q3", "iqr", "count"]


def _misspecification(base: SimScenario, value) -> SimScenario:
    return base.model_copy(update={"name": str(value), "misspec": value})


def _sample_size(base: SimScenario, value) -> SimScenario:
    return base.model_copy(update={"name": f"p={float(value):g}", "sample_proportion": float(value)})


def _variance(base: SimScenario, value) -> SimScenario:
    return base.model_copy(update={"name": f"sigma2={float(value):g}", "sigma2": float(value)})


def _pate(base: SimScenario, value) -> SimScenario:
    return base.model_copy(update={"name": f"xi={float(value):g}", "xi": float(value)})


_BUILDERS: Dict[str, Callable[[SimScenario, object], SimScenario]] = {
    "misspecification": _misspecification,
    "sample_size": _sample_size,
    "variance": _variance,
    "pate": _pate,
}


def available_studies() -> List[str]:
    return list(_BUILDERS)


def study_scenarios(study: str, base: SimScenario, values: Optional[Sequence] = None) -> List[SimScenario]:
    """Scenarios of a study; every scenario keeps the base seed (common random numbers)."""
    if study not in _BUILDERS:
        raise ConfigError(f"unknown study {study!r}; expected one of {available_studies()}")
    values = DEFAULT_VALUES[study] if values is None else values
    try:
        scenarios = [_BUILDERS[study](base, value) for value in values]
        # re-validate the swept field
        return [SimScenario.model_validate(s.model_dump()) for s in scenarios]
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"invalid {study} study values {list(values)}: {e}") from e


@dataclass(frozen=True, eq=False)
class StudyResult:
    study: str
    table: pd.DataFrame
    failures: pd.DataFrame
    summary: pd.DataFrame


def summarize(table: pd.DataFrame) -> pd.DataFrame:
    """
    Median, quartiles, IQR and count of AB per scenario x estimand x method.

    Quantiles are nearest-rank; subgroups and held levels are pooled.
    """
    rows = []
    for (scenario, estimand, method), group in table.groupby(["scenario", "estimand", "method"], sort=False):
        ab = group["ab"].to_numpy(dtype=float)
        q1, median, q3 = (quantile(ab, p) for p in (0.25, 0.5, 0.75))
        rows.append(
            {
                "scenario": scenario,
                "estimand": estimand,
                "method": method,
                "median": median,
                "q1": q1,
                "q3": q3,
                "iqr": q3 - q1,
                "count": int(ab.size),
            }
        )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def run_study(
    study: str,
    base: SimScenario,
    threads: int = 1,
    values: Optional[Sequence] = None,
) -> StudyResult:
    """Run every scenario of a study and pool the AB tables."""
    scenarios = study_scenarios(study, base, values)
    logger.info("study_starting", study=study, scenarios=[s.name for s in scenarios])
    results = [run_scenario(s, threads=threads) for s in scenarios]
    table = pd.concat([r.table for r in results], ignore_index=True) if results else pd.DataFrame(columns=AB_COLUMNS)
    failures = (
        pd.concat([r.failures for r in results], ignore_index=True)
        if results
        else pd.DataFrame(columns=FAILURE_COLUMNS)
    )
    summary = summarize(table)
    logger.info(
        "study_complete",
        study=study,
        rows=len(table),
        failures=len(failures),
        medians={f"{r.scenario}/{r.estimand}/{r.method}": float(r.median) for r in summary.itertuples()},
    )
    return StudyResult(study=study, table=table, failures=failures, summary=summary)


def median_ab(table: pd.DataFrame, method: str, scenario: Optional[str] = None, estimand: Optional[str] = None) -> float:
    """Nearest-rank median AB of a method, optionally within one scenario / estimand."""
    mask = table["method"] == method
    if scenario is not None:
        mask &= table["scenario"] == scenario
    if estimand is not None:
        mask &= table["estimand"] == estimand
    return quantile(table.loc[mask, "ab"].to_numpy(dtype=float), 0.5)
