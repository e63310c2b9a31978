"""
Bootstrap Module.

Resamples outcome units with replacement and re-runs the whole estimation on
each replicate:

1. draw n outcome units with replacement;
2. keep the intervention units that are key or upwind for a drawn unit,
   with eta summaries frozen at their full-data values;
3. refit the propensity model on those intervention units;
4. re-truncate and rebuild joint propensities for the drawn units;
5. refit the outcome model and recompute every configured effect.

A draw whose retained units hold a single treatment class, or whose refit
fails numerically, is replaced by a fresh draw from the same stream.

Confidence intervals are nearest-rank percentile intervals.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from src.core.analysis import AnalysisInputs, AnalysisResult, run_analysis
from src.core.discovery import discover
from src.core.exposure import exposure_units
from src.core.regression import quantile
from src.core.streams import STAGE_BOOTSTRAP, parallel_map, replicate_rng
from src.exceptions import (
    BootstrapAbortError,
    CollinearityError,
    DegenerateReplicateError,
    DegenerateResponseError,
    EmptyInputError,
    ParameterError,
    PropensityError,
    RankError,
    SeparationError,
    StabilizationError,
)
from src.models.estimates import BootstrapRun, EstimationSettings

logger = structlog.get_logger()

MAX_DRAWS = 10
# Failures a different resample can cure
RESAMPLE_FAILURES = (StabilizationError, SeparationError, DegenerateResponseError, RankError, PropensityError)
REPLICATE_COLUMNS = ["replicate", "estimand", "held_level", "method", "subgroup", "estimate"]
DISCOVERY_COLUMNS = ["replicate", "estimand", "held_level", "method", "covariate", "coefficient"]

DiscoveryTarget = Tuple[str, int, str]  # (estimand, held level, method)


def percentile_ci(replicates, level: float = 0.95) -> Tuple[float, float]:
    """Nearest-rank quantiles at (1 - level) / 2 and 1 - (1 - level) / 2."""
    values = np.asarray(replicates, dtype=float).ravel()
    if values.size == 0:
        raise EmptyInputError("percentile interval of no replicates")
    if not 0.0 < level < 1.0:
        raise ParameterError(f"confidence level must lie in (0, 1), got {level}")
    alpha = (1.0 - level) / 2.0
    return quantile(values, alpha), quantile(values, 1.0 - alpha)


def run_replicates(fn: Callable[[int], object], B: int, threads: int = 1) -> List:
    """Evaluate `fn(b)` for b = 0..B-1; results come back in replicate order."""
    if B < 1:
        raise ParameterError(f"replicate count must be >= 1, got {B}")
    return parallel_map(fn, list(range(B)), threads)


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    replicate: int
    draws: int
    outcome_index: np.ndarray
    retained: np.ndarray  # intervention indices the propensity model was refit on
    analysis: AnalysisResult
    discovery: List[Dict[str, object]]


def draw_replicate(
    inputs: AnalysisInputs,
    rng: np.random.Generator,
    replicate: int,
    evaluate: Optional[Callable[[np.ndarray, np.ndarray], Any]] = None,
) -> Tuple[np.ndarray, np.ndarray, int, Any]:
    """
    Resample outcome units until the retained intervention units hold both
    treatment classes and `evaluate(index, retained)`, when given, succeeds.

    A resample-dependent numerical failure of `evaluate` (an empty exposure
    cell, separation, a constant or rank-deficient refit) triggers a redraw.

    Returns:
        (outcome index with repeats, retained intervention indices, draws used,
        result of evaluate or None)

    Raises:
        BootstrapAbortError: no usable draw after MAX_DRAWS draws
    """
    n = inputs.n
    draws = []

    def _redrawn(retry_state):
        logger.info("bootstrap_replicate_redrawn", replicate=replicate, attempt=retry_state.attempt_number)

    @retry(
        stop=stop_after_attempt(MAX_DRAWS),
        retry=retry_if_exception_type(DegenerateReplicateError),
        before_sleep=_redrawn,
        reraise=True,
    )
    def _draw():
        index = rng.integers(0, n, size=n)
        draws.append(index)
        retained = exposure_units(inputs.network, index)
        classes = np.unique(inputs.T[retained])
        if classes.size < 2:
            raise DegenerateReplicateError(
                f"{retained.size} retained intervention units all have T={int(classes[0])}"
            )
        if evaluate is None:
            return index, retained, None
        try:
            return index, retained, evaluate(index, retained)
        except RESAMPLE_FAILURES as e:
            raise DegenerateReplicateError(f"{type(e).__name__}: {e}") from e

    try:
        index, retained, result = _draw()
    except DegenerateReplicateError as e:
        raise BootstrapAbortError(replicate, len(draws), str(e)) from e
    return index, retained, len(draws), result


def bootstrap_replicate(
    inputs: AnalysisInputs,
    settings: EstimationSettings,
    seed: int,
    replicate: int,
    base_bounds: Optional[Dict] = None,
    discovery_targets: Sequence[DiscoveryTarget] = (),
    binarized: Optional[pd.DataFrame] = None,
) -> ReplicateResult:
    """One bootstrap replicate on its own random stream."""
    rng = replicate_rng(seed, STAGE_BOOTSTRAP, replicate)

    def _analyze(index: np.ndarray, retained: np.ndarray) -> AnalysisResult:
        return run_analysis(
            inputs,
            settings,
            outcome_index=index,
            fit_rows=retained,
            fixed_bounds=base_bounds if settings.fixed_bounds else None,
            skip_empty_subgroups=True,
        )

    index, retained, draws, analysis = draw_replicate(inputs, rng, replicate, _analyze)

    discovery_rows: List[Dict[str, object]] = []
    if discovery_targets and binarized is not None:
        rows = binarized.iloc[index]
        for kind, held, method in discovery_targets:
            try:
                report = discover(analysis.estimator.iate(method, kind, held), rows, kind, held, method)
            except CollinearityError as e:
                logger.debug("bootstrap_discovery_skipped", replicate=replicate, columns=e.columns)
                continue
            discovery_rows.extend(
                {
                    "replicate": replicate,
                    "estimand": kind,
                    "held_level": held,
                    "method": method,
                    "covariate": row.covariate,
                    "coefficient": row.coefficient,
                }
                for row in report.rows
            )
    return ReplicateResult(replicate, draws, index, retained, analysis, discovery_rows)


def _intervals(frame: pd.DataFrame, keys: Sequence[str], level: float) -> Dict[Tuple, Tuple[float, float]]:
    intervals = {}
    for key, group in frame.groupby(list(keys), sort=False):
        values = group[frame.columns[-1]].to_numpy(dtype=float)
        intervals[tuple(key)] = percentile_ci(values[np.isfinite(values)], level)
    return intervals


def bootstrap_effects(
    inputs: AnalysisInputs,
    settings: EstimationSettings,
    B: int,
    seed: int,
    threads: int = 1,
    level: float = 0.95,
    base_bounds: Optional[Dict] = None,
    discovery_targets: Sequence[DiscoveryTarget] = (),
    binarized: Optional[pd.DataFrame] = None,
) -> BootstrapRun:
    """
    Percentile bootstrap of every configured effect.

    Args:
        inputs: Prepared full dataset
        settings: Estimation settings shared with the full-data fit
        B: Number of replicates (>= 2)
        seed: Root seed; replicate b draws from stream (seed, b)
        threads: Worker threads; output does not depend on it
        level: Confidence level
        base_bounds: Full-data truncation bounds, reused when settings.fixed_bounds is set
        discovery_targets: (estimand, held level, method) IATEs to re-run discovery on
        binarized: Full-data binarized discovery design (cuts held fixed)

    Returns:
        BootstrapRun with replicate table and intervals keyed by
        (estimand, held level, method, subgroup)
    """
    if B < 2:
        raise ParameterError(f"bootstrap needs B >= 2, got {B}")
    if settings.fixed_bounds and base_bounds is None:
        raise ParameterError("fixed-bounds bootstrap needs the full-data truncation bounds")

    logger.info("bootstrap_starting", B=B, seed=seed, threads=threads, fixed_bounds=settings.fixed_bounds)

    def _one(b: int) -> ReplicateResult:
        return bootstrap_replicate(inputs, settings, seed, b, base_bounds, discovery_targets, binarized)

    results = run_replicates(_one, B, threads)

    replicates = pd.DataFrame(
        [
            {
                "replicate": result.replicate,
                "estimand": e.estimand,
                "held_level": e.held_level,
                "method": e.method,
                "subgroup": e.subgroup or "all",
                "estimate": e.estimate,
            }
            for result in results
            for e in result.analysis.estimates
        ],
        columns=REPLICATE_COLUMNS,
    )
    intervals = _intervals(replicates.drop(columns="replicate"), REPLICATE_COLUMNS[1:5], level)

    discovery = None
    discovery_intervals: Dict[Tuple, Tuple[float, float]] = {}
    if discovery_targets:
        discovery = pd.DataFrame([row for r in results for row in r.discovery], columns=DISCOVERY_COLUMNS)
        if len(discovery):
            discovery_intervals = _intervals(discovery.drop(columns="replicate"), DISCOVERY_COLUMNS[1:5], level)

    redraws = sum(result.draws - 1 for result in results)
    logger.info("bootstrap_complete", B=B, redraws=redraws, rows=len(replicates))
    return BootstrapRun(
        B=B,
        seed=seed,
        replicates=replicates,
        intervals=intervals,
        level=level,
        redraws=redraws,
        discovery=discovery,
        discovery_intervals=discovery_intervals,
    )
