"""
LangGraph-based pipeline behind the CLI subcommands.

    derive:    load -> derive -> write
    estimate:  load -> derive -> estimate -> [bootstrap] -> write
    discover:  load -> derive -> estimate -> discover -> [bootstrap] -> write
    simulate:  simulate -> write

Every node catches toolkit errors, records them in the state and routes to
END; `AnalysisPipeline.run` re-raises the recorded error so the CLI can map
it to an exit code.
"""

import re
import time
from pathlib import Path
from typing import Callable, Dict, Literal, Tuple

import numpy as np
import yaml
from langgraph.graph import END, START, StateGraph

from src.config import RunConfig
from src.core.analysis import estimates_frame, prepare_inputs, run_analysis
from src.core.bootstrap import bootstrap_effects
from src.core.discovery import binarize_at_median, discover, trim_outcomes
from src.core.exposure import cell_counts, derive_exposure_structure, exposure_frame, map_treatments, restrict_dataset
from src.core.mappings import get_mapping
from src.exceptions import BNIError, ConfigError, MappingError
from src.integrations.csv_io import read_dataset, read_network_csv, read_unit_table, write_frame
from src.integrations.plots import ab_boxplots, forest_plot
from src.logging_config import get_logger
from src.models.estimates import EstimationSettings
from src.models.state import Command, PipelineState
from src.simulation.runner import run_scenario
from src.simulation.studies import StudyResult, run_study, summarize

logger = get_logger(__name__)

Work = Callable[[PipelineState], Tuple[PipelineState, Dict[str, object]]]


def _execute(node: str, state: dict, work: Work) -> dict:
    """Run one node's work on the state, recording duration or failure."""
    logger.info("pipeline_node_start", node=node)
    start_time = time.time()
    pipeline_state = PipelineState(**state)
    try:
        result, summary = work(pipeline_state)
    except BNIError as e:
        logger.error("pipeline_node_failed", node=node, error=str(e), error_type=type(e).__name__)
        pipeline_state.add_error(f"{node} failed: {e}")
        pipeline_state.failure = e
        pipeline_state.next_action = "fail"
        return pipeline_state.to_graph()

    duration = time.time() - start_time
    result.add_node_record(node, summary, duration)
    logger.info("pipeline_node_complete", node=node, duration=duration, **summary)
    return result.to_graph()


def _settings(state: PipelineState) -> EstimationSettings:
    config: RunConfig = state.config
    settings = config.estimation
    if state.command == "discover" and config.discovery.method not in settings.methods:
        settings = settings.model_copy(update={"methods": list(settings.methods) + [config.discovery.method]})
    return settings


# Node work


def _load(state: PipelineState):
    config: RunConfig = state.config
    if state.command == "derive":
        missing = [name for name in ("network", "interventions") if not getattr(config, name)]
        if missing:
            raise ConfigError(f"missing input path(s): {', '.join(missing)}")
        network = read_network_csv(config.network)
        interventions = read_unit_table(config.interventions, "intervention")
        state.network = network
        state.interventions = interventions.reindex(network.intervention_ids)
        state.next_action = "derive"
        return state, {"J": network.J, "n": network.n}

    dataset = read_dataset(*config.require_inputs())
    if config.trim > 0:
        if dataset.outcomes.outcome is None:
            raise MappingError("outcome trimming needs an outcome column")
        keep = trim_outcomes(dataset.outcomes.outcome, config.trim)
        state.trimmed_from = dataset.network.n
        dataset = restrict_dataset(dataset, keep)
        logger.info("outcomes_trimmed", fraction=config.trim, kept=int(keep.size), dropped=state.trimmed_from - int(keep.size))
    state.dataset = dataset
    state.network = dataset.network
    state.interventions = dataset.interventions
    state.next_action = "derive"
    return state, {"J": dataset.network.J, "n": dataset.network.n}


def _derive(state: PipelineState):
    if state.command == "derive":
        network = derive_exposure_structure(state.network)
        if state.treatment is None:
            raise MappingError("intervention table has no treatment column")
        state.network = network
        state.assignment = map_treatments(network, state.treatment, get_mapping(state.config.estimation.mapping))
        state.next_action = "write"
    else:
        state.inputs = prepare_inputs(state.dataset, _settings(state))
        state.network = state.inputs.network
        state.assignment = state.inputs.assignment
        state.next_action = "estimate"
    counts = cell_counts(state.assignment)
    return state, {"cell_counts": counts.tolist()}


def _estimate(state: PipelineState):
    settings = _settings(state)
    state.result = run_analysis(state.inputs, settings)
    if state.command == "discover":
        state.next_action = "discover"
    else:
        state.next_action = "bootstrap" if state.config.bootstrap > 0 else "write"
    return state, {"estimates": len(state.result.estimates)}


def _discover(state: PipelineState):
    config: RunConfig = state.config
    frame = state.inputs.outcome_frame
    if config.discovery.covariates:
        missing = [c for c in config.discovery.covariates if c not in frame.columns]
        if missing:
            raise ConfigError(f"unknown discovery covariate(s): {missing}")
        covariates = frame[config.discovery.covariates]
    else:
        constant = [c for c in frame.columns if frame[c].nunique() < 2]
        if constant:
            logger.warning("discovery_covariates_skipped", columns=constant, reason="fewer than two distinct values")
        covariates = frame.drop(columns=constant)

    binarized, cuts = binarize_at_median(covariates)
    reports = []
    for kind, held, method in config.discovery.parsed_targets():
        iates = state.result.estimator.iate(method, kind, held)
        reports.append(discover(iates, binarized, kind, held, method, cuts=cuts, c=config.discovery.huber_c))
    state.binarized, state.cuts, state.reports = binarized, cuts, reports
    state.next_action = "bootstrap" if config.bootstrap > 0 else "write"
    return state, {
        "targets": len(reports),
        "significant": sum(row.significant for report in reports for row in report.rows),
    }


def _bootstrap(state: PipelineState):
    config: RunConfig = state.config
    seed = config.require_seed("bootstrap")
    targets = config.discovery.parsed_targets() if state.command == "discover" else ()
    state.bootstrap = bootstrap_effects(
        state.inputs,
        _settings(state),
        B=config.bootstrap,
        seed=seed,
        threads=config.threads,
        level=config.level,
        base_bounds=state.result.bundle.truncation_bounds if state.result.bundle is not None else None,
        discovery_targets=targets,
        binarized=state.binarized,
    )
    state.next_action = "write"
    return state, {"B": config.bootstrap, "redraws": state.bootstrap.redraws}


def _simulate(state: PipelineState):
    config: RunConfig = state.config
    seed = config.require_seed("simulate")
    simulation = config.simulation
    base = simulation.scenario.model_copy(update={"seed": seed})
    if simulation.study == "single":
        result = run_scenario(base, threads=config.threads)
        study = StudyResult("single", result.table, result.failures, summarize(result.table))
    else:
        study = run_study(simulation.study, base, threads=config.threads, values=simulation.values)
    state.study = study
    state.next_action = "write"
    return state, {"rows": len(study.table), "failures": len(study.failures)}


# Output


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", str(text))


def _metadata(state: PipelineState) -> Dict[str, object]:
    """Echo of the resolved run parameters written next to the result tables."""
    config: RunConfig = state.config
    metadata: Dict[str, object] = {"command": state.command, "config": config.model_dump(mode="json")}
    if state.network is not None:
        metadata["J"] = state.network.J
        metadata["n"] = state.network.n
    if state.trimmed_from is not None:
        metadata["trimmed_from"] = state.trimmed_from
    if state.assignment is not None:
        metadata["cell_counts"] = cell_counts(state.assignment).tolist()
    if state.result is not None and state.result.bundle is not None:
        bounds = state.result.bundle.truncation_bounds
        metadata["truncation"] = {
            "component": list(config.estimation.truncation.component),
            "joint": list(config.estimation.truncation.joint),
            "bounds": {name: [float(lo), float(hi)] for name, (lo, hi) in bounds.items()},
        }
    if state.result is not None and state.result.propensity is not None:
        metadata["propensity_formula"] = state.result.propensity.formula
        metadata["propensity_dropped"] = list(state.result.propensity.dropped)
    if state.bootstrap is not None:
        metadata["bootstrap"] = {"B": state.bootstrap.B, "seed": state.bootstrap.seed, "redraws": state.bootstrap.redraws}
    return metadata


def _write(state: PipelineState):
    config: RunConfig = state.config
    output_dir = Path(config.output_dir)
    written = []

    def emit(frame, name):
        path = output_dir / name
        write_frame(frame, path)
        written.append(str(path))

    if state.command == "derive":
        emit(exposure_frame(state.network, state.assignment), "exposures.csv")

    elif state.command in ("estimate", "discover"):
        result = state.result
        estimates = result.estimates
        if state.bootstrap is not None:
            estimates = [e.model_copy(update={"ci": state.bootstrap.intervals.get(e.key)}) for e in estimates]
            emit(state.bootstrap.replicates, "bootstrap_replicates.csv")
        emit(estimates_frame(estimates), "estimates.csv")
        if result.bundle is not None:
            emit(result.bundle.to_frame(state.network.outcome_ids), "propensity.csv")

        for report in state.reports:
            if state.bootstrap is not None:
                rows = [
                    row.model_copy(
                        update={
                            "bootstrap_ci": state.bootstrap.discovery_intervals.get(
                                (report.estimand, report.held_level, report.method, row.covariate)
                            )
                        }
                    )
                    for row in report.rows
                ]
                report = report.model_copy(update={"rows": rows})
            stem = f"discovery_{report.estimand}_{report.held_level}_{report.method}"
            emit(report.to_frame(), f"{stem}.csv")
            if config.plots:
                written.append(str(forest_plot(report, output_dir / f"{stem}.svg")))
        if state.bootstrap is not None and state.bootstrap.discovery is not None:
            emit(state.bootstrap.discovery, "discovery_replicates.csv")

    elif state.command == "simulate":
        study = state.study
        prefix = f"ab_{_safe_name(study.study)}"
        for scenario, table in study.table.groupby("scenario", sort=False):
            emit(table.reset_index(drop=True), f"{prefix}_{_safe_name(scenario)}.csv")
        emit(study.summary, f"summary_{_safe_name(study.study)}.csv")
        if len(study.failures):
            emit(study.failures, f"failures_{_safe_name(study.study)}.csv")
        if config.plots and len(study.table):
            written.extend(str(p) for p in ab_boxplots(study.table, output_dir, prefix=prefix))

    output_dir.mkdir(parents=True, exist_ok=True)
    metadata_path = output_dir / "run_metadata.yaml"
    with open(metadata_path, "w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(_metadata(state), f, sort_keys=False)
    written.append(str(metadata_path))

    state.outputs = written
    state.next_action = "complete"
    return state, {"files": len(written)}


# Node functions for LangGraph


def load_node(state: dict) -> dict:
    return _execute("load", state, _load)


def derive_node(state: dict) -> dict:
    return _execute("derive", state, _derive)


def estimate_node(state: dict) -> dict:
    return _execute("estimate", state, _estimate)


def discover_node(state: dict) -> dict:
    return _execute("discover", state, _discover)


def bootstrap_node(state: dict) -> dict:
    return _execute("bootstrap", state, _bootstrap)


def simulate_node(state: dict) -> dict:
    return _execute("simulate", state, _simulate)


def write_node(state: dict) -> dict:
    return _execute("write", state, _write)


# Conditional routing functions


def route_start(state: dict) -> Literal["load", "simulate"]:
    return "simulate" if state.get("command") == "simulate" else "load"


def route_next(state: dict) -> str:
    """Follow the node's next_action; failures and completion end the graph."""
    action = state.get("next_action")
    if action in (None, "fail", "complete"):
        return "end"
    return action


class AnalysisPipeline:
    """LangGraph pipeline for one CLI subcommand."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.workflow = self._build_workflow()

    def _build_workflow(self):
        logger.debug("building_pipeline_graph")
        workflow = StateGraph(dict)

        workflow.add_node("load", load_node)
        workflow.add_node("derive", derive_node)
        workflow.add_node("estimate", estimate_node)
        workflow.add_node("discover", discover_node)
        workflow.add_node("bootstrap", bootstrap_node)
        workflow.add_node("simulate", simulate_node)
        workflow.add_node("write", write_node)

        workflow.add_conditional_edges(START, route_start, {"load": "load", "simulate": "simulate"})
        workflow.add_conditional_edges("load", route_next, {"derive": "derive", "end": END})
        workflow.add_conditional_edges(
            "derive", route_next, {"estimate": "estimate", "write": "write", "end": END}
        )
        workflow.add_conditional_edges(
            "estimate",
            route_next,
            {"discover": "discover", "bootstrap": "bootstrap", "write": "write", "end": END},
        )
        workflow.add_conditional_edges(
            "discover", route_next, {"bootstrap": "bootstrap", "write": "write", "end": END}
        )
        workflow.add_conditional_edges("bootstrap", route_next, {"write": "write", "end": END})
        workflow.add_conditional_edges("simulate", route_next, {"write": "write", "end": END})
        workflow.add_conditional_edges("write", route_next, {"end": END})

        compiled_workflow = workflow.compile()
        logger.debug("pipeline_graph_built", nodes=len(workflow.nodes))
        return compiled_workflow

    def run(self, command: Command) -> PipelineState:
        """
        Run a subcommand to completion.

        Raises:
            BNIError: the error recorded by the node that failed
        """
        logger.info("pipeline_start", command=command)
        initial = PipelineState(command=command, config=self.config)
        result = PipelineState(**self.workflow.invoke(initial.to_graph()))
        if result.failure is not None:
            raise result.failure
        logger.info(
            "pipeline_complete",
            command=command,
            nodes=[record["node"] for record in result.node_history],
            outputs=len(result.outputs),
        )
        return result


def summarize_estimates(state: PipelineState) -> Dict[str, float]:
    """Population-level estimates keyed `estimand/held/method`, for the completion log."""
    if state.result is None:
        return {}
    return {
        f"{e.estimand}/{e.held_level}/{e.method}": float(np.round(e.estimate, 6))
        for e in state.result.estimates
        if e.subgroup is None
    }
