"""
State management for the analysis pipeline.

Defines the state passed between LangGraph nodes.
"""

import time
from typing import Any, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

Command = Literal["derive", "estimate", "discover", "simulate"]
NextAction = Literal["load", "derive", "estimate", "bootstrap", "discover", "simulate", "write", "complete", "fail"]


class PipelineState(BaseModel):
    """
    Complete state passed between LangGraph nodes.

    Heavy objects (datasets, fits, tables) are carried as-is; nodes only
    replace the fields they produce.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    # Input
    command: Command
    config: Any  # RunConfig

    # Loaded data
    network: Optional[Any] = None  # BipartiteNetwork
    interventions: Optional[Any] = None  # UnitTable
    dataset: Optional[Any] = None  # BipartiteDataset
    trimmed_from: Optional[int] = None

    # Derived structure
    assignment: Optional[Any] = None  # ExposureAssignment
    inputs: Optional[Any] = None  # AnalysisInputs

    # Estimation
    result: Optional[Any] = None  # AnalysisResult
    bootstrap: Optional[Any] = None  # BootstrapRun

    # Discovery
    binarized: Optional[pd.DataFrame] = None
    cuts: Dict[str, float] = Field(default_factory=dict)
    reports: List[Any] = Field(default_factory=list)  # DiscoveryReport

    # Simulation
    study: Optional[Any] = None  # StudyResult

    # Outputs
    outputs: List[str] = Field(default_factory=list)

    # Error Handling
    errors: List[str] = Field(default_factory=list)
    failure: Optional[Any] = None  # the exception that stopped the run

    # Audit Trail
    node_history: List[Dict[str, Any]] = Field(default_factory=list)

    # Control Flow
    next_action: Optional[NextAction] = "load"

    def to_graph(self) -> Dict[str, Any]:
        """Shallow field dict for LangGraph; nested objects are not copied."""
        return {name: getattr(self, name) for name in type(self).model_fields}

    def add_node_record(self, node: str, result: Any, duration: float):
        """Add a node run to the history."""
        self.node_history.append(
            {
                "node": node,
                "result": str(result)[:500],
                "duration_seconds": duration,
                "finished_at": time.time(),
            }
        )

    def add_error(self, error: str):
        self.errors.append(error)

    @property
    def treatment(self) -> Optional[np.ndarray]:
        if self.interventions is None:
            return None
        return self.interventions.treatment
