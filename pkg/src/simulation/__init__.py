"""Monte Carlo simulation harness."""

from src.simulation.runner import ScenarioResult, build_population, run_scenario
from src.simulation.studies import StudyResult, run_study, study_scenarios, summarize

__all__ = [
    "ScenarioResult",
    "StudyResult",
    "build_population",
    "run_scenario",
    "run_study",
    "study_scenarios",
    "summarize",
]
