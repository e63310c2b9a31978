"""
Model specifications of the misspecification scenarios.

    A: propensity and outcome models correct
    B: propensity model misspecified (linear terms only)
    C: outcome model misspecified (no interaction terms)
    D: both misspecified

The correct outcome model carries the planted-subgroup interactions with Z and
G unless the scenario turns `subgroup_terms` off; it is then the baseline law
with main effects of Z and G only, and G-computation cannot express the
subgroup effects in any scenario.
"""

from src.models.scenario import SimScenario

PROPENSITY_CORRECT = "KeyLogPop + KeyLogPop:KeyPctUrban + I(LogOpTime**2)"
PROPENSITY_LINEAR = "KeyLogPop + KeyPctUrban + LogOpTime"

OUTCOME_BASELINE = "LogPop + SmokeRate + PctPoor + PctNonwhite + PctNonwhite:SmokeRate + Z + G"
OUTCOME_CORRECT = OUTCOME_BASELINE + " + Z:SubgroupMid + Z:SubgroupHigh + G:SubgroupMid + G:SubgroupHigh"
OUTCOME_NO_INTERACTIONS = "LogPop + SmokeRate + PctPoor + PctNonwhite + Z + G"


def propensity_formula(scenario: SimScenario) -> str:
    return PROPENSITY_CORRECT if scenario.propensity_correct else PROPENSITY_LINEAR


def outcome_formula(scenario: SimScenario) -> str:
    if not scenario.outcome_correct:
        return OUTCOME_NO_INTERACTIONS
    return OUTCOME_CORRECT if scenario.subgroup_terms else OUTCOME_BASELINE
