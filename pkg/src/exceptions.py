"""
Error hierarchy for the toolkit.

Every error carries the exit code the CLI reports for it:
2 for input/format problems, 3 for numerical or degeneracy problems,
4 for configuration problems.
"""

from typing import List, Optional, Sequence


class BNIError(Exception):
    """Base class for all toolkit errors."""

    exit_code: int = 1


# Input / format errors (exit 2)


class InputError(BNIError):
    """Malformed or missing input data."""

    exit_code = 2


class DataFileError(InputError):
    """An input file is missing or unreadable."""

    def __init__(self, path: str, reason: str = "file not found"):
        self.path = str(path)
        super().__init__(f"{reason}: {self.path}")


class NetworkFormatError(InputError):
    """Bad header, id or weight in the network triplets."""

    def __init__(self, message: str, column: Optional[str] = None):
        self.column = column
        super().__init__(message)


class DuplicateEntryError(InputError):
    """The same (intervention, outcome) pair appears more than once."""


class MappingError(InputError):
    """Treatments or table rows cannot be aligned with the network."""


class UnitTableError(InputError):
    """A unit table violates its invariants (ids, missing cells, treatment values)."""


# Numerical / degeneracy errors (exit 3)


class NumericalError(BNIError):
    """A fit or estimator cannot be computed on the given data."""

    exit_code = 3


class EmptyInputError(NumericalError):
    """An operation received no values."""


class DegenerateStructureError(NumericalError):
    """An outcome unit has fewer than two incident intervention units."""

    def __init__(self, outcome_ids: Sequence[str]):
        self.outcome_ids = list(outcome_ids)
        preview = ", ".join(self.outcome_ids[:5])
        super().__init__(
            f"{len(self.outcome_ids)} outcome unit(s) have fewer than 2 "
            f"incident intervention units: {preview}"
        )


class DegenerateResponseError(NumericalError):
    """Binary response contains a single class."""


class SeparationError(NumericalError):
    """Logistic coefficients diverge (complete or quasi-complete separation)."""


class RankError(NumericalError):
    """Design or weighted normal equations are rank deficient."""


class DimensionError(NumericalError):
    """Design matrix does not match the fitted model."""


class MissingPropensityError(NumericalError):
    """An intervention unit needed for a joint propensity has no score."""


class PropensityError(NumericalError):
    """A joint propensity used as a weight is not strictly positive."""


class StabilizationError(NumericalError):
    """No unit in the full sample falls in the requested (z, g) cell."""


class SubgroupError(NumericalError):
    """A subgroup has no members."""


class DegenerateCovariateError(NumericalError):
    """A covariate has fewer than two distinct values."""


class CollinearityError(NumericalError):
    """Discovery design is rank deficient."""

    def __init__(self, columns: List[str]):
        self.columns = list(columns)
        super().__init__(f"collinear discovery columns: {', '.join(self.columns)}")


class DegenerateReplicateError(NumericalError):
    """A bootstrap replicate retained a single treatment class."""


class BootstrapAbortError(NumericalError):
    """A bootstrap replicate stayed degenerate after every redraw."""

    def __init__(self, replicate: int, attempts: int, diagnostics: str):
        self.replicate = replicate
        self.attempts = attempts
        self.diagnostics = diagnostics
        super().__init__(
            f"bootstrap replicate {replicate} degenerate after {attempts} draws: {diagnostics}"
        )


# Configuration errors (exit 4)


class ConfigError(BNIError):
    """Invalid configuration or parameters."""

    exit_code = 4


class ParameterError(ConfigError):
    """A numeric parameter is outside its admissible range."""
