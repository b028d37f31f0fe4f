"""Exception hierarchy for tslab.

Every error carries the process exit code the CLI reports for it:
1 for configuration problems, 2 for bad or insufficient data, 3 for
internal/computational failures.
"""

from typing import List, Optional, Sequence


class TslabError(Exception):
    """Base exception for tslab errors."""

    exit_code = 3

    def __init__(self, message: str):
        """Initialize error.

        Args:
            message: Human-readable error message
        """
        self.message = message
        super().__init__(message)


class ConfigError(TslabError):
    """Invalid pipeline configuration."""

    exit_code = 1

    def __init__(self, errors: Sequence[str]):
        """Initialize configuration error.

        Args:
            errors: Individual validation failures
        """
        self.errors: List[str] = list(errors)
        super().__init__("Invalid configuration: " + "; ".join(self.errors))


class DataError(TslabError):
    """Input data cannot be used for the requested computation."""

    exit_code = 2


class DataValidationError(DataError):
    """Rows of an input file violate the bar invariants."""

    def __init__(self, path: str, problems: Sequence[str], rows: Optional[Sequence[int]] = None):
        """Initialize validation error.

        Args:
            path: File that failed validation
            problems: One message per offending row
            rows: 1-based data row numbers of the offending rows
        """
        self.path = path
        self.problems = list(problems)
        self.rows = sorted(set(rows or []))
        shown = "; ".join(self.problems[:10])
        more = f" (+{len(self.problems) - 10} more)" if len(self.problems) > 10 else ""
        super().__init__(f"{path}: {shown}{more}")


class SeriesTooShortError(DataError):
    """Series has fewer observations than the computation needs."""

    def __init__(self, length: int, required: int, what: str = "series"):
        self.length = length
        self.required = required
        super().__init__(f"{what} too short: length {length}, need at least {required}")


class UndefinedValuesError(DataError):
    """A window touches undefined (warm-up) values."""


class ScalingError(DataError):
    """Scaling cannot be applied or inverted."""


class LabelingError(DataError):
    """Labels cannot be computed for the requested slices."""


class SplitError(DataError):
    """Split parameters are incompatible with the dataset."""


class ComputationError(TslabError):
    """Numerical failure inside a computation."""


class RankDeficiencyError(ComputationError):
    """Design matrix is not of full column rank."""


class ProbeError(ComputationError):
    """Probe model cannot be trained on the given data."""


class TrainingDivergedError(ProbeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, loss: float):
        """Initialize divergence error.

        Args:
            epoch: 1-based epoch in which the loss became non-finite
            loss: Offending loss value
        """
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"Non-finite loss {loss} in epoch {epoch}")


class PipelineStageError(TslabError):
    """Failure inside one stage of the dataset pipeline."""

    def __init__(self, stage: str, cause: Exception):
        """Initialize stage error.

        Args:
            stage: Name of the failing stage
            cause: Original exception
        """
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code if isinstance(cause, TslabError) else 3
        super().__init__(f"Stage '{stage}' failed: {cause}")
