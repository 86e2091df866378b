"""Exception hierarchy for the duofair package."""


class DuofairError(Exception):
    """Base class for all package errors."""


class DataError(DuofairError):
    """A dataset file is missing, unreadable, or empty after filtering."""


class SchemaError(DataError):
    """A CSV does not match the declared column schema or value coding."""


class GroupError(DataError):
    """A sensitive group (or required stratum) is empty where it must not be."""


class SplitError(DataError):
    """A train/test split could not be produced (e.g. a group kept vanishing)."""


class DimensionError(DuofairError):
    """Model parameters or inputs have an incompatible shape."""


class NonFiniteError(DuofairError):
    """An objective value or gradient came out NaN/inf, with the term named."""


class UndefinedMetricError(DuofairError):
    """A metric is mathematically undefined on the given data (e.g. AUC with one class)."""


class PenaltyConfigError(DuofairError):
    """An incompatible or out-of-range penalty configuration."""


class TrainingDivergedError(DuofairError):
    """The composite objective became non-finite during optimization."""

    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        msg = f"objective became non-finite at epoch {epoch}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ConfigError(DuofairError):
    """A run-config file is malformed: unknown field, wrong type, bad value."""


class RepairError(DuofairError):
    """A data-repair step could not be carried out as requested."""
