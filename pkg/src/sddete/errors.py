"""Exception hierarchy shared by every pipeline stage."""


class SDDeTEError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(SDDeTEError, ValueError):
    pass


class ShapeError(SDDeTEError, ValueError):
    pass


class AlignmentError(SDDeTEError, ValueError):
    pass


class TaskError(SDDeTEError):
    """A user function failed inside a partition task."""

    def __init__(self, partition, index, cause):
        self.partition = partition
        self.index = index
        self.cause = cause
        where = f"partition {partition}" if index is None else f"partition {partition}, index {index}"
        super().__init__(f"task failed at {where}: {cause!r}")


class DataError(SDDeTEError):
    """Base class for ingestion and dataset-shape problems."""


class IngestionError(DataError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        super().__init__(message)


class SchemaError(DataError):
    pass


class SplitError(DataError):
    pass


class BalanceError(SDDeTEError):
    pass


class UndefinedMetricError(SDDeTEError, ValueError):
    pass


class PersistenceError(SDDeTEError):
    pass


class ConfigError(SDDeTEError):
    pass
