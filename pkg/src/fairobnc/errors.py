"""Exception hierarchy shared by every module."""


class FairObncError(Exception):
    """Base class for all library errors."""


class ConfigError(FairObncError, ValueError):
    """Invalid experiment configuration or hyperparameter space."""


class DataError(FairObncError, ValueError):
    """Input data violates a structural or domain contract."""


class SchemaError(DataError):
    """A column named by the schema is missing from the file."""


class DomainError(DataError):
    """A value lies outside its allowed domain (e.g. a label not in {0, 1})."""


class CsvParseError(DataError):
    """A cell could not be parsed; carries the 1-based row and column name."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateDataError(DataError):
    """Data is valid but unusable for the requested operation (e.g. one class)."""


class EmptyFeatureSetError(DataError):
    """An operation removed or excluded every feature."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []
