"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` (bad input data,
CLI exit code 1) and :class:`ConfigurationError` (bad parameters or
strategy setup, CLI exit code 2).
"""


class SensorPlaceError(Exception):
    """Base class for all library errors."""


class ValidationError(SensorPlaceError, ValueError):
    """Input data violates a schema or integrity constraint."""


class SchemaError(ValidationError):
    pass


class IntegrityError(ValidationError):
    pass


class BundleError(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class DataError(ValidationError):
    pass


class ConfigurationError(SensorPlaceError, ValueError):
    """Parameters or strategy configuration are unusable."""


class ParameterError(ConfigurationError):
    pass


class BudgetError(ConfigurationError):
    pass


class SplitError(ConfigurationError):
    pass


class PlanError(ConfigurationError):
    pass


class ArityError(SensorPlaceError, ValueError):
    """Too few elements for the requested quantity to be defined."""


class ShapeError(SensorPlaceError, ValueError):
    pass


class EmptyGraphError(SensorPlaceError, ValueError):
    pass


class UndefinedError(SensorPlaceError, ValueError):
    """The requested quantity is mathematically undefined for this input."""


class FitError(SensorPlaceError, ValueError):
    pass


class EvaluationError(SensorPlaceError, RuntimeError):
    pass
