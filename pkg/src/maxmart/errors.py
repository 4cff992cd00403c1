class MaxmartError(ValueError):
    """Base class for all errors raised by maxmart."""


class DomainError(MaxmartError):
    """A path was evaluated outside the times where it is defined."""


class ParameterError(MaxmartError):
    """A model, check or estimator received an invalid parameter."""


class StructuralError(MaxmartError):
    """Input data does not have the structure an operation needs."""


class ConfigError(MaxmartError):
    """Invalid run configuration; the CLI maps this to exit status 2."""
