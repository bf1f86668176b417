"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class PrecisionError(ValueError):
    """A request needs more binary digits than a float64 carries."""


class ConvergenceError(ArithmeticError):
    """A series or quadrature failed to reach its tolerance."""


class EstimateUndefinedError(ValueError):
    """The estimator is not defined for the given data (e.g. n = 0)."""


class DepthCapWarning(UserWarning):
    """The count tree hit its depth cap before all cells became singletons."""


class PriorConditionWarning(UserWarning):
    """The prior schedule does not meet a hypothesis of the result being used."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""
