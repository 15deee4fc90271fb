"""Exception types shared across the package."""

import numpy as np


class DomainError(ValueError):
    """Argument lies outside the domain where an operation is defined."""


class DimensionMismatchError(ValueError):
    pass


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    pass


class OutOfTraceError(ValueError):
    """Query time falls outside the span covered by a simulated trace."""


class NumericalError(RuntimeError):
    """Non-finite values appeared during integration or estimation."""


class ConfigError(ValueError):
    pass
