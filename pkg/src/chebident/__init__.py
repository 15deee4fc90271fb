"""Online sliding-window Chebyshev identification of nonlinear dynamics."""

from chebident.cheb_basis import (
    BasisEval,
    FitResult,
    Interval,
    chebyshev_nodes,
    error_bound,
    eval_basis,
    eval_basis_derivative,
    eval_shifted_basis,
    offline_fit,
    shift_point,
)
from chebident.errors import (
    ConfigError,
    DimensionMismatchError,
    DomainError,
    NumericalError,
    OutOfTraceError,
    RankDeficiencyError,
    SingularSystemError,
)

__version__ = "0.1.0"

__all__ = [
    "BasisEval",
    "ConfigError",
    "DimensionMismatchError",
    "DomainError",
    "FitResult",
    "Interval",
    "NumericalError",
    "OutOfTraceError",
    "RankDeficiencyError",
    "SingularSystemError",
    "chebyshev_nodes",
    "error_bound",
    "eval_basis",
    "eval_basis_derivative",
    "eval_shifted_basis",
    "offline_fit",
    "shift_point",
]
