"""Windowed approximation error and node-count adaptation.

Two update laws live here.  :func:`update_node_count` is the practical
law driven by the average node error of the estimator's coefficients; it
rounds down when adding nodes and up when removing them.
:func:`theoretical_node_count` is the sufficient-condition law built on the
exponential error envelope, with the opposite rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from chebident.cheb_basis import Interval, eval_shifted_basis
from chebident.errors import ConfigError, DimensionMismatchError, DomainError
from chebident.identifier import CoefficientSet
from chebident.windowing import WindowRecord

ABOVE = "above"
IN_BAND = "in_band"
BELOW = "below"


@dataclass
class NodeSelectorState:
    eps_th: float = 1e-3
    kappa: float = 0.1
    gamma1: float = 0.2
    gamma2: float = 0.9
    M_current: int = 2
    M_min: int = 2
    M_max: int = 16

    def __post_init__(self):
        if not self.eps_th > 0:
            raise ConfigError(f"eps_th must be positive, got {self.eps_th}")
        if not 0 < self.kappa < 1:
            raise ConfigError(f"kappa must lie in (0, 1), got {self.kappa}")
        for name in ("gamma1", "gamma2"):
            g = getattr(self, name)
            if not 0 < g < 10:
                raise ConfigError(f"{name} must lie in (0, 10), got {g}")
        if not 2 <= self.M_min <= self.M_max:
            raise ConfigError(f"need 2 <= M_min <= M_max, got {self.M_min}, {self.M_max}")

    def classify(self, error: float) -> str:
        if error > self.eps_th:
            return ABOVE
        if error < self.kappa * self.eps_th:
            return BELOW
        return IN_BAND


@dataclass(frozen=True)
class ErrorReport:
    window_index: int
    avg_error: float
    max_node_error: float
    regime: str


def node_errors(record: WindowRecord, theta: CoefficientSet, iv: Interval) -> np.ndarray:
    """Euclidean error ``||Xdot_k - theta^T T(t_k)||`` at each sampling node."""
    Xdot = record.derivative_estimates
    if theta.n_states != Xdot.shape[1]:
        raise DimensionMismatchError(
            f"theta has {theta.n_states} state columns, window data has {Xdot.shape[1]}"
        )
    B = eval_shifted_basis(record.node_times, iv, theta.degree)
    return np.linalg.norm(Xdot - B @ theta.matrix, axis=1)


def average_error(record: WindowRecord, theta: CoefficientSet, iv: Interval,
                  selector: NodeSelectorState = None) -> ErrorReport:
    """Average node error of ``theta`` over the window's ``M_w + 1`` nodes.

    ``theta`` must be the coefficient set the estimator actually ran with on
    this window.  The regime tag is filled in when ``selector`` is given.
    """
    errs = node_errors(record, theta, iv)
    avg = float(errs.mean())
    regime = selector.classify(avg) if selector is not None else ""
    return ErrorReport(record.index, avg, float(errs.max()), regime)


def update_node_count(state: NodeSelectorState, report: ErrorReport) -> int:
    """Next window's node count; also stores it in ``state.M_current``."""
    E = report.avg_error
    if E < 0 or math.isnan(E):
        raise ValueError(f"average error must be nonnegative, got {E}")
    M = state.M_current
    regime = state.classify(E)
    if regime == ABOVE:
        M_next = M + math.floor(state.gamma1 * math.log(E / state.eps_th))
    elif regime == IN_BAND:
        M_next = M
    elif E == 0.0:
        M_next = state.M_min
    else:
        M_next = M + math.ceil(state.gamma2 * math.log(E / (state.kappa * state.eps_th)))
    M_next = int(min(max(M_next, state.M_min), state.M_max))
    state.M_current = M_next
    return M_next


def _rho(M: int) -> float:
    if M < 2:
        raise DomainError(f"node-count law needs M >= 2, got {M}")
    return 1.0 / math.log((M + 1) / math.e)


def theoretical_node_count(M_w: int, E_max: float, eps_th: float, kappa: float, M_under: int = None) -> int:
    """Minimum node count from the exponential error envelope.

    ``M_under`` is the last node count whose error was still at least
    ``kappa * eps_th``; it defaults to ``M_w`` when there is no history.
    """
    rho1 = _rho(M_w)
    if not E_max > 0:
        raise DomainError(f"E_max must be positive, got {E_max}")
    if E_max > eps_th:
        return M_w + math.ceil(rho1 * math.log(E_max / eps_th))
    if E_max >= kappa * eps_th:
        return M_w
    rho2 = _rho(M_w if M_under is None else M_under)
    return M_w + math.floor(rho2 * math.log(E_max / (kappa * eps_th)))


def decay_bound(C_w: float, M_w: int) -> float:
    """Exponential envelope ``C_w ((M_w + 1) / e)^(-M_w)`` on the window's max error."""
    if M_w < 2:
        raise DomainError(f"decay bound needs M >= 2, got {M_w}")
    if C_w < 0:
        raise ValueError(f"C_w must be nonnegative, got {C_w}")
    return C_w * ((M_w + 1) / math.e) ** (-M_w)
