"""Adaptive state estimator driven by the continuity-corrected window polynomial."""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg

from chebident.cheb_basis import Interval, eval_shifted_basis
from chebident.errors import DimensionMismatchError, DomainError, NumericalError, SingularSystemError
from chebident.identifier import CoefficientSet


@dataclass(frozen=True)
class GainDesign:
    Z: np.ndarray
    Q: np.ndarray
    K: np.ndarray

    def residual(self) -> float:
        """Frobenius norm of ``Z K + K^T Z + Q``."""
        return float(np.linalg.norm(self.Z @ self.K + self.K.T @ self.Z + self.Q))


def _check_spd(A: np.ndarray, name: str) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(A).min() <= 0:
        raise ValueError(f"{name} must be positive definite")


def solve_gain(Z, Q) -> GainDesign:
    """Gain ``K`` satisfying ``Z K + K^T Z = -Q``.

    ``K = -Z^{-1} Q / 2`` solves the equation for any symmetric ``Z`` and
    ``Q``: ``Z K = -Q/2`` and ``K^T Z = -Q Z^{-1} Z / 2 = -Q/2``.  For
    ``Z = z I`` this is ``-Q / (2 z)``.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    _check_spd(Z, "Z")
    _check_spd(Q, "Q")
    if Z.shape != Q.shape:
        raise DimensionMismatchError(f"Z {Z.shape} and Q {Q.shape} differ in shape")
    if np.linalg.eigvalsh(Q).min() <= 3:
        warnings.warn("lambda_min(Q) <= 3: ultimate-boundedness condition not met", RuntimeWarning, stacklevel=2)

    n = Z.shape[0]
    z = Z[0, 0]
    if np.array_equal(Z, z * np.eye(n)):
        K = -Q / (2.0 * z)
    else:
        if np.linalg.cond(Z) > 1e12:
            raise SingularSystemError("Z is singular to working precision")
        K = -0.5 * scipy.linalg.cho_solve(scipy.linalg.cho_factor(Z), Q)
    return GainDesign(Z=Z, Q=Q, K=K)


@dataclass
class EstimatorState:
    x_hat: np.ndarray
    t: float
    active_theta: CoefficientSet
    active_interval: Interval
    gain: GainDesign
    anchor_state: np.ndarray


def feedforward(state: EstimatorState, t) -> np.ndarray:
    """``theta^T T(t)`` on the active window (vectorised over ``t``)."""
    theta = state.active_theta
    B = eval_shifted_basis(t, state.active_interval, theta.degree)
    return B @ theta.matrix


def estimator_rhs(state: EstimatorState, t: float) -> np.ndarray:
    """``theta^T T(t) - K (x(t^{w-1}) - x_hat)`` evaluated at the state's ``x_hat``."""
    if not state.active_interval.contains(t):
        raise DomainError(f"t={t!r} outside active window {state.active_interval}")
    return feedforward(state, t) - state.gain.K @ (state.anchor_state - state.x_hat)


def advance_window(state: EstimatorState, theta_new: CoefficientSet, iv_new: Interval,
                   measured_start) -> EstimatorState:
    """Switch to the next window, resetting the estimate to the measured state."""
    m = np.array(measured_start, dtype=float)
    if m.shape != state.x_hat.shape:
        raise DimensionMismatchError(f"measured state shape {m.shape} vs estimate shape {state.x_hat.shape}")
    if theta_new.n_states != m.shape[0]:
        raise DimensionMismatchError(f"theta has {theta_new.n_states} columns, state has {m.shape[0]}")
    if abs(iv_new.a - state.active_interval.b) > 1e-12 * max(1.0, abs(iv_new.a)):
        raise DomainError(f"new window {iv_new} is not adjacent to {state.active_interval}")
    return dataclasses.replace(
        state,
        x_hat=m.copy(),
        t=iv_new.a,
        active_theta=theta_new,
        active_interval=iv_new,
        anchor_state=m.copy(),
    )


def integrate_window(state: EstimatorState, step: float) -> Tuple[np.ndarray, np.ndarray]:
    """RK4 integration of the estimator across the active window.

    Returns ``(times, x_hat)`` including the window start; the final sample
    lands on the window end.  ``state.x_hat`` and ``state.t`` are advanced to
    the end of the window.
    """
    iv = state.active_interval
    n = int(round(iv.width / step))
    if n < 1 or abs(n * step - iv.width) > step:
        raise ValueError(f"step {step!r} does not divide window width {iv.width!r}")
    h = iv.width / n
    times = iv.a + h * np.arange(n + 1)
    times[-1] = iv.b
    half = iv.a + h * (np.arange(n) + 0.5)
    ff_grid = feedforward(state, times)
    ff_half = feedforward(state, half)

    K = state.gain.K
    bias = -K @ state.anchor_state
    x = np.array(state.x_hat, dtype=float)
    out = np.empty((n + 1, x.shape[0]))
    out[0] = x
    # rhs(t, x) = ff(t) + bias + K x
    for k in range(n):
        k1 = ff_grid[k] + bias + K @ x
        k2 = ff_half[k] + bias + K @ (x + 0.5 * h * k1)
        k3 = ff_half[k] + bias + K @ (x + 0.5 * h * k2)
        k4 = ff_grid[k + 1] + bias + K @ (x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = x
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"state estimate became non-finite in window {iv}")
    state.x_hat = x.copy()
    state.t = iv.b
    return times, out


def coefficient_error_term(theta: CoefficientSet) -> float:
    """Computable part ``2 sqrt(M+1) ||theta||`` of the continuity-solve error bound.

    The remaining terms need the window Lipschitz constant and a derivative
    bound of the true dynamics, neither of which is observable from samples.
    """
    return float(2.0 * np.sqrt(theta.degree + 1) * np.linalg.norm(theta.matrix))
