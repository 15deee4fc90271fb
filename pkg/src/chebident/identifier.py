"""Per-window regularized least squares and the cross-window continuity solve."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from chebident.cheb_basis import Interval, eval_basis, eval_basis_derivative, eval_shifted_basis
from chebident.errors import DimensionMismatchError, DomainError, SingularSystemError
from chebident.windowing import WindowRecord

COND_LIMIT = 1e12


@dataclass(frozen=True)
class CoefficientSet:
    """Chebyshev coefficients for one window, one column per state dimension."""

    window_index: int
    matrix: np.ndarray
    kind: str = "eta"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        if m.ndim != 2 or m.shape[0] < 1:
            raise DimensionMismatchError(f"coefficient matrix must be (M+1, N_P), got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("coefficient matrix has non-finite entries")
        if self.kind not in ("eta", "theta"):
            raise ValueError(f"kind must be 'eta' or 'theta', got {self.kind!r}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def degree(self) -> int:
        return self.matrix.shape[0] - 1

    @property
    def n_states(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class RegularizerConfig:
    """Ridge term ``R0`` and prior ``eta0`` of the window estimator."""

    R0: np.ndarray
    eta0: np.ndarray

    def __post_init__(self):
        R0 = np.asarray(self.R0, dtype=float)
        eta0 = np.asarray(self.eta0, dtype=float)
        if R0.ndim != 2 or R0.shape[0] != R0.shape[1]:
            raise DimensionMismatchError(f"R0 must be square, got shape {R0.shape}")
        if not np.allclose(R0, R0.T, atol=1e-14, rtol=0):
            raise ValueError("R0 must be symmetric")
        if np.linalg.eigvalsh(R0).min() < -1e-14 * max(1.0, np.abs(R0).max()):
            raise ValueError("R0 must be positive semidefinite")
        if eta0.ndim != 2 or eta0.shape[0] != R0.shape[0]:
            raise DimensionMismatchError(f"eta0 shape {eta0.shape} does not match R0 shape {R0.shape}")
        object.__setattr__(self, "R0", R0)
        object.__setattr__(self, "eta0", eta0)

    @classmethod
    def ridge(cls, M: int, n_states: int, r0: float = 1e-8, eta0: Optional[np.ndarray] = None):
        prior = np.zeros((M + 1, n_states)) if eta0 is None else eta0
        return cls(R0=r0 * np.eye(M + 1), eta0=prior)


def design_matrix(node_times, iv: Interval, M: int) -> np.ndarray:
    """``(M+1) x n`` matrix whose k-th column is the shifted basis at node ``k``."""
    return eval_shifted_basis(np.asarray(node_times, dtype=float), iv, M).T


def fit_window(record: WindowRecord, reg: RegularizerConfig) -> CoefficientSet:
    """Estimate ``eta = (T T^T + R0)^-1 (R0 eta0 + T Xdot)`` from one window's samples."""
    M = record.M
    Xdot = record.derivative_estimates
    if reg.R0.shape != (M + 1, M + 1):
        raise DimensionMismatchError(f"R0 is {reg.R0.shape}, window has M+1={M + 1} coefficients")
    if reg.eta0.shape != (M + 1, Xdot.shape[1]):
        raise DimensionMismatchError(f"eta0 is {reg.eta0.shape}, expected {(M + 1, Xdot.shape[1])}")
    T = design_matrix(record.node_times, record.interval, M)

    if np.any(reg.R0):
        A = T @ T.T + reg.R0
        rhs = reg.R0 @ reg.eta0 + T @ Xdot
        try:
            factor = scipy.linalg.cho_factor(A)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(f"window {record.index}: normal matrix not positive definite") from exc
        if np.linalg.cond(A) > COND_LIMIT:
            raise SingularSystemError(f"window {record.index}: normal matrix singular to working precision")
        eta = scipy.linalg.cho_solve(factor, rhs)
    else:
        # R0 = 0: square interpolation T^T eta = Xdot
        if T.shape[0] != T.shape[1]:
            raise SingularSystemError("unregularized fit requires a square design")
        Q, R = np.linalg.qr(T.T)
        if np.linalg.cond(R) > COND_LIMIT:
            raise SingularSystemError(f"window {record.index}: design matrix singular to working precision")
        eta = scipy.linalg.solve_triangular(R, Q.T @ Xdot)
    return CoefficientSet(record.index, eta, "eta")


def continuity_matrix(iv_new: Interval, M: int) -> np.ndarray:
    """Row ``p`` holds ``d^p T_i^S / dt^p`` of the new window at its left endpoint."""
    rows = [eval_shifted_basis(iv_new.a, iv_new, M, p) for p in range(M + 1)]
    return np.triu(np.array(rows))


def _endpoint_derivatives(x: float, M: int) -> np.ndarray:
    """Canonical ``T_i^(p)(x)`` with rows p = 0..M and columns i = 0..M."""
    rows = [eval_basis(x, M)] + [eval_basis_derivative(x, M, p) for p in range(1, M + 1)]
    return np.array(rows)


def solve_theta(eta_prev: CoefficientSet, iv_prev: Interval, iv_new: Interval) -> CoefficientSet:
    """Re-expand the previous window's polynomial on the new window.

    Matches the value and the first ``M`` derivatives at the shared
    endpoint; the system is upper triangular and solved by back-substitution.
    """
    if abs(iv_prev.b - iv_new.a) > 1e-12 * max(1.0, abs(iv_new.a)):
        raise DomainError(f"windows are not adjacent: {iv_prev} then {iv_new}")
    if abs(iv_prev.width - iv_new.width) > 1e-12 * iv_new.width:
        raise DomainError(f"window widths differ: {iv_prev.width!r} vs {iv_new.width!r}")
    M = eta_prev.degree
    # Both sides carry the same (2/tau)^p factor per row; cancel it so the
    # triangular system has exact integer entries.
    A = _endpoint_derivatives(-1.0, M)
    B = _endpoint_derivatives(1.0, M)
    rhs = B @ eta_prev.matrix
    theta = scipy.linalg.solve_triangular(np.triu(A), rhs, lower=False)
    return CoefficientSet(eta_prev.window_index + 1, theta, "theta")


def continuity_rhs(eta_prev: CoefficientSet, iv_prev: Interval) -> np.ndarray:
    """Derivatives of the previous window's polynomial at its right endpoint (rows p)."""
    M = eta_prev.degree
    rows = [eval_shifted_basis(iv_prev.b, iv_prev, M, p) for p in range(M + 1)]
    return np.array(rows) @ eta_prev.matrix


def predict_dynamics(coeffs: CoefficientSet, iv: Interval, t, extrapolate: bool = False) -> np.ndarray:
    """Evaluate ``coeffs^T T(t)`` on ``iv``; vector for scalar ``t``, ``(n, N_P)`` for arrays."""
    B = eval_shifted_basis(t, iv, coeffs.degree, extrapolate=extrapolate)
    return B @ coeffs.matrix
