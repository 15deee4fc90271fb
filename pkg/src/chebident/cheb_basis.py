"""First-kind Chebyshev polynomials on canonical and shifted intervals.

Evaluation uses the three-term recurrence throughout; derivatives are
obtained by differentiating that recurrence ``p`` times, so one code path
serves interior points and the endpoints alike.  All functions accept either
a scalar or a 1-D array of points: a scalar returns a vector of length
``M + 1``, an array of ``n`` points returns an ``(n, M + 1)`` matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from chebident.errors import DomainError, RankDeficiencyError

DOMAIN_TOL = 1e-12
COND_LIMIT = 1e12


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[a, b]`` with ``a < b``."""

    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise DomainError(f"interval endpoints must be finite, got [{a}, {b}]")
        if not a < b:
            raise DomainError(f"interval requires a < b, got [{a}, {b}]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def width(self) -> float:
        return self.b - self.a

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.a + self.b)

    def to_canonical(self, t):
        """Inverse of :func:`shift_point`: map ``[a, b]`` onto ``[-1, 1]``."""
        return (2.0 * np.asarray(t, dtype=float) - (self.a + self.b)) / (self.b - self.a)

    def contains(self, t, tol: float = DOMAIN_TOL) -> bool:
        t = np.asarray(t, dtype=float)
        slack = tol * max(1.0, abs(self.a), abs(self.b))
        return bool(np.all((t >= self.a - slack) & (t <= self.b + slack)))


@dataclass(frozen=True)
class BasisEval:
    """Shifted-basis values ``d^p T_i^S / dt^p`` at a set of query points."""

    interval: Interval
    degree: int
    derivative_order: int
    points: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    residual_norm: float
    bound: Optional[float] = None


def _check_canonical(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError("Chebyshev argument must be finite")
    if np.any(np.abs(x) > 1.0 + DOMAIN_TOL):
        raise DomainError(f"Chebyshev argument outside [-1, 1]: max |x| = {np.max(np.abs(x))!r}")


def _recurrence(x: np.ndarray, M: int, p: int) -> np.ndarray:
    # d^p T_i = 2x d^p T_{i-1} + 2p d^{p-1} T_{i-1} - d^p T_{i-2}
    out = np.zeros(x.shape + (M + 1,))
    out[..., 0] = 1.0
    if M >= 1:
        out[..., 1] = x
    for i in range(2, M + 1):
        out[..., i] = 2.0 * x * out[..., i - 1] - out[..., i - 2]
    for q in range(1, p + 1):
        prev = out
        out = np.zeros_like(prev)
        if M >= 1 and q == 1:
            out[..., 1] = 1.0
        for i in range(2, M + 1):
            out[..., i] = 2.0 * x * out[..., i - 1] + 2.0 * q * prev[..., i - 1] - out[..., i - 2]
    return out


def _as_points(x) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim > 1:
        raise ValueError(f"expected a scalar or 1-D array of points, got shape {arr.shape}")
    return arr, arr.ndim == 0


def eval_basis(x, M: int) -> np.ndarray:
    """Return ``[T_0(x), ..., T_M(x)]`` on the canonical interval."""
    if M < 0:
        raise ValueError(f"M must be >= 0, got {M}")
    arr, _ = _as_points(x)
    _check_canonical(arr)
    return _recurrence(arr, M, 0)


def eval_basis_derivative(x, M: int, p: int) -> np.ndarray:
    """Return ``[T_0^(p)(x), ..., T_M^(p)(x)]``; entries with ``i < p`` are 0."""
    if M < 0:
        raise ValueError(f"M must be >= 0, got {M}")
    if p < 1:
        raise ValueError(f"derivative order p must be >= 1, got {p}")
    arr, _ = _as_points(x)
    _check_canonical(arr)
    return _recurrence(arr, M, p)


def chebyshev_nodes(N: int) -> np.ndarray:
    """Roots of ``T_N``: ``cos((k - 0.5) pi / N)`` for ``k = 1..N`` (descending)."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    k = np.arange(1, N + 1)
    nodes = np.cos((k - 0.5) * np.pi / N)
    # cos(pi/2) is 6e-17 in floating point; the middle node is exactly zero
    if N % 2 == 1:
        nodes[N // 2] = 0.0
    return nodes


def shift_point(x, iv: Interval):
    """Affine map of ``[-1, 1]`` onto ``[iv.a, iv.b]``."""
    arr = np.asarray(x, dtype=float)
    _check_canonical(arr)
    out = 0.5 * ((iv.a + iv.b) + (iv.b - iv.a) * arr)
    return float(out) if out.ndim == 0 else out


def eval_shifted_basis(t, iv: Interval, M: int, p: int = 0, extrapolate: bool = False) -> np.ndarray:
    """Shifted basis ``T_i^S(t) = T_i((2t - (a+b)) / (b-a))`` and its t-derivatives.

    With ``extrapolate=True`` the polynomials are evaluated outside ``iv`` as
    well; otherwise a point outside the interval raises :class:`DomainError`.
    """
    if M < 0:
        raise ValueError(f"M must be >= 0, got {M}")
    if p < 0:
        raise ValueError(f"derivative order p must be >= 0, got {p}")
    arr, _ = _as_points(t)
    x = iv.to_canonical(arr)
    if extrapolate:
        if not np.all(np.isfinite(x)):
            raise DomainError("evaluation point must be finite")
    else:
        _check_canonical(x)
    vals = _recurrence(x, M, p)
    if p:
        vals = vals * (2.0 / iv.width) ** p
    return vals


def basis_eval(points: Sequence[float], iv: Interval, M: int, p: int = 0) -> BasisEval:
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    return BasisEval(iv, M, p, pts, eval_shifted_basis(pts, iv, M, p))


def error_bound(D: float, iv: Interval, N: int) -> float:
    """Interpolation error bound ``2 D / (N+1)! * ((b - a) / 4)^(N+1)`` at ``N+1`` Chebyshev nodes."""
    if not (math.isfinite(D) and D >= 0):
        raise ValueError(f"D must be finite and nonnegative, got {D}")
    if N < 0:
        raise ValueError(f"N must be >= 0, got {N}")
    if D == 0.0:
        return 0.0
    log_val = math.log(2.0 * D) - math.lgamma(N + 2) + (N + 1) * math.log(iv.width / 4.0)
    if log_val > math.log(np.finfo(float).max):
        return math.inf
    return math.exp(log_val)


def offline_fit(x, y, iv: Interval, M: int, D: Optional[float] = None) -> FitResult:
    """Least-squares Chebyshev coefficients on ``iv`` from samples ``(x_k, y_k)``.

    Solved through a QR factorization of the design matrix.  When the
    ``(M+1)``-th derivative bound ``D`` is given, the interpolation error bound
    for ``M+1`` Chebyshev nodes is attached to the result.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"x and y lengths differ: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < M + 1:
        raise RankDeficiencyError(f"need at least M+1={M + 1} samples, got {x.shape[0]}")
    if not iv.contains(x):
        raise DomainError("sample abscissae must lie in the fit interval")

    X = eval_shifted_basis(np.clip(x, iv.a, iv.b), iv, M)
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() == 0.0 or diag.max() / diag.min() > COND_LIMIT or np.linalg.cond(R) > COND_LIMIT:
        raise RankDeficiencyError("design matrix is rank deficient to working precision")
    c = scipy.linalg.solve_triangular(R, Q.T @ y)
    resid = float(np.linalg.norm(y - X @ c))
    bound = error_bound(D, iv, M) if D is not None else None
    return FitResult(coefficients=c, residual_norm=resid, bound=bound)


def evaluate_series(coefficients, t, iv: Interval, p: int = 0, extrapolate: bool = False) -> np.ndarray:
    """Evaluate ``sum_i c_i d^p T_i^S(t)``; ``coefficients`` may be 1-D or ``(M+1, n)``."""
    c = np.asarray(coefficients, dtype=float)
    B = eval_shifted_basis(t, iv, c.shape[0] - 1, p, extrapolate=extrapolate)
    return B @ c
