"""Ground-truth plants integrated on a fixed grid.

A :class:`Trace` is the continuous-state oracle the smart sensor reads
from.  Off-grid queries use 4-point Lagrange interpolation, which keeps
backward-difference derivative estimates accurate when the sampling
instants do not fall on the simulation grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

import numpy as np

from chebident.errors import ConfigError, DimensionMismatchError, NumericalError, OutOfTraceError


@dataclass(frozen=True)
class PlantSpec:
    name: str
    dimension: int
    rhs: Callable[[np.ndarray], np.ndarray]
    params: Dict[str, object] = field(default_factory=dict)


def _stuart_landau(a: float, omega: float):
    def rhs(x):
        r2 = x[0] * x[0] + x[1] * x[1]
        return np.array([(a - r2) * x[0] - omega * x[1], (a - r2) * x[1] + omega * x[0]])

    return rhs


def _van_der_pol(mu: float):
    def rhs(x):
        return np.array([x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0]])

    return rhs


def _linear(A: np.ndarray):
    def rhs(x):
        return A @ x

    return rhs


def make_plant(name: str, params: Optional[Mapping[str, object]] = None) -> PlantSpec:
    """Build a named plant.

    Known plants: ``stuart_landau`` (``a``, ``omega``), ``van_der_pol``
    (``mu``) and ``linear`` (``A``, a square matrix).
    """
    params = dict(params or {})
    if name == "stuart_landau":
        a = float(params.setdefault("a", 0.5))
        omega = float(params.setdefault("omega", 1.5))
        return PlantSpec(name, 2, _stuart_landau(a, omega), params)
    if name == "van_der_pol":
        mu = float(params.setdefault("mu", 1.0))
        return PlantSpec(name, 2, _van_der_pol(mu), params)
    if name == "linear":
        if "A" not in params:
            raise ConfigError("linear plant requires a square matrix parameter 'A'")
        A = np.asarray(params["A"], dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigError(f"linear plant matrix must be square, got shape {A.shape}")
        return PlantSpec(name, A.shape[0], _linear(A), params)
    raise ConfigError(f"unknown plant {name!r}")


def plant_rhs(spec: PlantSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dimension,):
        raise DimensionMismatchError(f"{spec.name} expects a state of length {spec.dimension}, got shape {x.shape}")
    return np.asarray(spec.rhs(x), dtype=float)


def rk4_step(f: Callable, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class Trace:
    """States on the uniform grid ``t0 + k * step``, ``k = 0..len(states)-1``."""

    t0: float
    step: float
    states: np.ndarray

    @property
    def t_end(self) -> float:
        return self.t0 + (len(self.states) - 1) * self.step

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(len(self.states))


def simulate(spec: PlantSpec, x0, horizon: float, step: float, t0: float = 0.0) -> Trace:
    """Integrate the plant with classical RK4 over ``[t0, t0 + horizon]``."""
    if step <= 0 or horizon <= 0:
        raise ValueError("step and horizon must be positive")
    x = np.asarray(x0, dtype=float)
    if x.shape != (spec.dimension,):
        raise DimensionMismatchError(f"x0 must have length {spec.dimension}, got shape {x.shape}")
    n = int(round(horizon / step))
    if n * step < horizon - 1e-9 * step:
        n += 1
    out = np.empty((n + 1, spec.dimension))
    out[0] = x
    f = lambda _t, s: spec.rhs(s)
    for k in range(n):
        # overflow is reported below as NumericalError, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            x = rk4_step(f, t0 + k * step, x, step)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"{spec.name} state became non-finite at t={t0 + (k + 1) * step:g}")
        out[k + 1] = x
    return Trace(t0=float(t0), step=float(step), states=out)


def query(trace: Trace, t: float) -> np.ndarray:
    """State at ``t`` by cubic (4-point) interpolation of the grid values."""
    n = len(trace.states)
    s = (t - trace.t0) / trace.step
    if s < -1e-9 or s > n - 1 + 1e-9:
        raise OutOfTraceError(f"t={t!r} outside trace span [{trace.t0!r}, {trace.t_end!r}]")
    k = int(round(s))
    if abs(s - k) <= 1e-9:
        return trace.states[k].copy()
    if n < 4:
        raise OutOfTraceError("cubic interpolation needs at least 4 grid points")
    i0 = min(max(int(np.floor(s)) - 1, 0), n - 4)
    u = s - i0
    nodes = np.arange(4.0)
    w = np.ones(4)
    for j in range(4):
        for m in range(4):
            if m != j:
                w[j] *= (u - nodes[m]) / (nodes[j] - nodes[m])
    return w @ trace.states[i0:i0 + 4]
