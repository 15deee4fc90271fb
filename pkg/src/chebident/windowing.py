"""Sliding-window schedule, Chebyshev time nodes and the smart-sensor contract."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from chebident.cheb_basis import Interval
from chebident.errors import ConfigError
from chebident.plant_sim import Trace, query


@dataclass(frozen=True)
class WindowConfig:
    tau: float = 0.2
    delta_t: float = 0.001
    M_init: int = 2
    M_min: int = 2
    M_max: int = 16

    def __post_init__(self):
        if not 0 < self.tau < 4:
            raise ConfigError(f"window width must satisfy 0 < tau < 4, got {self.tau}")
        if not 0 < self.delta_t < self.tau:
            raise ConfigError(f"delta_t must satisfy 0 < delta_t < tau, got {self.delta_t}")
        if not 2 <= self.M_min <= self.M_init <= self.M_max:
            raise ConfigError(
                f"node counts must satisfy 2 <= M_min <= M_init <= M_max, "
                f"got {self.M_min}, {self.M_init}, {self.M_max}"
            )

    def interval(self, w: int) -> Interval:
        """Interval of window ``w`` (1-based); endpoints are integer multiples of tau."""
        if w < 1:
            raise ValueError(f"window index must be >= 1, got {w}")
        return Interval((w - 1) * self.tau, w * self.tau)


@dataclass(frozen=True)
class WindowRecord:
    index: int
    interval: Interval
    M: int
    node_times: np.ndarray
    sampled_states: np.ndarray
    sampled_states_lagged: np.ndarray
    derivative_estimates: np.ndarray
    window_start_state: np.ndarray

    def __post_init__(self):
        for arr in (self.node_times, self.sampled_states, self.sampled_states_lagged,
                    self.derivative_estimates, self.window_start_state):
            arr.setflags(write=False)


def time_nodes(iv: Interval, M_w: int) -> np.ndarray:
    """The ``M_w + 1`` Chebyshev sampling instants of a window, ascending."""
    if M_w < 0:
        raise ValueError(f"M_w must be >= 0, got {M_w}")
    k = np.arange(1, M_w + 2)
    t = iv.midpoint + 0.5 * iv.width * np.cos((k - 0.5) * np.pi / (M_w + 1))
    if M_w % 2 == 0:
        t[M_w // 2] = iv.midpoint
    return t[::-1].copy()


def sensor_sample(plant_trace, t: float, delta_t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read ``x(t)`` and ``x(t - delta_t)`` and form the backward difference.

    ``plant_trace`` is either a :class:`Trace` or any callable ``t -> x(t)``.
    """
    read = _reader(plant_trace)
    x = np.asarray(read(t), dtype=float)
    x_lag = np.asarray(read(t - delta_t), dtype=float)
    return x, x_lag, (x - x_lag) / delta_t


def _reader(plant_trace) -> Callable[[float], np.ndarray]:
    if isinstance(plant_trace, Trace):
        return lambda t: query(plant_trace, t)
    return plant_trace


class Sensor:
    """Smart sensor over a continuous-state oracle, counting every read.

    ``noise`` is an optional callable ``(t, x) -> perturbation`` added to each
    read; the default is noise-free.
    """

    def __init__(self, plant_trace, noise: Optional[Callable] = None):
        self._read = _reader(plant_trace)
        self.noise = noise
        self.reads: List[Tuple[str, float]] = []

    def read(self, t: float, kind: str = "node") -> np.ndarray:
        x = np.asarray(self._read(t), dtype=float)
        if self.noise is not None:
            x = x + np.asarray(self.noise(t, x), dtype=float)
        self.reads.append((kind, float(t)))
        return x

    def count(self, kind: Optional[str] = None) -> int:
        if kind is None:
            return len(self.reads)
        return sum(1 for k, _ in self.reads if k == kind)


def build_window_record(w: int, schedule: WindowConfig, M_w: int, sensor: Sensor) -> WindowRecord:
    """Sample window ``w`` at its ``M_w + 1`` nodes plus the window-start instant."""
    iv = schedule.interval(w)
    nodes = time_nodes(iv, M_w)
    start = sensor.read(iv.a, "start")
    states, lagged = [], []
    for t in nodes:
        states.append(sensor.read(t, "node"))
        lagged.append(sensor.read(t - schedule.delta_t, "lagged"))
    states = np.array(states)
    lagged = np.array(lagged)
    return WindowRecord(
        index=w,
        interval=iv,
        M=M_w,
        node_times=nodes,
        sampled_states=states,
        sampled_states_lagged=lagged,
        derivative_estimates=(states - lagged) / schedule.delta_t,
        window_start_state=start,
    )
