"""End-to-end pipeline: plant, sensor, window fits, continuity solve, node
adaptation and the state estimator, plus CSV/JSON export of the results."""

from __future__ import annotations

import copy
import csv
import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from chebident import __version__
from chebident.cheb_basis import Interval
from chebident.errors import ConfigError
from chebident.estimator import (
    EstimatorState,
    GainDesign,
    advance_window,
    coefficient_error_term,
    feedforward,
    integrate_window,
    solve_gain,
)
from chebident.identifier import CoefficientSet, RegularizerConfig, fit_window, predict_dynamics, solve_theta
from chebident.node_adapt import NodeSelectorState, average_error, update_node_count
from chebident.plant_sim import PlantSpec, Trace, make_plant, plant_rhs, simulate
from chebident.windowing import Sensor, WindowConfig, build_window_record

DEFAULT_CONFIG = Path(__file__).parent / "configs" / "stuart_landau.json"


class WindowError(RuntimeError):
    """A module error raised while processing a particular window."""

    def __init__(self, window: int, cause: Exception):
        super().__init__(f"window {window}: {type(cause).__name__}: {cause}")
        self.window = window
        self.cause = cause


@dataclass
class RunConfig:
    plant: Dict[str, Any]
    window: WindowConfig
    selector: Dict[str, float]
    Z: np.ndarray
    Q: np.ndarray
    horizon: float
    sim_step: float
    x0: np.ndarray
    xhat0: np.ndarray
    eta1: Optional[np.ndarray] = None
    r0: float = 1e-8
    eta0: str = "zero"
    reset_first_window: bool = False
    seed: int = 0
    out_dir: str = "runs/out"
    dynamics_tol: float = 1e-2
    state_tol: float = 0.05

    def __post_init__(self):
        self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.x0 = np.asarray(self.x0, dtype=float)
        self.xhat0 = np.asarray(self.xhat0, dtype=float)
        if self.eta1 is not None:
            self.eta1 = np.atleast_2d(np.asarray(self.eta1, dtype=float))
        self.validate()

    @property
    def n_windows(self) -> int:
        return int(round(self.horizon / self.window.tau))

    @property
    def steps_per_window(self) -> int:
        return int(round(self.window.tau / self.sim_step))

    def plant_spec(self) -> PlantSpec:
        return make_plant(self.plant["name"], self.plant.get("params", {}))

    def validate(self) -> None:
        spec = self.plant_spec()
        n = spec.dimension
        if self.x0.shape != (n,) or self.xhat0.shape != (n,):
            raise ConfigError(f"x0 and xhat0 must have length {n}")
        if self.Z.shape != (n, n) or self.Q.shape != (n, n):
            raise ConfigError(f"Z and Q must be {n}x{n}")
        if not (self.horizon > 0 and self.sim_step > 0):
            raise ConfigError("horizon and sim_step must be positive")
        tau = self.window.tau
        ratio = self.horizon / tau
        if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(f"horizon {self.horizon} is not a whole number of windows of width {tau}")
        spw = tau / self.sim_step
        if abs(spw - round(spw)) > 1e-6:
            raise ConfigError(f"sim_step {self.sim_step} does not divide window width {tau}")
        if self.eta1 is not None and self.eta1.shape != (self.window.M_init + 1, n):
            raise ConfigError(f"eta1 must have shape {(self.window.M_init + 1, n)}, got {self.eta1.shape}")
        if self.eta0 not in ("zero", "warm_start"):
            raise ConfigError(f"eta0 must be 'zero' or 'warm_start', got {self.eta0!r}")
        if self.r0 < 0:
            raise ConfigError("r0 must be nonnegative")
        try:
            self.node_selector()
            solve_gain(self.Z, self.Q)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def node_selector(self) -> NodeSelectorState:
        return NodeSelectorState(
            eps_th=float(self.selector["eps_th"]),
            kappa=float(self.selector["kappa"]),
            gamma1=float(self.selector["gamma1"]),
            gamma2=float(self.selector["gamma2"]),
            M_current=self.window.M_init,
            M_min=self.window.M_min,
            M_max=self.window.M_max,
        )

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "RunConfig":
        if "config" in d and "totals" in d:
            d = d["config"]
        try:
            w = d["window"]
            reg = d.get("regularizer", {})
            tol = d.get("tolerances", {})
            return cls(
                plant=dict(d["plant"]),
                window=WindowConfig(
                    tau=float(w["tau"]),
                    delta_t=float(w["delta_t"]),
                    M_init=int(w["M_init"]),
                    M_min=int(w.get("M_min", 2)),
                    M_max=int(w.get("M_max", 16)),
                ),
                selector=dict(d["selector"]),
                Z=d["gain"]["Z"],
                Q=d["gain"]["Q"],
                horizon=float(d["horizon"]),
                sim_step=float(d["sim_step"]),
                x0=d["x0"],
                xhat0=d["xhat0"],
                eta1=d.get("eta1"),
                r0=float(reg.get("r0", 1e-8)),
                eta0=reg.get("eta0", "zero"),
                reset_first_window=bool(d.get("reset_first_window", False)),
                seed=int(d.get("seed", 0)),
                out_dir=str(d.get("out_dir", "runs/out")),
                dynamics_tol=float(tol.get("dynamics", 1e-2)),
                state_tol=float(tol.get("state", 0.05)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed config: missing or invalid {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        w = self.window
        return {
            "plant": copy.deepcopy(self.plant),
            "window": {"tau": w.tau, "delta_t": w.delta_t, "M_init": w.M_init, "M_min": w.M_min, "M_max": w.M_max},
            "selector": dict(self.selector),
            "gain": {"Z": self.Z.tolist(), "Q": self.Q.tolist()},
            "regularizer": {"r0": self.r0, "eta0": self.eta0},
            "horizon": self.horizon,
            "sim_step": self.sim_step,
            "x0": self.x0.tolist(),
            "xhat0": self.xhat0.tolist(),
            "eta1": None if self.eta1 is None else self.eta1.tolist(),
            "reset_first_window": self.reset_first_window,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "tolerances": {"dynamics": self.dynamics_tol, "state": self.state_tol},
        }


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)


@dataclass
class WindowSummary:
    index: int
    t_start: float
    t_end: float
    M: int
    theta_degree: int
    avg_error: float
    max_node_error: float
    regime: str
    node_samples: int
    eta: np.ndarray
    theta: np.ndarray
    start_error: float
    end_error: float
    theta_term: float


@dataclass
class RunReport:
    config: RunConfig
    windows: List[WindowSummary]
    times: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    F: np.ndarray
    F_hat_theta: np.ndarray
    F_hat_eta: np.ndarray
    total_samples: int
    start_samples: int
    lagged_samples: int
    periodic_equivalent_samples: int
    sensor_reads: int
    dynamics_convergence_time: Optional[float]
    state_convergence_time: Optional[float]
    wall_clock: float = 0.0
    reset_errors: List[float] = field(default_factory=list)

    @property
    def x_tilde(self) -> np.ndarray:
        return self.x - self.x_hat

    @property
    def node_counts(self) -> List[int]:
        return [w.M for w in self.windows]


def _convergence_time(times: np.ndarray, err: np.ndarray, tol: float) -> Optional[float]:
    bad = np.nonzero(err > tol)[0]
    if len(bad) == 0:
        return float(times[0])
    if bad[-1] == len(times) - 1:
        return None
    return float(times[bad[-1] + 1])


def _prior(cfg: RunConfig, M: int, n: int, eta_prev: Optional[CoefficientSet]) -> RegularizerConfig:
    eta0 = np.zeros((M + 1, n))
    if cfg.eta0 == "warm_start" and eta_prev is not None:
        k = min(M, eta_prev.degree) + 1
        eta0[:k] = eta_prev.matrix[:k]
    return RegularizerConfig(R0=cfg.r0 * np.eye(M + 1), eta0=eta0)


def run_experiment(cfg: RunConfig, trace: Optional[Trace] = None) -> RunReport:
    """Run every window in order and collect trajectories and per-window statistics."""
    started = time.perf_counter()
    spec = cfg.plant_spec()
    n = spec.dimension
    if trace is None:
        trace = simulate(spec, cfg.x0, cfg.horizon, cfg.sim_step)
    sensor = Sensor(trace)
    gain = solve_gain(cfg.Z, cfg.Q)
    selector = cfg.node_selector()
    spw = cfg.steps_per_window
    W = cfg.n_windows
    n_grid = W * spw + 1

    x_hat = np.empty((n_grid, n))
    F_theta = np.empty((n_grid, n))
    F_eta = np.empty((n_grid, n))
    windows: List[WindowSummary] = []
    reset_errors: List[float] = []

    eta1 = cfg.eta1 if cfg.eta1 is not None else np.zeros((cfg.window.M_init + 1, n))
    M = cfg.window.M_init
    eta_prev: Optional[CoefficientSet] = None
    iv_prev: Optional[Interval] = None
    state: Optional[EstimatorState] = None

    for w in range(1, W + 1):
        try:
            iv = cfg.window.interval(w)
            record = build_window_record(w, cfg.window, M, sensor)
            start = record.window_start_state
            if w == 1:
                theta = CoefficientSet(1, eta1, "theta")
                x_start = start if cfg.reset_first_window else cfg.xhat0
                state = EstimatorState(
                    x_hat=np.array(x_start, dtype=float), t=iv.a, active_theta=theta,
                    active_interval=iv, gain=gain, anchor_state=np.array(start),
                )
            else:
                theta = solve_theta(eta_prev, iv_prev, iv)
                state = advance_window(state, theta, iv, start)
            start_err = float(np.linalg.norm(start - state.x_hat))
            reset_errors.append(start_err)
            times, xs = integrate_window(state, cfg.sim_step)
            ff = feedforward(state, times)

            eta = fit_window(record, _prior(cfg, M, n, eta_prev))
            report = average_error(record, theta, iv, selector)
            M_next = update_node_count(selector, report)
        except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
            raise WindowError(w, exc) from exc

        lo = (w - 1) * spw
        x_hat[lo:lo + spw] = xs[:spw]
        F_theta[lo:lo + spw] = ff[:spw]
        F_eta[lo:lo + spw] = predict_dynamics(eta, iv, times[:spw])
        if w == W:
            x_hat[-1] = xs[-1]
            F_theta[-1] = ff[-1]
            F_eta[-1] = predict_dynamics(eta, iv, times[-1])
        end_true = trace.states[w * spw]
        windows.append(WindowSummary(
            index=w, t_start=iv.a, t_end=iv.b, M=M, theta_degree=theta.degree,
            avg_error=report.avg_error, max_node_error=report.max_node_error, regime=report.regime,
            node_samples=M + 1, eta=eta.matrix.copy(), theta=theta.matrix.copy(),
            start_error=start_err, end_error=float(np.linalg.norm(end_true - xs[-1])),
            theta_term=coefficient_error_term(theta),
        ))
        eta_prev, iv_prev, M = eta, iv, M_next

    grid_t = cfg.sim_step * np.arange(n_grid)
    x = trace.states[:n_grid]
    F = np.array([plant_rhs(spec, s) for s in x])
    t_dyn = _convergence_time(grid_t, np.linalg.norm(F - F_theta, axis=1), cfg.dynamics_tol)
    t_state = _convergence_time(grid_t, np.linalg.norm(x - x_hat, axis=1), cfg.state_tol)

    return RunReport(
        config=cfg,
        windows=windows,
        times=grid_t,
        x=x,
        x_hat=x_hat,
        F=F,
        F_hat_theta=F_theta,
        F_hat_eta=F_eta,
        total_samples=sensor.count("node"),
        start_samples=sensor.count("start"),
        lagged_samples=sensor.count("lagged"),
        periodic_equivalent_samples=int(round(cfg.horizon / cfg.sim_step)),
        sensor_reads=sensor.count(),
        dynamics_convergence_time=t_dyn,
        state_convergence_time=t_state,
        wall_clock=time.perf_counter() - started,
        reset_errors=reset_errors,
    )


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _write_csv(path: Path, header: List[str], rows) -> None:
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def _trajectory_columns(report: RunReport):
    n = report.x.shape[1]
    cols = [("t", report.times)]
    cols += [(f"x{j + 1}", report.x[:, j]) for j in range(n)]
    cols += [(f"xhat{j + 1}", report.x_hat[:, j]) for j in range(n)]
    for j in range(n):
        cols += [(f"F{j + 1}", report.F[:, j]), (f"Fhat{j + 1}", report.F_hat_theta[:, j])]
    xt = report.x_tilde
    cols += [(f"xtilde{j + 1}", xt[:, j]) for j in range(n)]
    cols += [(f"Fhat_eta{j + 1}", report.F_hat_eta[:, j]) for j in range(n)]
    return cols


def totals(report: RunReport) -> Dict[str, Any]:
    return {
        "windows": len(report.windows),
        "total_samples": report.total_samples,
        "start_samples": report.start_samples,
        "lagged_samples": report.lagged_samples,
        "sensor_reads": report.sensor_reads,
        "periodic_equivalent_samples": report.periodic_equivalent_samples,
        "node_counts": report.node_counts,
        "final_node_count": report.node_counts[-1],
        "dynamics_convergence_time": report.dynamics_convergence_time,
        "state_convergence_time": report.state_convergence_time,
        "max_dynamics_error_after_0.4s": _max_after(report.times, np.linalg.norm(report.F - report.F_hat_theta, axis=1), 0.4),
        "max_state_error_after_0.6s": _max_after(report.times, np.linalg.norm(report.x_tilde, axis=1), 0.6),
    }


def _max_after(t, err, t0) -> float:
    mask = t > t0 + 1e-12
    return float(err[mask].max()) if mask.any() else 0.0


def export_csv(report: RunReport, out_dir, emit_plot_data: bool = False) -> List[Path]:
    """Write ``trajectory.csv``, ``windows.csv`` and ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    cols = _trajectory_columns(report)
    traj = out / "trajectory.csv"
    _write_csv(traj, [c for c, _ in cols], zip(*[v for _, v in cols]))

    win = out / "windows.csv"
    _write_csv(win, ["w", "t_start", "t_end", "M_w", "avg_error", "regime", "samples"],
               ([w.index, w.t_start, w.t_end, w.M, w.avg_error, w.regime, w.node_samples] for w in report.windows))

    manifest = out / "manifest.json"
    doc = {
        "config": report.config.to_dict(),
        "totals": totals(report),
        "versions": {"chebident": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "wall_clock_seconds": report.wall_clock,
    }
    try:
        manifest.write_text(json.dumps(doc, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing {manifest}: {exc}") from exc
    files = [traj, win, manifest]
    if emit_plot_data:
        files += _export_plot_data(report, out)
    return files


def _export_plot_data(report: RunReport, out: Path) -> List[Path]:
    n = report.x.shape[1]
    t = report.times
    paths = []
    p = out / "plot_dynamics.csv"
    _write_csv(p, ["t"] + [f"{k}{j + 1}" for j in range(n) for k in ("F", "Fhat")],
               (np.concatenate([[t[i]], np.ravel(np.column_stack([report.F[i], report.F_hat_theta[i]]))])
                for i in range(len(t))))
    paths.append(p)
    p = out / "plot_node_count.csv"
    _write_csv(p, ["w", "t_start", "M_w"], ([w.index, w.t_start, w.M] for w in report.windows))
    paths.append(p)
    p = out / "plot_states.csv"
    _write_csv(p, ["t"] + [f"x{j + 1}" for j in range(n)] + [f"xhat{j + 1}" for j in range(n)],
               (np.concatenate([[t[i]], report.x[i], report.x_hat[i]]) for i in range(len(t))))
    paths.append(p)
    p = out / "plot_state_error.csv"
    xt = report.x_tilde
    _write_csv(p, ["t"] + [f"xtilde{j + 1}" for j in range(n)],
               (np.concatenate([[t[i]], xt[i]]) for i in range(len(t))))
    paths.append(p)
    return paths


def summarize(report: RunReport) -> str:
    tot = totals(report)

    def _t(v):
        return "never" if v is None else f"{v:.3f} s"

    rows = [
        ("windows", tot["windows"]),
        ("node samples (aperiodic)", tot["total_samples"]),
        ("window-start samples", tot["start_samples"]),
        ("periodic-equivalent samples", tot["periodic_equivalent_samples"]),
        ("sampling reduction", f"{tot['periodic_equivalent_samples'] / max(tot['total_samples'], 1):.1f}x"),
        (f"dynamics converged (<= {report.config.dynamics_tol:g})", _t(tot["dynamics_convergence_time"])),
        (f"state converged (<= {report.config.state_tol:g})", _t(tot["state_convergence_time"])),
        ("final node count", tot["final_node_count"]),
        ("wall clock", f"{report.wall_clock:.2f} s"),
    ]
    width = max(len(k) for k, _ in rows)
    lines = [f"{k:<{width}} : {v}" for k, v in rows]
    return "\n".join(lines)
