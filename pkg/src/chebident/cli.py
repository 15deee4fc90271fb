"""Command-line entry point: ``chebident run | validate | sweep``."""

from __future__ import annotations

import argparse
import copy
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from chebident.errors import ConfigError, NumericalError
from chebident.harness import RunConfig, WindowError, export_csv, load_config, run_experiment, summarize, totals

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _set_path(d: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = d
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            raise ConfigError(f"unknown config parameter {dotted!r}")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config parameter {dotted!r}")
    node[keys[-1]] = value


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    d = cfg.to_dict()
    if getattr(args, "horizon", None) is not None:
        d["horizon"] = args.horizon
    if getattr(args, "eps_th", None) is not None:
        d["selector"]["eps_th"] = args.eps_th
    if getattr(args, "out_dir", None) is not None:
        d["out_dir"] = args.out_dir
    return RunConfig.from_dict(d)


def _run_one(cfg_dict: Dict[str, Any], emit_plot_data: bool = False) -> Dict[str, Any]:
    cfg = RunConfig.from_dict(cfg_dict)
    report = run_experiment(cfg)
    export_csv(report, cfg.out_dir, emit_plot_data=emit_plot_data)
    return {"out_dir": cfg.out_dir, **totals(report)}


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    report = run_experiment(cfg)
    export_csv(report, cfg.out_dir, emit_plot_data=args.emit_plot_data)
    if not args.quiet:
        print(summarize(report))
        print(f"results written to {cfg.out_dir}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"{args.config}: ok ({cfg.n_windows} windows, plant {cfg.plant['name']})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    values = [_parse_value(v.strip()) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values must list at least one value")
    root = Path(args.out_dir or base.out_dir)
    jobs = []
    for v in values:
        d = copy.deepcopy(base.to_dict())
        _set_path(d, args.param, v)
        d["out_dir"] = str(root / f"{args.param}={v}")
        RunConfig.from_dict(d)  # validate before launching workers
        jobs.append(d)
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(_run_one, jobs))
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.json").write_text(json.dumps({"param": args.param, "results": results}, indent=2) + "\n")
    if not args.quiet:
        for v, r in zip(values, results):
            print(f"{args.param}={v}: samples={r['total_samples']} final_M={r['final_node_count']} "
                  f"F-conv={r['dynamics_convergence_time']} x-conv={r['state_convergence_time']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chebident", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--horizon", type=float)
    p.add_argument("--eps-th", type=float)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--emit-plot-data", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="run a config across values of one parameter")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, help="dotted config key, e.g. selector.eps_th")
    p.add_argument("--values", required=True, help="comma-separated JSON values")
    p.add_argument("--out-dir")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WindowError, NumericalError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
