"""Experiment harness: ``heavyis {ruin,barrier,fluid,report}``.

Each run reads an optional YAML/JSON config, applies command-line overrides,
validates the parameters and threshold choice, and writes one CSV row per grid
point. Exit status 2 flags an invalid config and 3 an inadmissible threshold.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from .estimator_core import EstimationReport, MixtureConfig, estimate
from .heavy_tails import TailDistribution
from .skorokhod import FluidNetwork

logger = logging.getLogger(__name__)

APPS = ("ruin", "barrier", "fluid")
EXIT_OK, EXIT_CONFIG, EXIT_GAMMA = 0, 2, 3

CSV_COLUMNS = (
    "app",
    "n",
    "tail_params",
    "N",
    "seed",
    "estimate",
    "std_err",
    "ci_radius_95",
    "precision_ratio",
    "p_aux",
    "mean_rejection_iters",
    "wall_time_s",
)

FLUID_NETWORK = {
    "Q": [[0.0, 0.1, 0.8], [0.1, 0.0, 0.8], [0.0, 0.0, 0.0]],
    "r": [1.0, 1.0, 2.5],
    "rho": [0.8, 0.8, 1.0],
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "ruin": {
        "n_grid": [1100, 1400, 1700, 2000, 2300, 2600],
        "samples": 200_000,
        "w": 0.05,
        "gamma": 0.13,
        "a": 2.0,
        "b": 1.2,
        "c": 0.05,
        "beta": 1.45,
    },
    "barrier": {
        "n_grid": [250, 500, 750, 1000, 1250, 1500],
        "samples": 200_000,
        "w": 0.05,
        "gamma": {"minus": 0.75, "plus": 0.75},
        "a": 2.0,
        "b": 1.5,
        "c": 0.15,
        "alpha": 2.0,
        "beta": 1.5,
    },
    "fluid": {
        "n_grid": [1200, 1600, 2000, 2400],
        "samples": 20_000,
        "w": 0.05,
        "gamma": [0.012, 0.012, 0.045],
        "a": 0.05,
        "c": [0, 0, 1],
        "beta": [1.5, 1.5, 2.2],
        "network": FLUID_NETWORK,
    },
}

KNOWN_KEYS = {"app", "n_grid", "samples", "seed", "w", "gamma", "a", "b", "c", "alpha", "beta", "network", "workers", "out"}


class ConfigError(ValueError):
    """Config that cannot describe a valid experiment."""


class GammaError(ValueError):
    """Threshold choice that fails the admissibility rule."""


@dataclass
class ExperimentConfig:
    app: str
    n_grid: list[int]
    samples: int
    seed: int
    w: float
    gamma: Any
    params: dict[str, Any] = field(default_factory=dict)
    workers: int | None = None
    out: str | None = None


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a YAML or JSON mapping (JSON is a subset of YAML)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return data


def _positive_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value) or value < 1:
        raise ConfigError(f"{name} must be a positive integer")
    return int(value)


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number")
    return float(value)


def _numbers(value: Any, name: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{name} must be a non-empty list of numbers")
    return [_number(v, name) for v in value]


def build_config(raw: dict[str, Any], app: str | None = None, **overrides: Any) -> ExperimentConfig:
    """Merge defaults, file contents and overrides, then validate types and ranges."""
    unknown = set(raw) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    app = app or raw.get("app")
    if app not in APPS:
        raise ConfigError(f"app must be one of {', '.join(APPS)}")
    if raw.get("app") not in (None, app):
        raise ConfigError(f"config is for app {raw['app']!r}, not {app!r}")
    merged = {**DEFAULTS[app], "seed": 0, **{k: v for k, v in raw.items() if k != "app"}}
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    if "n" in merged:
        merged["n_grid"] = [merged.pop("n")]
    n_grid = merged["n_grid"]
    if isinstance(n_grid, (int, float)):
        n_grid = [n_grid]
    if not isinstance(n_grid, (list, tuple)) or not n_grid:
        raise ConfigError("n_grid must be a non-empty list")
    seed = merged["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    w = _number(merged["w"], "w")
    if not 0.0 < w < 1.0:
        raise ConfigError("w must lie in (0, 1)")
    workers = merged.get("workers")
    cfg = ExperimentConfig(
        app=app,
        n_grid=[_positive_int(n, "n") for n in n_grid],
        samples=_positive_int(merged["samples"], "samples"),
        seed=seed,
        w=w,
        gamma=merged["gamma"],
        params={k: merged[k] for k in ("a", "b", "c", "alpha", "beta", "network") if k in merged},
        workers=None if workers is None else _positive_int(workers, "workers"),
        out=merged.get("out"),
    )
    build_app(cfg)  # surfaces parameter errors before any sampling
    return cfg


# app construction ------------------------------------------------------------


def _ruin(cfg: ExperimentConfig):
    from .apps import ruin

    p = cfg.params
    try:
        dist = TailDistribution.centered_pareto(_number(p["beta"], "beta"))
        spec = ruin.RuinSpec(_number(p["a"], "a"), _number(p["b"], "b"), _number(p["c"], "c"), dist)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    gamma = _number(cfg.gamma, "gamma")
    if not ruin.ruin_gamma_admissible(spec, gamma):
        raise GammaError(f"gamma={gamma} is not admissible for a={spec.a}, b={spec.b}")
    return (lambda n: ruin.RuinProblem(spec, n, gamma)), f"beta={dist.beta:g}"


def _barrier(cfg: ExperimentConfig):
    from .apps import barrier

    p = cfg.params
    g = cfg.gamma
    if isinstance(g, dict):
        if set(g) != {"minus", "plus"}:
            raise ConfigError("barrier gamma needs keys minus and plus")
        g_minus, g_plus = _number(g["minus"], "gamma.minus"), _number(g["plus"], "gamma.plus")
    elif isinstance(g, (list, tuple)) and len(g) == 2:
        g_minus, g_plus = _numbers(g, "gamma")
    else:
        raise ConfigError("barrier gamma must be {minus, plus} or a pair")
    try:
        dist = TailDistribution.two_sided(
            alpha=_number(p["alpha"], "alpha"), beta=_number(p["beta"], "beta"), p1=1 / 3, p2=1 / 3
        )
        spec = barrier.BarrierSpec(
            _number(p["a"], "a"), _number(p["b"], "b"), _number(p["c"], "c"), dist, g_minus, g_plus
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not barrier.barrier_gamma_admissible(spec):
        raise GammaError(f"gamma=({g_minus}, {g_plus}) is not admissible")
    return (lambda n: barrier.BarrierProblem(spec, n)), f"alpha={dist.alpha:g};beta={dist.beta:g}"


def _fluid(cfg: ExperimentConfig):
    from .apps import fluid

    p = cfg.params
    net_raw = p.get("network")
    if not isinstance(net_raw, dict) or set(net_raw) - {"Q", "r", "rho"}:
        raise ConfigError("network must be a mapping with keys Q, r, rho")
    net_raw = {**FLUID_NETWORK, **net_raw}
    try:
        net = FluidNetwork(
            Q=np.array(net_raw["Q"], dtype=float),
            r=np.array(_numbers(net_raw["r"], "network.r")),
            rho=np.array(_numbers(net_raw["rho"], "network.rho")),
        )
        spec = fluid.FluidSpec(
            net,
            tuple(int(x) for x in _numbers(p["c"], "c")),
            _number(p["a"], "a"),
            tuple(_numbers(p["beta"], "beta")),
            tuple(_numbers(cfg.gamma, "gamma")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not fluid.fluid_gamma_admissible(spec):
        raise GammaError(f"gamma={list(spec.gammas)} is not admissible")
    return (lambda n: fluid.FluidProblem(spec, n)), "beta=" + "/".join(f"{b:g}" for b in spec.betas)


def build_app(cfg: ExperimentConfig):
    """``(problem_factory, tail_params_label)`` for the configured app."""
    return {"ruin": _ruin, "barrier": _barrier, "fluid": _fluid}[cfg.app](cfg)


# running ---------------------------------------------------------------------


def grid_seed(seed: int, n: int) -> int:
    """Independent stream key for one grid point."""
    return int(np.random.SeedSequence([seed, n]).generate_state(1, np.uint64)[0])


def report_row(app: str, n: int, tail: str, N: int, seed: int, rep: EstimationReport) -> dict[str, Any]:
    return {
        "app": app,
        "n": n,
        "tail_params": tail,
        "N": N,
        "seed": seed,
        "estimate": rep.estimate,
        "std_err": rep.std_err,
        "ci_radius_95": rep.ci_radius_95,
        "precision_ratio": rep.precision_ratio,
        "p_aux": rep.p_aux,
        "mean_rejection_iters": rep.mean_rejection_iters,
        "wall_time_s": rep.wall_time_s,
    }


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[dict[str, Any]]:
    """One row per grid point; identical for any worker count apart from wall time."""
    factory, tail = build_app(cfg)
    rows = []
    for n in cfg.n_grid:
        problem = factory(n)
        mix = MixtureConfig(w=cfg.w, n=n, N=cfg.samples, seed=grid_seed(cfg.seed, n))
        rep = estimate(problem, mix, workers=workers if workers is not None else cfg.workers)
        rows.append(report_row(cfg.app, n, tail, cfg.samples, cfg.seed, rep))
    return rows


def _fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def format_csv(rows: Iterable[dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_csv(path: str | Path) -> list[dict[str, Any]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: missing columns {', '.join(sorted(missing))}")
        rows = []
        for r in reader:
            rows.append(
                {
                    **r,
                    "n": int(r["n"]),
                    "N": int(r["N"]),
                    "estimate": float(r["estimate"]),
                    "precision_ratio": float(r["precision_ratio"]),
                }
            )
        return rows


def table_report(rows: Sequence[dict[str, Any]]) -> str:
    """Estimate/PR table: one block per (app, tail parameters), one column per n."""
    if not rows:
        return ""
    groups: dict[tuple[str, str], dict[int, dict[str, Any]]] = {}
    for r in rows:
        groups.setdefault((r["app"], r["tail_params"]), {})[int(r["n"])] = r
    label_width = max(len(f"{app} {tail}") for app, tail in groups)
    lines = []
    for (app, tail), cells in groups.items():
        ns = sorted(cells)
        header = f"{'Est / PR':<{label_width}}" + "".join(f"  {'n=' + str(n):>10}" for n in ns)
        est = f"{app + ' ' + tail:<{label_width}}" + "".join(
            f"  {cells[n]['estimate']:>10.3e}" for n in ns
        )
        pr = f"{'':<{label_width}}" + "".join(f"  {cells[n]['precision_ratio']:>10.3f}" for n in ns)
        lines += [header, est, pr, ""]
    return "\n".join(lines).rstrip("\n") + "\n"


# entry point -----------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heavyis", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for app in APPS:
        p = sub.add_parser(app, help=f"run the {app} experiment")
        p.add_argument("--config", help="YAML or JSON experiment config")
        p.add_argument("--n", type=int, help="single n instead of the configured grid")
        p.add_argument("--samples", type=int, help="replications per grid point")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--workers", type=int, help="worker processes (default from HEAVYIS_WORKERS or 1)")
        p.add_argument("--out", help="CSV output path (default stdout)")
        p.add_argument("--table", action="store_true", help="also print the Est/PR table to stderr")
    rep = sub.add_parser("report", help="format result CSVs as an Est/PR table")
    rep.add_argument("csv", nargs="+", help="CSV files written by the app commands")
    rep.add_argument("--out", help="write the table here instead of stdout")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            rows = [r for path in args.csv for r in read_csv(path)]
            _emit(table_report(rows), args.out)
            return EXIT_OK
        raw = load_config_file(args.config) if args.config else {}
        cfg = build_config(
            raw, app=args.command, n=args.n, samples=args.samples, seed=args.seed, out=args.out
        )
        rows = run_experiment(cfg, workers=args.workers)
    except ConfigError as exc:
        print(f"heavyis: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GammaError as exc:
        print(f"heavyis: inadmissible thresholds: {exc}", file=sys.stderr)
        return EXIT_GAMMA
    except OSError as exc:
        print(f"heavyis: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(format_csv(rows), cfg.out)
    if args.table:
        sys.stderr.write(table_report(rows))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
