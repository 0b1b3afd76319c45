"""Experiment and benchmark runners behind the command line interface.

A flat INI config drives both runners; see the README for the full key
reference.  Outputs are schema-stable CSV files (fixed column order, header
row, '.' decimals, LF line endings) plus a ``meta.json`` echoing the config,
the data generator parameters and the library version, so a results
directory is self-describing.  All non-timing outputs are fully determined
by the config and seed.
"""

from __future__ import annotations

import configparser
import csv
import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import max_relevance_policy, nsw_greedy_policy
from .core import ProblemShape, SolverConfig, uniform_policy
from .data import exposure_model, generate_synthetic, load_sparse_relevance
from .metrics import items_better_off, items_worse_off, mean_max_envy, user_utility
from .solver import impact, nsw_objective, solve_fair_ranking

METHODS = ("uniform", "max_rele", "nsw_greedy", "nsw_algo1")

METRICS_COLUMNS = (
    "method",
    "trial",
    "seed",
    "nsw_objective",
    "user_utility",
    "mean_max_envy",
    "items_better_off",
    "items_worse_off",
)
TIMINGS_COLUMNS = ("method", "num_users", "num_items", "m", "seconds", "trial")


class ConfigError(ValueError):
    """The experiment config file is missing, malformed or inconsistent."""


def load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    return parser


def _get(cfg, section, key, cast, default):
    try:
        raw = cfg.get(section, key, fallback=None)
        if raw is None:
            return default
        if cast is bool:
            return cfg.getboolean(section, key)
        return cast(raw)
    except (ValueError, configparser.Error) as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc


def _solver_config(cfg, seed: int) -> SolverConfig:
    return SolverConfig(
        epsilon=_get(cfg, "solver", "epsilon", float, 0.1),
        sinkhorn_max_iters=_get(cfg, "solver", "sinkhorn_max_iters", int, 500),
        sinkhorn_tol=_get(cfg, "solver", "sinkhorn_tol", float, 1e-6),
        outer_max_iters=_get(cfg, "solver", "outer_max_iters", int, 300),
        grad_threshold=_get(cfg, "solver", "grad_threshold", float, 1e-3),
        adam_lr=_get(cfg, "solver", "adam_lr", float, 0.05),
        adam_beta1=_get(cfg, "solver", "adam_beta1", float, 0.9),
        adam_beta2=_get(cfg, "solver", "adam_beta2", float, 0.999),
        adam_eps=_get(cfg, "solver", "adam_eps", float, 1e-8),
        seed=seed,
        warm_start=_get(cfg, "solver", "warm_start", bool, True),
    )


def _methods(cfg) -> list[str]:
    raw = _get(cfg, "methods", "methods", str, ", ".join(METHODS))
    names = [tok.strip() for tok in raw.split(",") if tok.strip()]
    for name in names:
        if name not in METHODS:
            raise ConfigError(f"unknown method {name!r}, expected one of {METHODS}")
    if not names:
        raise ConfigError("no methods configured")
    return names


def _exposure(cfg, num_positions: int):
    kind = _get(cfg, "data", "exposure", str, "log_decay")
    p = _get(cfg, "data", "geometric_p", float, 0.5)
    return exposure_model(num_positions, kind=kind, p=p if kind == "geometric" else None)


def _build_instance(cfg, seed: int):
    source = _get(cfg, "data", "source", str, "synthetic")
    num_positions = _get(cfg, "data", "num_positions", int, 11)
    if source == "synthetic":
        num_users = _get(cfg, "data", "num_users", int, 100)
        num_items = _get(cfg, "data", "num_items", int, 50)
        skew = _get(cfg, "data", "skew", float, 1.0)
        rel = generate_synthetic(num_users, num_items, seed=seed, skew=skew)
    elif source == "sparse":
        path = _get(cfg, "data", "path", str, None)
        if path is None:
            raise ConfigError("[data] path is required when source = sparse")
        rel = load_sparse_relevance(path)
    else:
        raise ConfigError(f"unknown data source {source!r}")
    shape = ProblemShape(rel.num_users, rel.num_items, num_positions)
    return rel, _exposure(cfg, num_positions), shape


def _compute_policy(method: str, rel, exposure, shape, solver_cfg):
    if method == "uniform":
        return uniform_policy(shape)
    if method == "max_rele":
        return max_relevance_policy(rel, shape)
    if method == "nsw_greedy":
        return nsw_greedy_policy(rel, exposure, shape)
    if method == "nsw_algo1":
        policy, _ = solve_fair_ranking(rel, exposure, shape, solver_cfg)
        return policy
    raise ConfigError(f"unknown method {method!r}")


def _welfare_or_neginf(policy, rel, exposure) -> float:
    # deterministic baselines can starve an item entirely (zero impact),
    # which makes the product welfare zero and its log -inf
    imp = impact(policy, rel, exposure)
    if imp.min() <= 0.0:
        return float("-inf")
    return nsw_objective(imp)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _write_meta(path: Path, cfg, mode: str, data_meta: dict, threads):
    meta = {
        "version": __version__,
        "mode": mode,
        "config": {section: dict(cfg.items(section)) for section in cfg.sections()},
        "data": data_meta,
        "threads": threads,
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(config_path, out_dir=None, base_seed=None, threads=None) -> list[dict]:
    """Evaluate every configured method over seeded trials.

    Writes ``metrics.csv`` (one row per method and trial) and ``meta.json``
    into the output directory and returns the per-method averages.
    """
    cfg = load_config(config_path)
    methods = _methods(cfg)
    trials = _get(cfg, "experiment", "trials", int, 5)
    if base_seed is None:
        base_seed = _get(cfg, "experiment", "base_seed", int, 0)
    out = Path(out_dir if out_dir is not None else _get(cfg, "output", "dir", str, "results"))
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    data_meta = {}
    for trial in range(trials):
        seed = base_seed + trial
        rel, exposure, shape = _build_instance(cfg, seed)
        if trial == 0:
            data_meta = dict(rel.meta)
        solver_cfg = _solver_config(cfg, seed)
        for method in methods:
            policy = _compute_policy(method, rel, exposure, shape, solver_cfg)
            rows.append(
                {
                    "method": method,
                    "trial": trial,
                    "seed": seed,
                    "nsw_objective": _welfare_or_neginf(policy, rel, exposure),
                    "user_utility": user_utility(policy, rel, exposure),
                    "mean_max_envy": mean_max_envy(policy, rel, exposure),
                    "items_better_off": items_better_off(policy, rel, exposure),
                    "items_worse_off": items_worse_off(policy, rel, exposure),
                }
            )
    rows.sort(key=lambda r: (methods.index(r["method"]), r["trial"]))
    _write_csv(out / "metrics.csv", METRICS_COLUMNS, rows)
    _write_meta(out / "meta.json", cfg, "experiment", data_meta, threads)

    value_columns = METRICS_COLUMNS[3:]
    averages = []
    for method in methods:
        own = [r for r in rows if r["method"] == method]
        averages.append(
            {"method": method, "trials": len(own)}
            | {c: float(np.mean([r[c] for r in own])) for c in value_columns}
        )
    return averages


def run_benchmark(config_path, out_dir=None, base_seed=None, threads=None) -> list[dict]:
    """Time every configured method over a grid of instance sizes.

    Writes ``timings.csv`` (one row per method, size and trial) and
    ``meta.json``.  Only policy construction is timed.
    """
    cfg = load_config(config_path)
    methods = _methods(cfg)
    trials = _get(cfg, "benchmark", "trials", int, 1)
    if base_seed is None:
        base_seed = _get(cfg, "experiment", "base_seed", int, 0)
    out = Path(out_dir if out_dir is not None else _get(cfg, "output", "dir", str, "results"))
    out.mkdir(parents=True, exist_ok=True)

    users_grid = _int_list(cfg, "benchmark", "num_users", default="250")
    items_grid = _int_list(cfg, "benchmark", "num_items", default="250")
    num_positions = _get(cfg, "data", "num_positions", int, 11)
    skew = _get(cfg, "data", "skew", float, 1.0)

    rows = []
    data_meta = {}
    for num_users in users_grid:
        for num_items in items_grid:
            if num_items < num_positions:
                raise ConfigError(
                    f"num_items={num_items} is smaller than num_positions={num_positions}"
                )
            for trial in range(trials):
                seed = base_seed + trial
                rel = generate_synthetic(num_users, num_items, seed=seed, skew=skew)
                if not data_meta:
                    data_meta = dict(rel.meta)
                exposure = _exposure(cfg, num_positions)
                shape = ProblemShape(num_users, num_items, num_positions)
                solver_cfg = _solver_config(cfg, seed)
                for method in methods:
                    tic = time.perf_counter()
                    _compute_policy(method, rel, exposure, shape, solver_cfg)
                    rows.append(
                        {
                            "method": method,
                            "num_users": num_users,
                            "num_items": num_items,
                            "m": num_positions,
                            "seconds": time.perf_counter() - tic,
                            "trial": trial,
                        }
                    )
    _write_csv(out / "timings.csv", TIMINGS_COLUMNS, rows)
    _write_meta(out / "meta.json", cfg, "benchmark", data_meta, threads)
    return rows


def _int_list(cfg, section, key, default):
    raw = _get(cfg, section, key, str, default)
    try:
        values = [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc
    if not values:
        raise ConfigError(f"[{section}] {key} must list at least one size")
    return values
