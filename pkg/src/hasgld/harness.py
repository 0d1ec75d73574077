"""Config-driven experiment grid: samplers x step sizes x seeds.

Every cell runs one chain, computes its metrics and writes

* ``cells/<cell>.csv`` (+ ``.csv.json`` sidecar): the retained samples,
* ``cells/<cell>.metrics.json``: the :class:`~hasgld.diagnostics.MetricReport`,
* ``cells/<cell>.curve.csv`` (regression only): error of the running
  posterior mean against iteration,
* ``cells/<cell>.posterior_mean.csv`` (regression and mlp),

and one row of ``summary.csv``.  A diverged cell is recorded with infinite
error metrics and does not stop the grid.
"""
import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .diagnostics import MetricReport, act, cov_error, mse_mae
from .io import read_json, write_json, write_trace
from .sa import OmegaSchedule
from .samplers import METHODS, DivergenceError, SamplerConfig, run_chain
from .targets import (
    MlpTarget,
    RegressionTarget,
    SpikeSlabHyper,
    correlated_gaussian2d,
    make_mlp_data,
    make_regression_data,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "EXPERIMENTS",
    "SUMMARY_COLUMNS",
    "bundled_config",
    "load_config",
    "parse_config",
    "build_target",
    "run_cell",
    "run_experiment",
    "read_summary",
    "report",
]

EXPERIMENTS = ("gaussian2d", "regression", "mlp")
SUMMARY_COLUMNS = (
    "experiment", "sampler", "step_size", "seed", "cov_error", "act_max",
    "mse", "mae", "sparsity", "wall_time", "status",
)
CONFIG_DIR = Path(__file__).with_name("configs")

TARGET_DEFAULTS = {
    "gaussian2d": {"sigma_x": 0.12, "sigma_y": 1.0, "corr": -0.95, "mu": [0.0, 0.0]},
    "regression": {
        "n": 100, "p": 200, "data_seed": 0, "noise_var": 3.0, "n_test": 50,
        "hyper": {"v0": 0.1, "v1": 100.0, "nu": 1.0, "lam": 1.0, "a": 1.0, "b": None,
                  "delta": 0.5, "sigma2": 1.0},
        # null means: reuse the sampler's omega schedule
        "hyper_omega": None,
    },
    "mlp": {
        "n": 200, "n_test": 200, "data_seed": 0, "noise_sd": 0.1, "widths": [2, 32, 1],
        "prior_precision": 1.0, "noise_var": 0.01,
    },
}


class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    experiment: str
    samplers: list
    step_sizes: list
    seeds: list
    sampler: dict = field(default_factory=dict)
    sampler_overrides: dict = field(default_factory=dict)
    target: dict = field(default_factory=dict)
    output_dir: str = "runs"
    workers: int = 1
    # retained-sample stride for the regression error curve
    curve_every: int = 10

    def sampler_config(self, method, step_size, seed):
        d = dict(self.sampler)
        d.update(self.sampler_overrides.get(method, {}))
        d.update(method=method, step_size=step_size, seed=seed)
        return SamplerConfig.from_dict(d)

    def cells(self, seed_offset=0):
        return [
            (method, i, float(eps), int(seed) + seed_offset)
            for method in self.samplers
            for i, eps in enumerate(self.step_sizes)
            for seed in self.seeds
        ]

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _merge(defaults, given, where):
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    out = dict(defaults)
    for key, val in given.items():
        if isinstance(defaults[key], dict) and isinstance(val, dict):
            out[key] = _merge(defaults[key], val, f"{where}.{key}")
        else:
            out[key] = val
    return out


def parse_config(raw, where="config"):
    """Build and validate an :class:`ExperimentConfig` from a parsed JSON object.

    Omitted target fields take the values in ``TARGET_DEFAULTS``; omitted
    sampler fields take the :class:`SamplerConfig` defaults.
    """
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: top level must be an object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    for key in ("experiment", "samplers", "step_sizes", "seeds"):
        if key not in raw:
            raise ConfigError(f"{where}: missing required field {key!r}")
    exp = raw["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"{where}.experiment: must be one of {EXPERIMENTS}, got {exp!r}")
    seeds = raw["seeds"]
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    cfg = ExperimentConfig(
        experiment=exp,
        samplers=list(raw["samplers"]),
        step_sizes=[float(e) for e in raw["step_sizes"]],
        seeds=[int(s) for s in seeds],
        sampler=dict(raw.get("sampler", {})),
        sampler_overrides={k: dict(v) for k, v in raw.get("sampler_overrides", {}).items()},
        target=_merge(TARGET_DEFAULTS[exp], raw.get("target", {}), f"{where}.target"),
        output_dir=raw.get("output_dir", f"runs/{exp}"),
        workers=int(raw.get("workers", 1)),
        curve_every=int(raw.get("curve_every", 10)),
    )
    validate_config(cfg, where)
    return cfg


def validate_config(cfg, where="config"):
    problems = []
    bad = [m for m in cfg.samplers if m not in METHODS]
    if bad or not cfg.samplers:
        problems.append(f"samplers: need a nonempty subset of {METHODS}, got {cfg.samplers}")
    extra = set(cfg.sampler_overrides) - set(METHODS)
    if extra:
        problems.append(f"sampler_overrides: unknown sampler(s) {sorted(extra)}")
    if not cfg.step_sizes or any(not (e > 0 and math.isfinite(e)) for e in cfg.step_sizes):
        problems.append(f"step_sizes: need positive finite values, got {cfg.step_sizes}")
    if not cfg.seeds:
        problems.append("seeds: need at least one seed")
    if cfg.workers < 1:
        problems.append("workers must be >= 1")
    if cfg.curve_every < 1:
        problems.append("curve_every must be >= 1")
    if problems:
        raise ConfigError(f"{where}: " + "; ".join(problems))
    for method in cfg.samplers:
        try:
            cfg.sampler_config(method, cfg.step_sizes[0], cfg.seeds[0]).validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.sampler ({method}): {exc}") from None
    try:
        target = build_target(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.target: {exc}") from None
    for method in cfg.samplers:
        sc = cfg.sampler_config(method, cfg.step_sizes[0], cfg.seeds[0])
        for it, _ in sc.pruning:
            if not 0 < it <= sc.iterations:
                raise ConfigError(f"{where}.sampler: pruning iteration {it} outside 1..{sc.iterations}")
        if sc.batch_size is not None and (target.n_data is None or sc.batch_size > target.n_data):
            raise ConfigError(f"{where}.sampler: batch_size {sc.batch_size} incompatible with the target")
    return cfg


def load_config(path):
    """Read, default-fill and validate a JSON experiment config.

    Raises :class:`ConfigError` with the line and column of a JSON syntax
    error, or the dotted field path of a validation failure.
    """
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno <= len(text.splitlines()) else ""
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line.strip()}") from None
    return parse_config(raw, where=path.name)


def bundled_config(name):
    """Path of a config shipped with the package (``gaussian2d``, ``regression``, ``mlp``)."""
    path = CONFIG_DIR / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"no bundled config {name!r}; have {sorted(p.stem for p in CONFIG_DIR.glob('*.json'))}")
    return path


def build_target(cfg, sampler_omega=None):
    t = cfg.target
    if cfg.experiment == "gaussian2d":
        return correlated_gaussian2d(t["sigma_x"], t["sigma_y"], t["corr"], tuple(t["mu"]))
    if cfg.experiment == "regression":
        data = make_regression_data(t["n"], t["p"], t["data_seed"], t["noise_var"], t["n_test"])
        hyper_kw = {k: v for k, v in t["hyper"].items() if v is not None}
        hyper = SpikeSlabHyper.default(t["p"], **hyper_kw)
        if t["hyper_omega"] is not None:
            sched = OmegaSchedule(**t["hyper_omega"])
        else:
            sched = sampler_omega or cfg.sampler_config(cfg.samplers[0], cfg.step_sizes[0], 0).omega
        return RegressionTarget(data, hyper, sched)
    data = make_mlp_data(t["n"], t["n_test"], t["data_seed"], t["noise_sd"])
    return MlpTarget(data, tuple(t["widths"]), t["prior_precision"], t["noise_var"])


def cell_name(method, eps_index, seed):
    return f"{method}_eps{eps_index}_seed{seed}"


def _act_max(samples):
    vals = []
    for j in range(samples.shape[1]):
        col = samples[:, j]
        if col.size >= 10 and np.ptp(col) > 0:
            vals.append(act(col))
    return vals, (max(vals) if vals else None)


def _metrics(cfg, target, trace):
    rep = MetricReport(n_samples=int(trace.samples.shape[0]))
    if cfg.experiment == "gaussian2d":
        rep.cov_error = cov_error(trace.samples, target.cov)
        rep.act, rep.act_max = _act_max(trace.samples)
    elif cfg.experiment == "regression":
        rep.mse, rep.mae = mse_mae(target.predict(trace.posterior_mean), target.data.y_test)
        rep.n_test = int(target.data.y_test.size)
        rep.act, rep.act_max = _act_max(trace.samples[:, :2])
    else:
        pred = np.mean([target.predict(s) for s in trace.samples], axis=0)
        rep.mse, rep.mae = mse_mae(pred, target.data.Y_test)
        rep.n_test = int(target.data.Y_test.shape[0])
    return rep


def _failed_metrics(cfg):
    inf = float("inf")
    rep = MetricReport()
    if cfg.experiment == "gaussian2d":
        rep.cov_error, rep.act_max = inf, inf
    else:
        rep.mse, rep.mae = inf, inf
    return rep


def _write_curve(path, cfg, target, trace):
    # running mean of the retained samples, evaluated every curve_every samples
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mse", "mae"])
        csum = np.cumsum(trace.samples, axis=0)
        for i in range(cfg.curve_every - 1, len(trace.samples), cfg.curve_every):
            mse, mae = mse_mae(target.predict(csum[i] / (i + 1)), target.data.y_test)
            w.writerow([int(trace.steps[i]), repr(mse), repr(mae)])


def run_cell(cfg, cell, out_dir):
    """Run one grid cell, write its files and return its summary row (a dict)."""
    method, eps_index, eps, seed = cell
    sc = cfg.sampler_config(method, eps, seed)
    target = build_target(cfg, sc.omega)
    name = cell_name(method, eps_index, seed)
    cells = Path(out_dir) / "cells"
    status = "ok"
    try:
        trace = run_chain(sc, target)
        metrics = _metrics(cfg, target, trace)
    except DivergenceError as exc:
        logger.warning("cell %s diverged: %s", name, exc)
        trace, metrics, status = exc.trace, _failed_metrics(cfg), "diverged"
    write_trace(cells / f"{name}.csv", trace)
    write_json(cells / f"{name}.metrics.json", {**metrics.to_dict(), "status": status})
    if cfg.experiment in ("regression", "mlp") and status == "ok":
        np.savetxt(cells / f"{name}.posterior_mean.csv", trace.posterior_mean, fmt="%.17g")
    if cfg.experiment == "regression" and status == "ok":
        _write_curve(cells / f"{name}.curve.csv", cfg, target, trace)
    return {
        "experiment": cfg.experiment, "sampler": method, "step_size": eps, "seed": seed,
        "cov_error": metrics.cov_error, "act_max": metrics.act_max, "mse": metrics.mse,
        "mae": metrics.mae, "sparsity": trace.sparsity, "wall_time": trace.wall_time,
        "status": status,
    }


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_cell_args(args):
    return run_cell(*args)


def run_experiment(cfg, out_dir=None, workers=None, seed_offset=0):
    """Run the whole grid and write ``summary.csv``; return ``(exit_status, rows)``.

    The exit status is nonzero only when every cell diverged.
    """
    out = Path(out_dir or cfg.output_dir)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", {**cfg.to_dict(), "seed_offset": seed_offset})
    cells = cfg.cells(seed_offset)
    workers = workers or cfg.workers
    jobs = [(cfg, c, out) for c in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, os.cpu_count() or 1)) as ex:
            rows = list(ex.map(_run_cell_args, jobs))
    else:
        rows = [run_cell(*j) for j in jobs]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    failed = sum(r["status"] != "ok" for r in rows)
    logger.info("%d cells, %d diverged, output in %s", len(rows), failed, out)
    return (1 if failed == len(rows) else 0), rows


def read_summary(out_dir):
    path = Path(out_dir) / "summary.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found (run the experiment first)")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(s):
    return float(s) if s not in ("", None) else float("nan")


def report(out_dir):
    """Per-cell summary table plus medians per (sampler, step size), as text."""
    rows = read_summary(out_dir)
    metrics = ("cov_error", "act_max", "mse", "mae", "sparsity")
    head = f"{'sampler':<10} {'step_size':>10} {'n':>3} {'ok':>3} " + " ".join(f"{m:>10}" for m in metrics)
    lines = [head, "-" * len(head)]
    groups = {}
    for r in rows:
        groups.setdefault((r["sampler"], float(r["step_size"])), []).append(r)
    for (sampler, eps), rs in groups.items():
        ok = sum(r["status"] == "ok" for r in rs)
        meds = []
        for m in metrics:
            vals = np.array([_num(r[m]) for r in rs])
            vals = vals[~np.isnan(vals)]
            meds.append(f"{np.median(vals):>10.4g}" if vals.size else f"{'-':>10}")
        lines.append(f"{sampler:<10} {eps:>10.4g} {len(rs):>3} {ok:>3} " + " ".join(meds))
    lines.append(f"(medians over seeds; {len(rows)} cells from {Path(out_dir) / 'summary.csv'})")
    return "\n".join(lines)


def load_run_config(out_dir):
    """Config snapshot stored next to a finished run."""
    return read_json(Path(out_dir) / "config.json")
