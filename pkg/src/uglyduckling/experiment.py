"""Monte-Carlo replication harness: simulate, estimate over a range of horizons, aggregate."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .divergence import CriterionResult, criterion_K
from .estimate import (
    DataQualityWarning,
    estimate,
    f_star_error,
    mu_hat,
    mu_star,
    normalized_f_error,
    spine_overlap,
    ugly_duckling,
)
from .prob import Distribution, TransformFn, as_distribution, as_transform, l1_distance, special_law
from .spine import identify
from .tree import DEFAULT_NODE_BUDGET, NodeBudgetExceeded, observe, replicate_seed, simulate_sst

__all__ = [
    "ExperimentConfig",
    "ErrorRecord",
    "ExperimentResult",
    "ERROR_FIELDS",
    "run_replicate",
    "run_experiment",
    "aggregate",
    "emit_outputs",
    "ensure_writable",
]

log = logging.getLogger(__name__)

ERROR_FIELDS = ("err_mu_hat", "err_mu_star", "err_f_norm", "err_f_star", "err_nu", "err_spine")


@dataclass
class ExperimentConfig:
    mu: Distribution
    f: TransformFn
    h_max: int = 125
    h_step: int = 5
    h_min: int = 5
    replicates: int = 50
    master_seed: int = 0
    output_dir: str | None = None
    node_budget: int = DEFAULT_NODE_BUDGET
    workers: int = 1

    def __post_init__(self):
        self.mu = as_distribution(self.mu)
        self.f = as_transform(self.f)
        if len(self.mu) != len(self.f):
            raise ValueError("mu and f must have the same length")
        if self.h_min < 1:
            raise ValueError("h_min must be at least 1")
        if self.h_min > self.h_max:
            raise ValueError("h_min must not exceed h_max")
        if self.h_step < 1:
            raise ValueError("h_step must be at least 1")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    @property
    def h_grid(self) -> list[int]:
        return list(range(self.h_min, self.h_max + 1, self.h_step))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["mu"] = self.mu.tolist()
        out["f"] = self.f.tolist()
        return out


@dataclass
class ErrorRecord:
    """Errors of one replicate at one horizon.

    Entries that are undefined for the replicate (no normal node left once
    the estimated spine is removed) are NaN.
    """

    h: int
    replicate: int
    err_mu_hat: float
    err_mu_star: float
    err_f_norm: float
    err_f_star: float
    err_nu: float
    err_spine: float
    tree_size: int
    k_h: int
    overlap: int

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list[str]:
        return [_fmt(getattr(self, name)) for name in self.header()]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[ErrorRecord]
    aggregate: list[dict]
    criterion: CriterionResult | None
    failed_replicates: list[int] = field(default_factory=list)


def _record(cfg: ExperimentConfig, tree, h: int, r: int) -> ErrorRecord:
    n_max = cfg.mu.n_max
    obs = observe(tree, h)
    mu = cfg.mu.probs
    nu = special_law(cfg.mu, cfg.f).probs
    try:
        b = estimate(obs, n_max=n_max)
    except ValueError:
        b = None
    if b is None:
        # e.g. a single-branch tree: quantities built on normal nodes are undefined
        rep = identify(obs, n_max=n_max)
        mh = mu_hat(obs, n_max)
        sh = ugly_duckling(rep, mh)
        try:
            err_ms = l1_distance(mu_star(obs, sh, n_max), mu)
        except ValueError:
            err_ms = math.nan
        overlap = spine_overlap(obs.true_spine(), sh)
        return ErrorRecord(
            h=h,
            replicate=r,
            err_mu_hat=l1_distance(mh, mu),
            err_mu_star=err_ms,
            err_f_norm=math.nan,
            err_f_star=math.nan,
            err_nu=math.nan,
            err_spine=1.0 - overlap / h,
            tree_size=obs.n_observed,
            k_h=rep.k_h,
            overlap=overlap,
        )
    return ErrorRecord(
        h=h,
        replicate=r,
        err_mu_hat=l1_distance(b.mu_hat, mu),
        err_mu_star=l1_distance(b.mu_star, mu),
        err_f_norm=normalized_f_error(b.f_hat, cfg.f),
        err_f_star=f_star_error(b.f_hat, cfg.mu, cfg.f),
        err_nu=l1_distance(b.nu_hat, nu),
        err_spine=1.0 - b.overlap / h,
        tree_size=b.tree_size,
        k_h=b.k_h,
        overlap=b.overlap,
    )


def run_replicate(cfg: ExperimentConfig, r: int) -> list[ErrorRecord] | None:
    """All records of replicate ``r``, or None when the node budget is exceeded."""
    seed = replicate_seed(int(cfg.master_seed), r)
    try:
        tree = simulate_sst(cfg.mu, cfg.f, cfg.h_max, seed=seed, node_budget=cfg.node_budget)
    except NodeBudgetExceeded:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        return [_record(cfg, tree, h, r) for h in cfg.h_grid]


def _stat(values, fn) -> float:
    arr = np.asarray(values, dtype=float)
    arr = arr[~np.isnan(arr)]
    return float(fn(arr)) if arr.size else math.nan


def aggregate(records: list[ErrorRecord], h_grid, n_failed: int = 0) -> list[dict]:
    """Per-horizon mean and median of every error column."""
    rows = []
    for h in h_grid:
        sel = [rec for rec in records if rec.h == h]
        row = {"h": h, "n": len(sel), "failures": n_failed}
        for name in ERROR_FIELDS:
            vals = [getattr(rec, name) for rec in sel]
            row[f"mean_{name}"] = _stat(vals, np.mean)
            row[f"median_{name}"] = _stat(vals, np.median)
        row["mean_k_h"] = _stat([rec.k_h for rec in sel], np.mean)
        row["mean_tree_size"] = _stat([rec.tree_size for rec in sel], np.mean)
        rows.append(row)
    return rows


def ensure_writable(output_dir) -> Path:
    path = Path(output_dir)
    path.mkdir(parents=True, exist_ok=True)
    try:
        with tempfile.NamedTemporaryFile(dir=path):
            pass
    except OSError as exc:
        raise PermissionError(f"output directory {path} is not writable: {exc}") from exc
    return path


def _replicate_job(args):
    cfg_dict, r = args
    return r, run_replicate(ExperimentConfig.from_dict(cfg_dict), r)


def run_experiment(cfg: ExperimentConfig, compute_criterion: bool = True) -> ExperimentResult:
    """Simulate every replicate once and estimate at each horizon of the grid.

    Output does not depend on ``cfg.workers``: records are sorted by
    ``(replicate, h)`` before being returned.
    """
    if cfg.output_dir is not None:
        ensure_writable(cfg.output_dir)
    crit = None
    if compute_criterion:
        crit = criterion_K(cfg.mu, cfg.f)
        log.info(
            "criterion K = %.6f (log m = %.6f, D = %.6f at delta = %.4g)",
            crit.value,
            crit.log_mean,
            crit.divergence,
            crit.delta,
        )
        if crit.value >= 0:
            log.warning("criterion K = %.6f >= 0: the spine may not be identifiable", crit.value)

    results: dict[int, list[ErrorRecord] | None] = {}
    reps = range(cfg.replicates)
    if cfg.workers == 1:
        for r in reps:
            results[r] = run_replicate(cfg, r)
    else:
        cfg_dict = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for r, recs in pool.map(_replicate_job, [(cfg_dict, r) for r in reps]):
                results[r] = recs

    failed = sorted(r for r, recs in results.items() if recs is None)
    for r in failed:
        log.warning("replicate %d exceeded the node budget and is excluded", r)
    records = [rec for r in sorted(results) for rec in (results[r] or [])]
    records.sort(key=lambda rec: (rec.replicate, rec.h))
    agg = aggregate(records, cfg.h_grid, n_failed=len(failed))
    return ExperimentResult(cfg, records, agg, crit, failed)


def records_csv(records: list[ErrorRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ErrorRecord.header())
    for rec in records:
        w.writerow(rec.row())
    return buf.getvalue()


def aggregate_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(rows[0])
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row[k]) for k in header])
    return buf.getvalue()


def emit_outputs(records, aggregates, cfg: ExperimentConfig, plot: bool = True) -> dict[str, Path]:
    """Write ``records.csv``, ``aggregate.csv`` and ``errors.svg`` into ``cfg.output_dir``."""
    if not records:
        raise ValueError("no records to write")
    if not aggregates:
        raise ValueError("empty aggregate table")
    if cfg.output_dir is None:
        raise ValueError("output_dir is not set")
    out = ensure_writable(cfg.output_dir)
    paths = {"records": out / "records.csv", "aggregate": out / "aggregate.csv"}
    paths["records"].write_text(records_csv(records))
    paths["aggregate"].write_text(aggregate_csv(aggregates))
    if plot:
        from .plotting import plot_errors

        paths["plot"] = plot_errors(aggregates, out / "errors.svg")
    cfg_path = out / "config.json"
    cfg_path.write_text(json.dumps(cfg.to_dict(), indent=2, default=str))
    paths["config"] = cfg_path
    return paths


def as_dicts(records: list[ErrorRecord]) -> list[dict]:
    return [asdict(r) for r in records]

