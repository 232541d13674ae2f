"""Grid runs over (psi, lambda, policy, min-support), model selection and Pareto fronts."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .bits import from_mask
from .blackbox import (HybridModel, load_predictions, specialization_weights,
                       train_builtin, weighted_log_loss, write_weights)
from .data import (AntecedentPool, BinaryDataset, binarize, load_raw, mine_antecedents,
                   read_binary_csv, split, write_binary_csv)
from .errors import ConfigError, DataError, HybridRulesError
from .objectives import MODES
from .rules import equiv_groups
from .search import SearchConfig, normalize_policy, optimize

log = logging.getLogger(__name__)

METRICS_VERSION = 1
METRICS_COLUMNS = ["metrics_version", "psi", "lambda", "policy", "min_support", "status",
                   "objective", "length", "train_transparency", "valid_transparency",
                   "test_transparency", "train_accuracy", "valid_accuracy", "test_accuracy",
                   "on_front", "selected", "error"]

# full-scale defaults: one CPU hour and 8 GB per cell
DEFAULT_TIME_LIMIT = 3600.0
DEFAULT_MEM_LIMIT = 8 * 1024 ** 3


@dataclass
class RunConfig:
    subcommand: str = "train"
    data: str | None = None
    schema: str | None = None
    workdir: str | None = None
    mode: str = "pre"
    lambdas: list[float] = field(default_factory=lambda: [0.01])
    psis: list[float] = field(default_factory=lambda: [0.0])
    policies: list[str] = field(default_factory=lambda: ["lower-bound"])
    min_supports: list[float] = field(default_factory=lambda: [0.0])
    alpha: float = 1.0
    beta: str | float = "auto"
    max_length: int = 10
    time_limit: float | None = DEFAULT_TIME_LIMIT
    mem_limit: int | None = DEFAULT_MEM_LIMIT
    bb_preds: str | None = None
    bb_preds_valid: str | None = None
    bb_preds_test: str | None = None
    seed: int = 0
    out: str = "out"
    q: int = 4
    fractions: list[float] = field(default_factory=lambda: [0.6, 0.2, 0.2])
    mine_min_support: float = 0.01
    top_k: int = 300
    max_card: int = 2
    l2_grid: list[float] = field(default_factory=lambda: [1e-3])
    epochs: int = 1500
    jobs: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        for name in ("lambdas", "psis", "policies", "min_supports", "l2_grid"):
            vals = getattr(self, name)
            if not isinstance(vals, (list, tuple)) or len(vals) == 0:
                raise ConfigError(f"{name} must be a non-empty list")
            setattr(self, name, list(vals))
        if any(not 0.0 <= p <= 1.0 for p in self.psis):
            raise ConfigError("psi values must lie in [0, 1]")
        if any(l < 0 for l in self.lambdas):
            raise ConfigError("lambda values must be >= 0")
        self.policies = [normalize_policy(p) for p in self.policies]
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.beta != "auto":
            self.beta = float(self.beta)
            if self.beta < 0:
                raise ConfigError("beta must be >= 0")
        self.fractions = list(self.fractions)
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def beta_value(self) -> float | None:
        return None if self.beta == "auto" else float(self.beta)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        doc = json.loads(text)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def cells(self) -> list[tuple[float, float, str, float]]:
        return [(p, l, pol, s) for p in self.psis for l in self.lambdas for pol in self.policies
                for s in self.min_supports]


@dataclass
class ParetoRecord:
    psi: float
    lam: float
    policy: str
    min_support: float
    status: str
    objective: float | None = None
    length: int | None = None
    train_transparency: float | None = None
    valid_transparency: float | None = None
    test_transparency: float | None = None
    train_accuracy: float | None = None
    valid_accuracy: float | None = None
    test_accuracy: float | None = None
    wall_time: float = 0.0
    on_front: bool = False
    selected: bool = False
    error: str = ""
    error_type: type | None = field(default=None, repr=False, compare=False)

    @property
    def key(self) -> tuple:
        return (self.psi, self.lam, self.policy, self.min_support)

    @property
    def ok(self) -> bool:
        return not self.error

    def row(self, show_test: bool) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return str(int(v))
            return repr(v) if isinstance(v, float) else str(v)
        test = [self.test_transparency, self.test_accuracy] if show_test else [None, None]
        return [fmt(v) for v in (METRICS_VERSION, self.psi, self.lam, self.policy, self.min_support,
                                 self.status, self.objective, self.length, self.train_transparency,
                                 self.valid_transparency, test[0], self.train_accuracy,
                                 self.valid_accuracy, test[1], self.on_front, self.selected,
                                 self.error)]


@dataclass
class Context:
    """Everything a grid cell needs; picklable so cells can run in worker processes."""

    train: BinaryDataset
    valid: BinaryDataset
    test: BinaryDataset
    pool: AntecedentPool
    binarization: dict | None = None
    preds: dict[str, np.ndarray | None] = field(default_factory=dict)
    bb_path: str | None = None


def _split_preds(cfg: RunConfig, ctx: Context) -> dict[str, np.ndarray | None]:
    out = {}
    for name, path in (("train", cfg.bb_preds), ("valid", cfg.bb_preds_valid), ("test", cfg.bb_preds_test)):
        out[name] = None if path is None else load_predictions(path, getattr(ctx, name).n).labels
    return out


def mine(cfg: RunConfig, write: bool = True) -> Context:
    """Load, binarize (thresholds fit on all rows), split, and mine the pool on the training split."""
    if cfg.data is None or cfg.schema is None:
        raise ConfigError("mining needs --data and --schema")
    table = load_raw(cfg.data, cfg.schema)
    full = binarize(table, cfg.q)
    train, valid, test = split(full, cfg.fractions, cfg.seed)
    pool = mine_antecedents(train, cfg.max_card, cfg.mine_min_support, cfg.top_k, True)
    ctx = Context(train, valid, test, pool, full.meta.get("binarization"))
    if write:
        os.makedirs(cfg.out, exist_ok=True)
        for name in ("train", "valid", "test"):
            d = getattr(ctx, name)
            write_binary_csv(d, os.path.join(cfg.out, f"{name}.csv"))
            with open(os.path.join(cfg.out, f"{name}.rows"), "w") as fh:
                fh.writelines(f"{r}\n" for r in d.meta["rows"])
        pool.save(os.path.join(cfg.out, "pool.json"), train.feature_names)
        with open(os.path.join(cfg.out, "binarization.json"), "w") as fh:
            json.dump(ctx.binarization, fh, indent=1, sort_keys=True)
    log.info("mined %d antecedents over %d features (train %d / valid %d / test %d)", len(pool),
             train.n_features, train.n, valid.n, test.n)
    return ctx


def load_workdir(path: str) -> Context:
    """Read the split CSVs, pool and binarization written by :func:`mine`."""
    files = {n: os.path.join(path, f"{n}.csv") for n in ("train", "valid", "test")}
    for f in [*files.values(), os.path.join(path, "pool.json")]:
        if not os.path.exists(f):
            raise DataError(f"missing file: {f}")
    train, valid, test = (read_binary_csv(files[n]) for n in ("train", "valid", "test"))
    pool = AntecedentPool.load(os.path.join(path, "pool.json"), train)
    binz = None
    bpath = os.path.join(path, "binarization.json")
    if os.path.exists(bpath):
        with open(bpath) as fh:
            binz = json.load(fh)
    return Context(train, valid, test, pool, binz)


def build_context(cfg: RunConfig) -> Context:
    if cfg.workdir is not None:
        ctx = load_workdir(cfg.workdir)
    else:
        ctx = mine(cfg, write=True)
    ctx.preds = _split_preds(cfg, ctx)
    ctx.bb_path = cfg.bb_preds
    if cfg.mode == "post" and ctx.preds["train"] is None:
        raise ConfigError("post mode needs a training-split prediction file (--bb-preds)")
    return ctx


def fit_specialized(ctx: Context, captured_train: np.ndarray, captured_valid: np.ndarray,
                    alpha: float, l2_grid: Sequence[float], epochs: int, seed: int):
    """Built-in black box trained on specialization weights.

    With several l2 values, the one with the lowest validation log-loss under
    the same weighting (computed on the validation capture mask) wins.
    """
    w_train = specialization_weights(captured_train, alpha)
    w_valid = specialization_weights(captured_valid, alpha)
    best, best_loss = None, None
    for l2 in l2_grid:
        model = train_builtin(ctx.train, w_train, ctx.pool, l2=l2, epochs=epochs, seed=seed)
        if len(l2_grid) == 1:
            return model, w_train
        loss = weighted_log_loss(model, ctx.valid, w_valid.weights)
        if best_loss is None or loss < best_loss:
            best, best_loss = model, loss
    return best, w_train


def standalone_builtin(ctx: Context, cfg: RunConfig):
    """Built-in black box on uniform weights (no prefix)."""
    ones = np.zeros(ctx.train.n, dtype=bool)
    model, _ = fit_specialized(ctx, ones, np.zeros(ctx.valid.n, dtype=bool), 0.0, cfg.l2_grid,
                               cfg.epochs, cfg.seed)
    return model


def run_cell(ctx: Context, cfg: RunConfig, cell: tuple) -> tuple[ParetoRecord, dict | None]:
    from .blackbox import evaluate

    psi, lam, policy, min_support = cell
    rec = ParetoRecord(psi, lam, policy, min_support, status="error")
    try:
        scfg = SearchConfig(mode=cfg.mode, lam=lam, beta=cfg.beta_value, min_coverage=psi,
                            policy=policy, min_support=min_support, max_length=cfg.max_length,
                            time_limit=cfg.time_limit, memory_limit=cfg.mem_limit)
        groups = equiv_groups(ctx.train)
        res = optimize(ctx.train, ctx.pool, groups, scfg, bb_preds=ctx.preds.get("train"))
        meta = {"objective": res.objective.total, "train_transparency": res.prefix.n_captured / ctx.train.n,
                "status": res.status, "lambda": lam, "beta": res.beta, "psi": psi, "policy": policy,
                "min_support": min_support, "feature_names": list(ctx.train.feature_names),
                "binarization": ctx.binarization, "wall_time_s": res.stats.wall_time,
                "nodes_explored": res.stats.nodes_explored}
        model = HybridModel.from_prefix(res.prefix, ctx.train.feature_names, mode=cfg.mode, lam=lam,
                                        beta=res.beta, min_coverage=psi, metadata=meta)
        preds = dict(ctx.preds)
        if cfg.mode == "corels":
            from .objectives import default_label
            model.default = default_label(res.prefix, ctx.train)
        elif cfg.mode == "post":
            model.blackbox = {"kind": "file", "path": str(ctx.bb_path)}
        else:
            model.alpha = cfg.alpha
            if preds.get("train") is None:
                cap_valid = model.prefix_for(ctx.valid).captured
                bb, _ = fit_specialized(ctx, from_mask(res.prefix.captured, ctx.train.n),
                                        from_mask(cap_valid, ctx.valid.n), cfg.alpha, cfg.l2_grid,
                                        cfg.epochs, cfg.seed)
                model.blackbox = {"kind": "builtin", "params": bb.to_params()}
                preds = {}
            else:
                model.blackbox = {"kind": "file", "path": str(ctx.bb_path)}
        for name in ("train", "valid", "test"):
            d = getattr(ctx, name)
            try:
                m = evaluate(model, d, preds.get(name))
            except DataError:
                continue  # no black-box source for this split
            setattr(rec, f"{name}_transparency", m["transparency"])
            setattr(rec, f"{name}_accuracy", m["accuracy"])
        rec.status = res.status
        rec.objective = res.objective.total
        rec.length = res.prefix.length
        rec.wall_time = res.stats.wall_time
        return rec, model.to_dict()
    except HybridRulesError as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        rec.error_type = type(exc)
        return rec, None


_WORKER_CTX: tuple | None = None


def _init_worker(ctx, cfg):
    global _WORKER_CTX
    _WORKER_CTX = (ctx, cfg)


def _run_in_worker(cell):
    ctx, cfg = _WORKER_CTX
    return run_cell(ctx, cfg, cell)


def run_grid(ctx: Context, cfg: RunConfig) -> list[tuple[ParetoRecord, dict | None]]:
    """One result per grid cell, in cell order regardless of completion order."""
    cells = cfg.cells()
    if cfg.jobs == 1 or len(cells) == 1:
        return [run_cell(ctx, cfg, c) for c in cells]
    with ProcessPoolExecutor(max_workers=cfg.jobs, initializer=_init_worker,
                             initargs=(ctx, cfg)) as ex:
        results = list(ex.map(_run_in_worker, cells))
    order = {c: i for i, c in enumerate(cells)}
    return sorted(results, key=lambda r: order[r[0].key])


def pareto_front(points: Sequence[tuple[float, float]]) -> list[bool]:
    """Non-domination flags when maximising both coordinates."""
    flags = []
    for i, (a, t) in enumerate(points):
        dominated = any(a2 >= a and t2 >= t and (a2 > a or t2 > t)
                        for j, (a2, t2) in enumerate(points) if j != i)
        flags.append(not dominated)
    return flags


def mark_front(records: Sequence[ParetoRecord]) -> None:
    cand = [r for r in records if r.ok and r.valid_accuracy is not None]
    flags = pareto_front([(r.valid_accuracy, r.valid_transparency) for r in cand])
    for r in records:
        r.on_front = False
    for r, f in zip(cand, flags):
        r.on_front = f


def select_per_psi(records: Sequence[ParetoRecord]) -> dict[float, int]:
    """Index of the best-validation-accuracy cell for every requested psi (first wins ties)."""
    best: dict[float, int] = {}
    for i, r in enumerate(records):
        if not r.ok:
            continue
        score = r.valid_accuracy if r.valid_accuracy is not None else r.train_accuracy
        if score is None:
            continue
        j = best.get(r.psi)
        if j is None:
            best[r.psi] = i
            continue
        prev = records[j]
        prev_score = prev.valid_accuracy if prev.valid_accuracy is not None else prev.train_accuracy
        if score > prev_score:
            best[r.psi] = i
    for i, r in enumerate(records):
        r.selected = i in best.values()
    return best


def write_metrics(path, records: Sequence[ParetoRecord], show_test) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for r in records:
            w.writerow(r.row(show_test(r)))


def write_timings(path, records: Sequence[ParetoRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["psi", "lambda", "policy", "min_support", "wall_time"])
        for r in records:
            w.writerow([r.psi, r.lam, r.policy, r.min_support, f"{r.wall_time:.3f}"])


def _model_name(psi: float, single: bool) -> str:
    return "model.json" if single else f"model_psi{psi:g}.json"


def cmd_train(cfg: RunConfig, ctx: Context | None = None) -> dict[str, Any]:
    """Grid over the config, keep the best validation model per psi, write models and metrics."""
    ctx = ctx or build_context(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    results = run_grid(ctx, cfg)
    records = [r for r, _ in results]
    chosen = select_per_psi(records)
    if not chosen:
        errs = sorted({r.error for r in records if r.error})
        kinds = {r.error_type for r in records if r.error_type is not None}
        kind = kinds.pop() if len(kinds) == 1 else HybridRulesError
        raise kind("every grid cell failed: " + "; ".join(errs))
    mark_front(records)
    single = len(set(cfg.psis)) == 1
    paths = {}
    for psi, i in sorted(chosen.items()):
        model = HybridModel.from_dict(results[i][1])
        path = os.path.join(cfg.out, _model_name(psi, single))
        model.save(path)
        paths[psi] = path
        if cfg.mode in ("pre", "pre-nocollab"):
            cap = from_mask(model.prefix_for(ctx.train).captured, ctx.train.n)
            write_weights(os.path.join(cfg.out, _model_name(psi, single).replace("model", "weights")
                                       .replace(".json", ".csv")),
                          specialization_weights(cap, cfg.alpha))
    write_metrics(os.path.join(cfg.out, "metrics.csv"), records, lambda r: r.selected)
    write_timings(os.path.join(cfg.out, "timings.csv"), records)
    with open(os.path.join(cfg.out, "config.json"), "w") as fh:
        fh.write(cfg.to_json())
    return {"records": records, "models": paths, "context": ctx}


def blackbox_accuracy(ctx: Context, cfg: RunConfig) -> dict[str, float | None]:
    """Accuracy of the black box on its own: the prediction files, or the uniform built-in model."""
    out = {}
    if ctx.preds.get("train") is not None:
        for name in ("train", "valid", "test"):
            p = ctx.preds.get(name)
            out[name] = None if p is None else float(np.mean(p == getattr(ctx, name).y))
        return out
    model = standalone_builtin(ctx, cfg)
    for name in ("train", "valid", "test"):
        d = getattr(ctx, name)
        out[name] = float(np.mean(model.predict(d).labels == d.y))
    return out


def cmd_pareto(cfg: RunConfig, ctx: Context | None = None) -> dict[str, Any]:
    """Every grid cell recorded; the validation front gets test metrics."""
    ctx = ctx or build_context(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    results = run_grid(ctx, cfg)
    records = [r for r, _ in results]
    select_per_psi(records)
    mark_front(records)
    write_metrics(os.path.join(cfg.out, "pareto.csv"), records, lambda r: r.on_front)
    write_timings(os.path.join(cfg.out, "timings.csv"), records)
    bb = blackbox_accuracy(ctx, cfg)
    front = [{"psi": r.psi, "lambda": r.lam, "policy": r.policy, "min_support": r.min_support,
              "valid_accuracy": r.valid_accuracy, "valid_transparency": r.valid_transparency,
              "test_accuracy": r.test_accuracy, "test_transparency": r.test_transparency}
             for r in records if r.on_front]
    summary = {"metrics_version": METRICS_VERSION, "mode": cfg.mode, "blackbox_accuracy": bb,
               "front": front, "n_cells": len(records), "n_errors": sum(not r.ok for r in records)}
    with open(os.path.join(cfg.out, "pareto_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    with open(os.path.join(cfg.out, "config.json"), "w") as fh:
        fh.write(cfg.to_json())
    os.makedirs(os.path.join(cfg.out, "models"), exist_ok=True)
    for (r, doc) in results:
        if r.on_front and doc is not None:
            HybridModel.from_dict(doc).save(os.path.join(
                cfg.out, "models", f"psi{r.psi:g}_lam{r.lam:g}_{r.policy}_sup{r.min_support:g}.json"))
    return {"records": records, "summary": summary, "context": ctx}
