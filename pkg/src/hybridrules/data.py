"""Raw table loading, quantile/one-hot binarization, antecedent mining and splits."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .bits import ceil_fraction_of, exact, full_mask, popcount, to_mask
from .errors import ConfigError, DataError
from .rules import Antecedent, Literal, capture

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
LABEL = "label"


@dataclass
class RawTable:
    names: list[str]
    kinds: dict[str, str]
    columns: dict[str, np.ndarray]
    label: str
    y: np.ndarray
    source: str | None = None

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()} | {len(self.y)}
        if len(lengths) != 1:
            raise DataError("columns have different lengths")
        if len(self.y) < 1:
            raise DataError("table has no rows")
        if not np.isin(self.y, (0, 1)).all():
            raise DataError("invalid label: values must be 0 or 1")

    @property
    def n_rows(self) -> int:
        return len(self.y)

    def take(self, rows) -> "RawTable":
        rows = np.asarray(rows)
        return RawTable(list(self.names), dict(self.kinds),
                        {k: v[rows] for k, v in self.columns.items()},
                        self.label, self.y[rows], self.source)


def load_schema(path: str | os.PathLike) -> dict[str, Any]:
    """Schema JSON: ``{"label": "y", "columns": {"age": "numeric", "sex": "categorical"}}``."""
    with open(path) as fh:
        schema = json.load(fh)
    if "label" not in schema or "columns" not in schema:
        raise ConfigError("schema needs 'label' and 'columns'")
    for name, kind in schema["columns"].items():
        if kind not in (NUMERIC, CATEGORICAL):
            raise ConfigError(f"column {name!r}: unknown type {kind!r}")
    return schema


def _parse_label(value: str, row: int) -> int:
    v = value.strip()
    if v not in ("0", "1"):
        raise DataError(f"invalid label {value!r} at row {row}")
    return int(v)


def load_raw(path: str | os.PathLike, schema: dict[str, Any] | str | os.PathLike) -> RawTable:
    """Parse a headered CSV under ``schema``; only declared columns are kept, rows in file order."""
    if not isinstance(schema, dict):
        schema = load_schema(schema)
    if not os.path.exists(path):
        raise DataError(f"missing file: {path}")
    declared: dict[str, str] = dict(schema["columns"])
    label = schema["label"]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in [*declared, label] if c not in header]
        if missing:
            raise DataError(f"columns not in file: {missing}")
        raw: dict[str, list[str]] = {c: [] for c in declared}
        ys: list[int] = []
        for i, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise DataError(f"row {i} has the wrong number of fields")
            ys.append(_parse_label(row[label], i))
            for c in declared:
                raw[c].append(row[c])
    cols: dict[str, np.ndarray] = {}
    for c, kind in declared.items():
        if kind == NUMERIC:
            try:
                cols[c] = np.array([float(v) for v in raw[c]], dtype=float)
            except ValueError as exc:
                raise DataError(f"column {c!r}: non-numeric value ({exc})") from None
            if not np.isfinite(cols[c]).all():
                raise DataError(f"column {c!r}: non-finite value")
        else:
            cols[c] = np.array([v.strip() for v in raw[c]], dtype=object)
    return RawTable(list(declared), declared, cols, label, np.array(ys, dtype=np.uint8),
                    source=str(path))


class BinaryDataset:
    """M examples over D binary features, with per-feature bit masks."""

    def __init__(self, X, y, feature_names: Sequence[str], meta: dict | None = None):
        X = np.asarray(X)
        y = np.asarray(y)
        if X.ndim != 2:
            raise DataError("feature matrix must be 2-D")
        if X.shape[0] != y.shape[0]:
            raise DataError("feature matrix and labels differ in length")
        if not (np.isin(X, (0, 1)).all() and np.isin(y, (0, 1)).all()):
            raise DataError("binary dataset cells must be 0/1")
        if X.shape[1] < 1:
            raise DataError("dataset needs at least one feature")
        names = list(feature_names)
        if len(names) != X.shape[1] or len(set(names)) != len(names):
            raise DataError("feature names must be unique and match the column count")
        self.X = X.astype(np.uint8)
        self.y = y.astype(np.uint8)
        self.feature_names = tuple(names)
        self.meta = dict(meta or {})
        self.columns = [to_mask(self.X[:, j]) for j in range(self.X.shape[1])]
        self.label_mask = to_mask(self.y)
        self.all_mask = full_mask(self.n)
        n1 = popcount(self.label_mask)
        # exact tie: 0
        self.majority = 1 if 2 * n1 > self.n else 0

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.n

    def subset(self, rows, **meta) -> "BinaryDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return BinaryDataset(self.X[rows], self.y[rows], self.feature_names,
                             {**self.meta, **meta, "rows": rows.tolist()})

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DataError(f"unknown feature {name!r}") from None


def _fmt(t: float) -> str:
    return f"{t:.6g}"


def quantile_thresholds(values: np.ndarray, q: int) -> list[float]:
    """Midpoint thresholds at the i/q order-statistic boundaries, i = 1..q-1."""
    s = np.sort(np.asarray(values, dtype=float))
    m = len(s)
    out = []
    for i in range(1, q):
        k = (i * m) // q
        if k < 1 or k > m - 1:
            continue
        out.append(float((s[k - 1] + s[k]) / 2.0))
    return out


def binarize(table: RawTable, q: int = 4) -> BinaryDataset:
    """Numeric columns -> threshold features ``col<=t``; categorical -> one indicator per level."""
    if q < 2:
        raise ConfigError("quantile count must be >= 2")
    feats: list[np.ndarray] = []
    names: list[str] = []
    spec: dict[str, Any] = {}
    for c in table.names:
        col = table.columns[c]
        if table.kinds[c] == NUMERIC:
            if np.all(col == col[0]):
                log.warning("column %r is constant; no features emitted", c)
                spec[c] = {"type": NUMERIC, "thresholds": []}
                continue
            raw = quantile_thresholds(col, q)
            thresholds = sorted(set(raw))
            if len(thresholds) < len(raw):
                log.warning("column %r: duplicate quantile thresholds removed", c)
            kept = []
            for t in thresholds:
                f = (col <= t).astype(np.uint8)
                if f.all() or not f.any():
                    log.warning("column %r: threshold %s gives a constant feature; dropped", c, _fmt(t))
                    continue
                feats.append(f)
                names.append(f"{c}<={_fmt(t)}")
                kept.append(t)
            spec[c] = {"type": NUMERIC, "thresholds": kept}
        else:
            levels = sorted(set(col.tolist()))
            if len(levels) < 2:
                raise DataError(f"categorical column {c!r} has fewer than 2 levels")
            for lv in levels:
                feats.append((col == lv).astype(np.uint8))
                names.append(f"{c}={lv}")
            spec[c] = {"type": CATEGORICAL, "levels": levels}
    if not feats:
        raise DataError("binarization produced no features")
    X = np.column_stack(feats)
    return BinaryDataset(X, table.y.copy(), names,
                         {"source": table.source, "binarization": {"q": q, "columns": spec}})


def apply_binarization(table: RawTable, meta: dict) -> BinaryDataset:
    """Re-apply a fitted binarization (thresholds/levels from ``meta``) to another table."""
    feats, names = [], []
    for c, s in meta["binarization"]["columns"].items():
        col = table.columns[c]
        if s["type"] == NUMERIC:
            for t in s["thresholds"]:
                feats.append((col <= t).astype(np.uint8))
                names.append(f"{c}<={_fmt(t)}")
        else:
            for lv in s["levels"]:
                feats.append((col == lv).astype(np.uint8))
                names.append(f"{c}={lv}")
    return BinaryDataset(np.column_stack(feats), table.y.copy(), names,
                         {"source": table.source, "binarization": meta["binarization"]})


@dataclass
class AntecedentPool:
    antecedents: list[Antecedent]
    supports: list[int]
    params: dict[str, Any] = field(default_factory=dict)
    # (i, j): antecedent i has the same capture mask as the earlier antecedent j
    duplicates: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self):
        return len(self.antecedents)

    def __iter__(self):
        return iter(self.antecedents)

    def __getitem__(self, i):
        return self.antecedents[i]

    def masks(self, data: BinaryDataset) -> list[int]:
        return [capture(a, data) for a in self.antecedents]

    def to_json(self, feature_names: Sequence[str]) -> list[dict]:
        return [
            {"literals": [[feature_names[l.feature], "neg" if l.negated else "pos"] for l in a.literals],
             "support": s}
            for a, s in zip(self.antecedents, self.supports)
        ]

    def save(self, path, feature_names: Sequence[str]):
        with open(path, "w") as fh:
            json.dump({"params": self.params, "antecedents": self.to_json(feature_names)}, fh, indent=1)

    @classmethod
    def load(cls, path, data: BinaryDataset) -> "AntecedentPool":
        with open(path) as fh:
            doc = json.load(fh)
        items = doc["antecedents"] if isinstance(doc, dict) else doc
        ants, sups = [], []
        for item in items:
            lits = tuple(Literal(data.feature_index(n), pol == "neg") for n, pol in item["literals"])
            ants.append(Antecedent(lits))
            sups.append(int(item.get("support", 0)))
        return cls(ants, sups, doc.get("params", {}) if isinstance(doc, dict) else {})


def mine_antecedents(data: BinaryDataset, max_card: int = 2, min_support: float = 0.01,
                     top_k: int = 300, add_negations: bool = True) -> AntecedentPool:
    """All literal conjunctions of size <= max_card meeting the support floor, top-k by support.

    Direct pairwise counting; identical to FP-Growth restricted to itemsets of
    size <= 2 over the (optionally negation-augmented) literal set.
    """
    if not 0 < min_support < 1:
        raise ConfigError("min_support must be in (0, 1)")
    if top_k < 1:
        raise ConfigError("top_k must be >= 1")
    if max_card not in (1, 2):
        raise ConfigError("max_card must be 1 or 2")
    floor = ceil_fraction_of(min_support, data.n)
    full = data.all_mask
    lits: list[tuple[Literal, int]] = []
    for j, col in enumerate(data.columns):
        lits.append((Literal(j, False), col))
        if add_negations:
            lits.append((Literal(j, True), full & ~col))
    frequent = [(l, m) for l, m in lits if popcount(m) >= floor]

    found: list[tuple[Antecedent, int, int]] = [(Antecedent((l,)), popcount(m), m) for l, m in frequent]
    if max_card == 2:
        for (l1, m1), (l2, m2) in itertools.combinations(frequent, 2):
            if l1.feature == l2.feature:
                continue
            m = m1 & m2
            s = popcount(m)
            if s >= floor:
                found.append((Antecedent((l1, l2)), s, m))
    if not found:
        raise DataError("no antecedent meets support")
    found.sort(key=lambda t: (-t[1], t[0].sort_key))
    found = found[:top_k]
    seen: dict[int, int] = {}
    dups = []
    for i, (_, _, m) in enumerate(found):
        if m in seen:
            dups.append((i, seen[m]))
        else:
            seen[m] = i
    if dups:
        log.info("%d antecedents duplicate an earlier capture mask", len(dups))
    params = {"max_card": max_card, "min_support": min_support, "top_k": top_k,
              "add_negations": add_negations, "support_floor": floor}
    return AntecedentPool([a for a, _, _ in found], [s for _, s, _ in found], params, dups)


def split(data: BinaryDataset, fractions: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0):
    """Random disjoint train/valid/test split; valid and test are floored, remainder to train."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError("fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError("fractions must sum to 1")
    m = data.n
    n_valid = math.floor(exact(fractions[1]) * m)
    n_test = math.floor(exact(fractions[2]) * m)
    n_train = m - n_valid - n_test
    if min(n_train, n_valid, n_test) == 0:
        raise DataError(f"empty split for M={m} and fractions {tuple(fractions)}")
    perm = np.random.default_rng(seed).permutation(m)
    parts = (np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_valid]),
             np.sort(perm[n_train + n_valid:]))
    return tuple(data.subset(rows, split=name, seed=seed)
                 for rows, name in zip(parts, ("train", "valid", "test")))


def split_indices(m: int, fractions: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0):
    """Row indices of the split ``split`` would produce for ``m`` rows."""
    dummy = BinaryDataset(np.zeros((m, 1), dtype=np.uint8), np.zeros(m, dtype=np.uint8), ["_"])
    return tuple(np.asarray(d.meta["rows"]) for d in split(dummy, fractions, seed))


def write_binary_csv(data: BinaryDataset, path, label: str = "label"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*data.feature_names, label])
        for row, yv in zip(data.X, data.y):
            w.writerow([*row.tolist(), int(yv)])


def read_binary_csv(path, label: str = "label") -> BinaryDataset:
    if not os.path.exists(path):
        raise DataError(f"missing file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if label not in header:
            raise DataError(f"no {label!r} column in {path}")
        li = header.index(label)
        rows = []
        for r in reader:
            if r:
                rows.append(r)
    try:
        arr = np.array(rows, dtype=np.int64)
    except ValueError:
        raise DataError(f"{path}: non-integer cell") from None
    names = [h for i, h in enumerate(header) if i != li]
    X = np.delete(arr, li, axis=1)
    return BinaryDataset(X, arr[:, li], names, {"source": str(path)})
