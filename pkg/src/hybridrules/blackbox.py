"""Black-box side of a hybrid model: prediction files, specialization weights,
a small built-in weighted learner, and the assembled hybrid model."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.optimize import minimize

from .bits import from_mask
from .errors import ConfigError, DataError
from .rules import Antecedent, Literal, Prefix, Rule

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class PredictionSet:
    labels: np.ndarray
    source: str = "file"

    def __len__(self):
        return len(self.labels)


def _parse_binary(value: str, where: str) -> int:
    v = value.strip()
    if v not in ("0", "1"):
        raise DataError(f"non-binary prediction {value!r} at {where}")
    return int(v)


def load_predictions(path, expected_len: int | None = None) -> PredictionSet:
    """One 0/1 label per line, or a CSV with a ``prediction`` column."""
    if not os.path.exists(path):
        raise DataError(f"missing prediction file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if lines and "prediction" in [h.strip() for h in lines[0].split(",")]:
        reader = csv.DictReader(lines)
        labels = [_parse_binary(row["prediction"], f"{path}:{i + 2}") for i, row in enumerate(reader)]
    else:
        labels = [_parse_binary(ln, f"{path}:{i + 1}") for i, ln in enumerate(lines)]
    if expected_len is not None and len(labels) != expected_len:
        raise DataError(f"{path}: {len(labels)} predictions, expected {expected_len}")
    return PredictionSet(np.array(labels, dtype=np.uint8), source=str(path))


def write_predictions(path, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{int(v)}\n" for v in labels)


@dataclass
class WeightVector:
    weights: np.ndarray
    alpha: float

    def ratio(self, captured) -> float:
        captured = np.asarray(captured, dtype=bool)
        return float(self.weights[~captured][0] / self.weights[captured][0])


def specialization_weights(captured, alpha: float, n: int | None = None) -> WeightVector:
    """w_i proportional to exp(alpha * [i uncaptured]), normalised to sum to one.

    ``captured`` is a boolean array, or an int mask together with ``n``.
    """
    if alpha < 0:
        raise ConfigError("alpha must be >= 0")
    if isinstance(captured, int):
        if n is None:
            raise ConfigError("n is required with an int mask")
        captured = from_mask(captured, n)
    captured = np.asarray(captured, dtype=bool)
    m = captured.size
    if m < 1:
        raise ConfigError("need at least one example")
    n_unc = int((~captured).sum())
    boost = math.exp(alpha)
    w_cap = 1.0 / ((m - n_unc) + n_unc * boost)
    w = np.where(captured, w_cap, boost * w_cap)
    return WeightVector(w, float(alpha))


def write_weights(path, wv: WeightVector) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["index", "weight"])
        for i, w in enumerate(wv.weights):
            out.writerow([i, repr(float(w))])


def weighted_accuracy(preds, y, weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(np.sum(w * (np.asarray(preds) == np.asarray(y))) / np.sum(w))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class BuiltinModel:
    """Weighted L2-regularised logistic model over binary (and optional rule) features."""

    coef: np.ndarray
    intercept: float
    feature_names: list[str]
    rules: list[list[list[Any]]] = field(default_factory=list)
    constant: int | None = None

    def design(self, data) -> np.ndarray:
        idx = [data.feature_index(n) for n in self.feature_names]
        cols = [data.X[:, idx].astype(float)]
        for lits in self.rules:
            ok = np.ones(data.n, dtype=bool)
            for name, pol in lits:
                col = data.X[:, data.feature_index(name)].astype(bool)
                ok &= ~col if pol == "neg" else col
            cols.append(ok.astype(float)[:, None])
        return np.hstack(cols)

    def decision(self, data) -> np.ndarray:
        return self.design(data) @ self.coef + self.intercept

    def predict(self, data) -> PredictionSet:
        if self.constant is not None:
            return PredictionSet(np.full(data.n, self.constant, dtype=np.uint8), "builtin")
        p = _sigmoid(self.decision(data))
        return PredictionSet((p >= 0.5).astype(np.uint8), "builtin")

    def predict_row(self, x, feature_names: Sequence[str]) -> int:
        if self.constant is not None:
            return self.constant
        lookup = {n: i for i, n in enumerate(feature_names)}
        z = self.intercept + sum(c * x[lookup[n]] for c, n in zip(self.coef, self.feature_names))
        for c, lits in zip(self.coef[len(self.feature_names):], self.rules):
            z += c * all((x[lookup[n]] == 1) == (pol == "pos") for n, pol in lits)
        return int(_sigmoid(z) >= 0.5)

    def to_params(self) -> dict:
        return {"coef": [float(c) for c in self.coef], "intercept": float(self.intercept),
                "feature_names": list(self.feature_names), "rules": self.rules,
                "constant": self.constant}

    @classmethod
    def from_params(cls, params: dict) -> "BuiltinModel":
        return cls(np.asarray(params["coef"], dtype=float), float(params["intercept"]),
                   list(params["feature_names"]), [list(map(list, r)) for r in params.get("rules", [])],
                   params.get("constant"))


def train_builtin(data, weights=None, pool=None, l2: float = 1e-3, epochs: int = 1500,
                  seed: int = 0) -> BuiltinModel:
    """Weighted L2-regularised logistic fit (L-BFGS, at most ``epochs`` iterations).

    ``pool`` (antecedents) adds one indicator feature per conjunction, giving
    the linear model access to pairwise interactions. ``seed`` fixes the
    small random starting point.
    """
    n = data.n
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(
        weights.weights if isinstance(weights, WeightVector) else weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
        raise ConfigError("weights must be non-negative, one per example")
    if l2 < 0:
        raise ConfigError("l2 must be >= 0")
    w = w / w.sum()
    rules = []
    if pool is not None:
        names = data.feature_names
        for a in pool:
            if len(a.literals) > 1:
                rules.append([[names[l.feature], "neg" if l.negated else "pos"] for l in a.literals])
    model = BuiltinModel(np.zeros(0), 0.0, list(data.feature_names), rules)
    y = data.y.astype(float)
    classes = np.unique(y[w > 0])
    if classes.size == 1:
        log.warning("weighted data holds a single class; fitting a constant predictor")
        model.constant = int(classes[0])
        model.coef = np.zeros(data.n_features + len(rules))
        return model
    Z = model.design(data)
    d = Z.shape[1]

    def loss_grad(theta):
        coef, b = theta[:d], theta[d]
        z = Z @ coef + b
        # log(1 + e^z) - y z, computed stably
        loss = np.sum(w * (np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * coef @ coef
        r = w * (_sigmoid(z) - y)
        return loss, np.concatenate([Z.T @ r + l2 * coef, [r.sum()]])

    rng = np.random.default_rng(seed)
    prior = float(np.clip(np.sum(w * y), 1e-6, 1 - 1e-6))
    theta0 = np.concatenate([rng.normal(scale=1e-3, size=d), [math.log(prior / (1 - prior))]])
    res = minimize(loss_grad, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": epochs, "gtol": 1e-9, "ftol": 1e-12})
    model.coef = res.x[:d]
    model.intercept = float(res.x[d])
    return model


def weighted_log_loss(model: BuiltinModel, data, weights) -> float:
    w = np.asarray(weights, dtype=float)
    p = np.clip(_sigmoid(model.decision(data)), 1e-12, 1 - 1e-12)
    y = data.y
    return float(-np.sum(w * (y * np.log(p) + (1 - y) * np.log(1 - p))) / np.sum(w))


MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "mode", "rules", "lambda", "beta", "min_coverage", "alpha",
                 "blackbox", "metadata"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "mode": {"enum": ["corels", "post", "pre", "pre-nocollab"]},
        "rules": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["literals", "consequent"],
                "properties": {
                    "literals": {"type": "array", "items": {
                        "type": "array", "prefixItems": [{"type": "string"}, {"enum": ["pos", "neg"]}],
                        "minItems": 2, "maxItems": 2}},
                    "consequent": {"enum": [0, 1]},
                },
            },
        },
        "lambda": {"type": "number", "minimum": 0},
        "beta": {"type": "number", "minimum": 0},
        "min_coverage": {"type": "number", "minimum": 0, "maximum": 1},
        "alpha": {"type": ["number", "null"], "minimum": 0},
        "default": {"enum": [0, 1, None]},
        "blackbox": {
            "type": ["object", "null"],
            "required": ["kind"],
            "properties": {"kind": {"enum": ["file", "builtin"]}, "path": {"type": "string"},
                           "params": {"type": "object"}},
        },
        "metadata": {"type": "object"},
    },
}


@dataclass
class HybridModel:
    """Rule prefix (over named features) gating a black box."""

    rules: list[tuple[list[tuple[str, str]], int]]
    mode: str
    lam: float
    beta: float
    min_coverage: float
    alpha: float | None = None
    blackbox: dict | None = None
    metadata: dict = field(default_factory=dict)
    default: int | None = None  # corels mode: rule-list default label

    @classmethod
    def from_prefix(cls, prefix: Prefix, feature_names: Sequence[str], **kw) -> "HybridModel":
        rules = []
        for r in prefix.rules:
            lits = [(feature_names[l.feature], "neg" if l.negated else "pos") for l in r.antecedent.literals]
            rules.append((lits, int(r.consequent)))
        return cls(rules, **kw)

    def prefix_for(self, data) -> Prefix:
        rules = []
        for lits, q in self.rules:
            ant = Antecedent(tuple(Literal(data.feature_index(n), pol == "neg") for n, pol in lits))
            rules.append(Rule(ant, q))
        return Prefix().with_rules(rules, data)

    @property
    def builtin(self) -> BuiltinModel | None:
        if self.blackbox and self.blackbox.get("kind") == "builtin":
            return BuiltinModel.from_params(self.blackbox["params"])
        return None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "rules": [{"literals": [list(l) for l in lits], "consequent": q} for lits, q in self.rules],
            "lambda": self.lam,
            "beta": self.beta,
            "min_coverage": self.min_coverage,
            "alpha": self.alpha,
            "default": self.default,
            "blackbox": self.blackbox,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HybridModel":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"model schema version {doc.get('schema_version')!r} is not supported "
                              f"(expected {SCHEMA_VERSION})")
        validate_model(doc)
        rules = [([(n, p) for n, p in r["literals"]], int(r["consequent"])) for r in doc["rules"]]
        return cls(rules, doc["mode"], doc["lambda"], doc["beta"], doc["min_coverage"], doc["alpha"],
                   doc["blackbox"], doc["metadata"], doc.get("default"))

    def save(self, path) -> None:
        doc = self.to_dict()
        validate_model(doc)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "HybridModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def validate_model(doc: dict) -> None:
    import jsonschema

    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid model file: {exc.message}") from None


def _bb_labels(model: HybridModel, data, bb_preds) -> np.ndarray | None:
    if bb_preds is not None:
        labels = bb_preds.labels if isinstance(bb_preds, PredictionSet) else np.asarray(bb_preds)
        if labels.shape != (data.n,):
            raise DataError(f"{labels.size} black-box predictions for {data.n} examples")
        return labels.astype(np.uint8)
    if model.builtin is not None:
        return model.builtin.predict(data).labels
    if model.mode == "corels" and model.default is not None:
        return np.full(data.n, model.default, dtype=np.uint8)
    return None


def predict(model: HybridModel, x, feature_names: Sequence[str], bb_label: int | None = None
            ) -> tuple[int, str]:
    """Label and route ('interpretable' or 'blackbox') for one feature vector."""
    lookup = {n: i for i, n in enumerate(feature_names)}
    for lits, q in model.rules:
        if all((x[lookup[n]] == 1) == (p == "pos") for n, p in lits):
            return q, "interpretable"
    if bb_label is not None:
        return int(bb_label), "blackbox"
    if model.builtin is not None:
        return model.builtin.predict_row(x, feature_names), "blackbox"
    if model.mode == "corels" and model.default is not None:
        return model.default, "blackbox"
    raise DataError("example not captured by the prefix and no black box attached")


def predict_all(model: HybridModel, data, bb_preds=None) -> tuple[np.ndarray, np.ndarray]:
    """Labels and an ``interpretable`` routing flag for every example."""
    prefix = model.prefix_for(data)
    routed = from_mask(prefix.captured, data.n)
    labels = np.zeros(data.n, dtype=np.uint8)
    for r, first in zip(prefix.rules, prefix.firsts):
        labels[from_mask(first, data.n)] = r.consequent
    if not routed.all():
        bb = _bb_labels(model, data, bb_preds)
        if bb is None:
            raise DataError("examples not captured by the prefix and no black box attached")
        labels[~routed] = bb[~routed]
    return labels, routed


def evaluate(model: HybridModel, data, bb_preds=None) -> dict[str, float | None]:
    labels, routed = predict_all(model, data, bb_preds)
    correct = labels == data.y
    n_int = int(routed.sum())
    n_bb = data.n - n_int
    return {
        "accuracy": float(correct.mean()),
        "transparency": n_int / data.n,
        "interpretable_accuracy": float(correct[routed].mean()) if n_int else None,
        "blackbox_accuracy": float(correct[~routed].mean()) if n_bb else None,
        "n": data.n,
    }
