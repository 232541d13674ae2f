"""Log-domain evaluation of the hybrid-model generalisation bound.

B(eps, C) = C^M + Cb^M + Hc[(Cb e^-eps + C)^M - C^M] + Hs[(C e^-eps + Cb)^M - Cb^M]

with C the transparency, Cb = 1 - C, and Hc, Hs the sizes of the black-box
and interpretable hypothesis spaces. Both brackets are non-negative, so each
is computed as a log-difference and the four terms are combined with
log-sum-exp. Hypothesis-space sizes enter only through their logarithms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.special import logsumexp

from .errors import ConfigError

SWEEP_GRID = np.round(np.linspace(0.015, 0.995, 197), 3)


@dataclass(frozen=True)
class BoundParams:
    log_hc: float
    log_hs: float
    m: int

    def __post_init__(self):
        if self.log_hs > self.log_hc:
            raise ConfigError("the interpretable space cannot be larger than the black-box space")
        if self.log_hs < 0:
            raise ConfigError("hypothesis spaces need at least one element")
        if self.m < 1:
            raise ConfigError("m must be >= 1")

    @classmethod
    def from_ratio(cls, log_hs: float, ratio: float, m: int) -> "BoundParams":
        """Black-box space ``ratio`` times larger than the interpretable one."""
        return cls(log_hs + math.log(ratio), log_hs, m)

    @property
    def ratio(self) -> float:
        return math.exp(self.log_hc - self.log_hs)


def log1mexp(x):
    """log(1 - exp(x)) for x <= 0, accurate on both sides of -ln 2."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        near = x > -math.log(2)
        out = np.where(near, np.log(-np.expm1(np.where(near, x, -1.0))),
                       np.log1p(-np.exp(np.where(near, -1.0, x))))
    return np.where(x == 0, -np.inf, out)


def _log(v: float) -> float:
    return math.log(v) if v > 0 else -math.inf


def _log_bracket(log_mix, ratio_log, m):
    # log(mix^M - low^M) with ratio_log = log(mix/low) >= 0
    return m * log_mix + log1mexp(-m * ratio_log)


def log_bound_B(eps, c: float, params: BoundParams):
    """Natural log of B for scalar or array ``eps``."""
    if not 0.0 <= c <= 1.0:
        raise ConfigError("transparency must lie in [0, 1]")
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0) or np.any(eps > 1):
        raise ConfigError("eps must lie in (0, 1]")
    m = params.m
    cb = 1.0 - c
    lc, lcb = _log(c), _log(cb)
    with np.errstate(divide="ignore", invalid="ignore"):
        # bracket against Hc: mix = C + Cb e^-eps, mix/C = 1 + (Cb/C) e^-eps
        log_mix_c = np.logaddexp(lc, lcb - eps)
        ratio_c = np.log1p(cb / c * np.exp(-eps)) if c > 0 else np.full(eps.shape, np.inf)
        br_c = _log_bracket(log_mix_c, ratio_c, m)
        log_mix_s = np.logaddexp(lcb, lc - eps)
        ratio_s = np.log1p(c / cb * np.exp(-eps)) if cb > 0 else np.full(eps.shape, np.inf)
        br_s = _log_bracket(log_mix_s, ratio_s, m)
    terms = np.stack(np.broadcast_arrays(m * lc, m * lcb, params.log_hc + br_c, params.log_hs + br_s))
    out = logsumexp(terms, axis=0)
    return float(out) if out.ndim == 0 else out


def bound_B(eps, c: float, params: BoundParams):
    """B itself (overflows to inf only if the true value exceeds float range)."""
    return np.exp(log_bound_B(eps, c, params))


def _grid(n: int, method: str) -> tuple[np.ndarray, float]:
    if method == "simpson":
        # geometric nodes resolve the e^{-eps M} layer near zero for any M
        return np.geomspace(1e-10, 1.0, n), 1e-10
    if method == "trapezoid":
        return np.linspace(1.0 / n, 1.0, n), 1.0 / n
    raise ConfigError(f"unknown quadrature {method!r}")


def normalized_auc(c: float, params: BoundParams, n: int = 4096, method: str = "simpson") -> float:
    """Integral of B over eps in (0, 1], divided by Hs.

    The division happens on the log scale before exponentiation. The first
    node's value is carried back to zero as a rectangle.
    """
    if n < 64:
        raise ConfigError("quadrature needs at least 64 points")
    eps, gap = _grid(n, method)
    vals = np.exp(log_bound_B(eps, c, params) - params.log_hs)
    if method == "simpson":
        body = simpson(vals, x=eps)
    else:
        body = np.trapezoid(vals, eps) if hasattr(np, "trapezoid") else np.trapz(vals, eps)
    return float(body + vals[0] * gap)


@dataclass
class AUCSweep:
    grid: np.ndarray
    auc: np.ndarray
    argmin: int

    @property
    def best_transparency(self) -> float:
        return float(self.grid[self.argmin])

    @property
    def interior(self) -> bool:
        return 0 < self.argmin < len(self.grid) - 1

    def summary(self) -> dict:
        return {"argmin": self.best_transparency, "argmin_index": int(self.argmin),
                "min_auc": float(self.auc[self.argmin]), "interior": bool(self.interior),
                "auc_first": float(self.auc[0]), "auc_last": float(self.auc[-1])}


def sweet_spot_sweep(params: BoundParams, grid=None, n: int = 4096, method: str = "simpson") -> AUCSweep:
    grid = SWEEP_GRID if grid is None else np.asarray(grid, dtype=float)
    if grid.size < 1 or np.any(grid <= 0) or np.any(grid >= 1) or np.any(np.diff(grid) <= 0):
        raise ConfigError("grid must be strictly increasing inside (0, 1)")
    auc = np.array([normalized_auc(float(c), params, n, method) for c in grid])
    if not np.all(np.isfinite(auc)):
        raise ArithmeticError("non-finite AUC value")
    return AUCSweep(grid, auc, int(np.argmin(auc)))


def tree_space_size(depth: int, n_features: int) -> float:
    """Log-count of complete depth-``depth`` trees with a distinct feature per level."""
    if depth < 1:
        raise ConfigError("depth must be >= 1")
    if n_features < depth:
        raise ConfigError("need at least one unused feature per level")
    return (2 ** depth) * math.log(2) + sum((2 ** l) * math.log(n_features - l) for l in range(depth))
