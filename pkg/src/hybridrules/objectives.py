"""Objective functions and lower bounds for the four search modes.

Every value is exact: error counts are integers and the regularisers are
decimal-exact rationals, so comparisons inside the search never depend on
float rounding. ``ObjectiveValue.total`` gives the float for reporting.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering

import numpy as np

from .bits import exact, popcount, to_mask
from .errors import ConfigError, DataError
from .rules import EquivGroups, Prefix

log = logging.getLogger(__name__)

MODES = ("corels", "post", "pre", "pre-nocollab")


def auto_beta(n: int, lam) -> Fraction:
    """Transparency tie-break weight min(1/(2n), lam/2)."""
    if n < 1:
        raise ConfigError("need at least one example")
    lam = exact(lam)
    if lam <= 0:
        raise ConfigError("lambda must be positive for the automatic beta")
    return min(Fraction(1, 2 * n), lam / 2)


@dataclass(frozen=True)
class ObjectiveSpec:
    mode: str = "pre"
    lam: float = 0.01
    beta: float | None = None  # None: auto_beta
    min_coverage: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.beta is not None and self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if not 0.0 <= self.min_coverage <= 1.0:
            raise ConfigError("min_coverage must be in [0, 1]")

    def resolved_beta(self, n: int) -> Fraction:
        if self.mode == "corels":
            return Fraction(0)
        if self.beta is None:
            return auto_beta(n, self.lam)
        return exact(self.beta)


@total_ordering
@dataclass(frozen=True)
class ObjectiveValue:
    """error/error_den + lam*length + beta*uncaptured/n."""

    error: int
    error_den: int
    length: int
    uncaptured: int
    n: int
    lam: Fraction
    beta: Fraction

    @property
    def error_exact(self) -> Fraction:
        return Fraction(self.error, self.error_den)

    @property
    def exact(self) -> Fraction:
        return self.error_exact + self.lam * self.length + self.beta * Fraction(self.uncaptured, self.n)

    @property
    def error_term(self) -> float:
        return float(self.error_exact)

    @property
    def sparsity_term(self) -> float:
        return float(self.lam * self.length)

    @property
    def transparency_term(self) -> float:
        return float(self.beta * Fraction(self.uncaptured, self.n))

    @property
    def total(self) -> float:
        return float(self.exact)

    def __float__(self):
        return self.total

    def __eq__(self, other):
        if isinstance(other, ObjectiveValue):
            return self.exact == other.exact
        return NotImplemented

    def __lt__(self, other):
        if isinstance(other, ObjectiveValue):
            return self.exact < other.exact
        return NotImplemented

    def __hash__(self):
        return hash(self.exact)

    def as_dict(self) -> dict:
        return {"total": self.total, "error": self.error, "error_den": self.error_den,
                "length": self.length, "uncaptured": self.uncaptured,
                "error_term": self.error_term, "sparsity_term": self.sparsity_term,
                "transparency_term": self.transparency_term}


def _uncaptured(p: Prefix, data) -> int:
    return data.n - p.n_captured


def default_label(p: Prefix, data) -> int:
    """Label minimising errors on the uncaptured examples (ties: training majority)."""
    unc = _uncaptured(p, data)
    ones = popcount(data.label_mask & ~p.captured)
    if 2 * ones > unc:
        return 1
    if 2 * ones < unc:
        return 0
    return data.majority


def obj_corels(p: Prefix, data, lam, default: int | None = None) -> ObjectiveValue:
    if default is None:
        default = default_label(p, data)
    unc = _uncaptured(p, data)
    ones = popcount(data.label_mask & ~p.captured)
    default_err = unc - ones if default == 1 else ones
    return ObjectiveValue(p.errors + default_err, data.n, p.length, 0, data.n, exact(lam), Fraction(0))


def lb_corels(p: Prefix, groups: EquivGroups, data, lam) -> ObjectiveValue:
    unavoidable = popcount(groups.incons_mask & ~p.captured)
    return ObjectiveValue(p.errors + unavoidable, data.n, p.length + 1, 0, data.n, exact(lam), Fraction(0))


def _check_preds(bb_preds, data) -> np.ndarray:
    preds = np.asarray(bb_preds)
    if preds.shape != (data.n,):
        raise DataError(f"black-box predictions have length {preds.size}, expected {data.n}")
    if not np.isin(preds, (0, 1)).all():
        raise DataError("non-binary prediction")
    return preds.astype(np.uint8)


def obj_post(p: Prefix, bb_preds, data, lam, beta) -> ObjectiveValue:
    preds = _check_preds(bb_preds, data)
    bb_err = popcount(to_mask(preds != data.y) & ~p.captured)
    unc = _uncaptured(p, data)
    return ObjectiveValue(p.errors + bb_err, data.n, p.length, unc, data.n, exact(lam), exact(beta))


def obj_pre(p: Prefix, groups: EquivGroups, data, lam, beta) -> ObjectiveValue:
    unavoidable = popcount(groups.incons_mask & ~p.captured)
    unc = _uncaptured(p, data)
    return ObjectiveValue(p.errors + unavoidable, data.n, p.length, unc, data.n, exact(lam), exact(beta))


def obj_pre_nocollab(p: Prefix, data, lam, beta) -> ObjectiveValue:
    if p.n_captured == 0:
        raise DataError("empty capture: error rate undefined")
    unc = _uncaptured(p, data)
    return ObjectiveValue(p.errors, p.n_captured, p.length, unc, data.n, exact(lam), exact(beta))


def _nocollab_extension(p: Prefix, groups: EquivGroups, optimal: bool) -> tuple[int, int]:
    """Errors and size of the best-rate superset built from whole uncaptured groups.

    ``optimal=False`` reproduces the single-pass selector that compares every
    group against the prefix's own rate; ``optimal=True`` compares against the
    running rate, which yields the true minimum (groups sorted by ratio).
    """
    err, size = p.errors, p.n_captured
    e0, s0 = err, size
    # consistent groups have ratio 0 and are always taken
    size += popcount(groups.consistent_mask & ~p.captured)
    captured = p.captured
    for rep, m, s in groups.inconsistent:
        if (captured >> rep) & 1:
            continue
        if optimal:
            take = m * size <= err * s
        else:
            take = m * s0 <= e0 * s
        if not take:
            break
        err += m
        size += s
    return err, size


def lb_pre_nocollab(p: Prefix, groups: EquivGroups, data, lam, selector: str = "optimal") -> ObjectiveValue:
    """Lower bound on the no-collaboration objective of any strict extension of ``p``.

    ``selector="one-shot"`` evaluates the group selector against the prefix's
    current rate only; it can exceed the objective of an extension and is kept
    for comparison. The search uses ``"optimal"``.
    """
    if p.n_captured == 0:
        raise DataError("empty capture: error rate undefined")
    if selector not in ("optimal", "one-shot"):
        raise ConfigError(f"unknown selector {selector!r}")
    err, size = _nocollab_extension(p, groups, selector == "optimal")
    return ObjectiveValue(err, size, p.length + 1, 0, data.n, exact(lam), Fraction(0))


def check_transparency(p: Prefix, data, psi) -> bool:
    return Fraction(p.n_captured, data.n) >= exact(psi)


def post_floor_mask(groups: EquivGroups, bb_preds, data) -> int:
    """Unavoidable-error mask for post mode.

    Equals the inconsistency mask when the black box is a function of the
    binary feature vector. Otherwise a group may be split by the black box and
    its floor drops to the black box's own error count on that group.
    """
    preds = _check_preds(bb_preds, data)
    wrong = (preds != data.y).astype(np.int64)
    bb_err = np.bincount(groups.inverse, weights=wrong, minlength=len(groups)).astype(np.int64)
    floor = np.minimum(groups.min_g, bb_err)
    if np.array_equal(floor, groups.min_g):
        return groups.incons_mask
    log.warning("black-box predictions differ within %d equivalence groups; using a weaker bound",
                int((floor < groups.min_g).sum()))
    return groups.floor_mask(floor)


class Scorer:
    """Objective and bound evaluation on an integer scale for the search loop.

    Keys are ``value * scale`` with ``scale = n * den(lam) * den(beta)``, so
    every mode except pre-nocollab stays in exact integers.
    """

    def __init__(self, spec: ObjectiveSpec, data, groups: EquivGroups, bb_preds=None):
        self.spec = spec
        self.mode = spec.mode
        self.data = data
        self.groups = groups
        self.n = data.n
        self.lam = exact(spec.lam)
        self.beta = spec.resolved_beta(data.n)
        b, d = self.lam.denominator, self.beta.denominator
        self.scale = self.n * b * d
        self.err_w = b * d
        self.len_w = self.lam.numerator * d * self.n
        self.unc_w = self.beta.numerator * b
        self.floor_mask = groups.incons_mask
        self.bb_err_mask = 0
        if self.mode == "post":
            if bb_preds is None:
                raise ConfigError("post mode needs black-box training predictions")
            preds = _check_preds(bb_preds, data)
            self.bb_err_mask = to_mask(preds != data.y)
            self.floor_mask = post_floor_mask(groups, preds, data)

    def lb(self, p: Prefix):
        if self.mode == "pre-nocollab":
            if p.n_captured == 0:
                return (p.length + 1) * self.len_w
            err, size = _nocollab_extension(p, self.groups, True)
            return Fraction(err * self.scale, size) + (p.length + 1) * self.len_w
        unavoidable = popcount(self.floor_mask & ~p.captured)
        return (p.errors + unavoidable) * self.err_w + (p.length + 1) * self.len_w

    def obj(self, p: Prefix):
        """Scaled objective, or None when undefined (empty prefix, no-collab mode)."""
        unc = self.n - p.n_captured
        mode = self.mode
        if mode == "pre-nocollab":
            if p.n_captured == 0:
                return None
            return Fraction(p.errors * self.scale, p.n_captured) + p.length * self.len_w + unc * self.unc_w
        if mode == "pre":
            err = p.errors + popcount(self.groups.incons_mask & ~p.captured)
        elif mode == "post":
            err = p.errors + popcount(self.bb_err_mask & ~p.captured)
        else:
            ones = popcount(self.data.label_mask & ~p.captured)
            err = p.errors + min(ones, unc - ones)
            unc = 0
        return err * self.err_w + p.length * self.len_w + unc * self.unc_w

    def value(self, p: Prefix) -> ObjectiveValue:
        mode = self.mode
        if mode == "corels":
            return obj_corels(p, self.data, self.lam)
        if mode == "pre":
            return obj_pre(p, self.groups, self.data, self.lam, self.beta)
        if mode == "pre-nocollab":
            return obj_pre_nocollab(p, self.data, self.lam, self.beta)
        unc = self.n - p.n_captured
        err = p.errors + popcount(self.bb_err_mask & ~p.captured)
        return ObjectiveValue(err, self.n, p.length, unc, self.n, self.lam, self.beta)

    def to_float(self, key) -> float:
        return float(Fraction(key) / self.scale)
