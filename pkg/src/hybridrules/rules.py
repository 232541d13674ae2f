"""Antecedents, prefixes and equivalent-point groups over bit masks."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .bits import from_mask, full_mask, popcount, to_mask
from .errors import DataError

if TYPE_CHECKING:
    from .data import BinaryDataset


@dataclass(frozen=True, order=True)
class Literal:
    feature: int
    negated: bool = False

    def holds(self, x) -> bool:
        return bool(x[self.feature]) != self.negated

    def describe(self, names: Sequence[str] | None = None) -> str:
        name = names[self.feature] if names is not None else f"f{self.feature}"
        return f"not({name})" if self.negated else name


@dataclass(frozen=True)
class Antecedent:
    """Conjunction of literals; the empty conjunction is always true."""

    literals: tuple[Literal, ...] = ()

    def __post_init__(self):
        feats = [lit.feature for lit in self.literals]
        if len(set(feats)) != len(feats):
            raise ValueError("at most one literal per feature")
        object.__setattr__(self, "literals", tuple(sorted(self.literals)))

    @classmethod
    def of(cls, *lits: tuple[int, bool] | int) -> "Antecedent":
        """``Antecedent.of(0, (1, True))`` is f0 and not f1."""
        out = []
        for lit in lits:
            if isinstance(lit, Literal):
                out.append(lit)
            elif isinstance(lit, tuple):
                out.append(Literal(int(lit[0]), bool(lit[1])))
            else:
                out.append(Literal(int(lit)))
        return cls(tuple(out))

    @property
    def always_true(self) -> bool:
        return not self.literals

    @property
    def sort_key(self) -> tuple:
        return (tuple(l.feature for l in self.literals), tuple(l.negated for l in self.literals))

    def matches(self, x) -> bool:
        return all(lit.holds(x) for lit in self.literals)

    def describe(self, names: Sequence[str] | None = None) -> str:
        if self.always_true:
            return "true"
        return " and ".join(lit.describe(names) for lit in self.literals)


ALWAYS_TRUE = Antecedent(())


def capture(a: Antecedent, data: "BinaryDataset") -> int:
    """Mask of the examples satisfying every literal of ``a``."""
    mask = full_mask(data.n)
    for lit in a.literals:
        if not 0 <= lit.feature < data.n_features:
            raise DataError(f"feature index {lit.feature} out of range (D={data.n_features})")
        col = data.columns[lit.feature]
        mask &= (~col & full_mask(data.n)) if lit.negated else col
    return mask


@dataclass(frozen=True)
class Rule:
    antecedent: Antecedent
    consequent: int

    def describe(self, names: Sequence[str] | None = None) -> str:
        return f"if {self.antecedent.describe(names)} then {self.consequent}"


class Prefix:
    """Ordered rules plus cached capture state on the training set.

    ``firsts[i]`` holds the examples whose first matching rule is ``i``;
    ``captured`` is their union and ``errors`` counts mistakes within it.
    ``ids`` carries the pool index of each antecedent (-1 when unknown).
    """

    __slots__ = ("rules", "ids", "firsts", "captured", "n_captured", "errors", "newly")

    def __init__(self, rules=(), ids=(), firsts=(), captured=0, n_captured=0, errors=0, newly=0):
        self.rules: tuple[Rule, ...] = rules
        self.ids: tuple[int, ...] = ids
        self.firsts: tuple[int, ...] = firsts
        self.captured: int = captured
        self.n_captured: int = n_captured
        self.errors: int = errors
        self.newly: int = newly

    @classmethod
    def empty(cls) -> "Prefix":
        return cls()

    @classmethod
    def from_antecedents(cls, antecedents: Sequence[Antecedent], data: "BinaryDataset") -> "Prefix":
        p = cls()
        for a in antecedents:
            p = p.extend(a, data)
        return p

    @property
    def length(self) -> int:
        return len(self.rules)

    @property
    def antecedents(self) -> tuple[Antecedent, ...]:
        return tuple(r.antecedent for r in self.rules)

    def extend(self, a: Antecedent, data: "BinaryDataset", mask: int | None = None,
               pool_id: int = -1) -> "Prefix":
        """Append ``a`` with the consequent minimising error on newly captured examples."""
        if mask is None:
            mask = capture(a, data)
        new = mask & ~self.captured
        n_new = popcount(new)
        ones = popcount(new & data.label_mask)
        zeros = n_new - ones
        if ones > zeros:
            q, err = 1, zeros
        elif zeros > ones:
            q, err = 0, ones
        else:
            q, err = data.majority, ones
        return Prefix(
            self.rules + (Rule(a, q),),
            self.ids + (pool_id,),
            self.firsts + (new,),
            self.captured | new,
            self.n_captured + n_new,
            self.errors + err,
            n_new,
        )

    def with_rules(self, rules: Sequence[Rule], data: "BinaryDataset") -> "Prefix":
        """Rebuild caches for fixed rules (consequents kept as given)."""
        p = Prefix()
        captured = 0
        errors = 0
        firsts = []
        for r in rules:
            new = capture(r.antecedent, data) & ~captured
            ones = popcount(new & data.label_mask)
            errors += (popcount(new) - ones) if r.consequent == 1 else ones
            firsts.append(new)
            captured |= new
        p.rules = tuple(rules)
        p.ids = (-1,) * len(rules)
        p.firsts = tuple(firsts)
        p.captured = captured
        p.n_captured = popcount(captured)
        p.errors = errors
        p.newly = popcount(firsts[-1]) if firsts else 0
        return p

    def assign(self, x) -> tuple[bool, int | None, int | None]:
        for i, r in enumerate(self.rules):
            if r.antecedent.matches(x):
                return True, r.consequent, i
        return False, None, None

    def describe(self, names: Sequence[str] | None = None) -> str:
        lines = []
        for i, r in enumerate(self.rules):
            kw = "if" if i == 0 else "else if"
            lines.append(f"{kw} {r.antecedent.describe(names)} then {r.consequent}")
        lines.append("else black box" if lines else "black box")
        return "\n".join(lines)

    def __repr__(self):
        return f"Prefix(K={self.length}, captured={self.n_captured}, errors={self.errors})"


def extend(p: Prefix, a: Antecedent, data: "BinaryDataset") -> Prefix:
    return p.extend(a, data)


def assign(p: Prefix, x) -> tuple[bool, int | None, int | None]:
    return p.assign(x)


@dataclass(frozen=True)
class Group:
    key: int
    members: tuple[int, ...]
    min_g: int
    maj_g: int
    minority_label: int

    @property
    def size(self) -> int:
        return len(self.members)


class EquivGroups:
    """Partition of the examples by identical feature vector."""

    def __init__(self, data: "BinaryDataset"):
        n = data.n
        X = np.ascontiguousarray(data.X, dtype=np.uint8)
        if n == 0:
            raise DataError("empty dataset")
        _, inverse = np.unique(X, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        y = data.y.astype(np.int64)
        n_groups = int(inverse.max()) + 1
        sizes = np.bincount(inverse, minlength=n_groups)
        ones = np.bincount(inverse, weights=y, minlength=n_groups).astype(np.int64)
        zeros = sizes - ones
        self.n = n
        self.inverse = inverse
        self.sizes = sizes
        self.min_g = np.minimum(ones, zeros)
        self.maj_g = sizes - self.min_g
        # ties: minority label 0
        self.minority_label = np.where(ones < zeros, 1, 0)
        order = np.argsort(inverse, kind="stable")
        starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        rank = np.empty(n, dtype=np.int64)
        rank[order] = np.arange(n) - np.repeat(starts, sizes)
        self._rank = rank
        first = np.full(n_groups, n, dtype=np.int64)
        np.minimum.at(first, inverse, np.arange(n))
        self.representatives = first
        self._keys = [hash(X[i].tobytes()) for i in first]

        # minority members realise incons(); for tie groups use label 0 members
        is_minority = (y == self.minority_label[inverse]) & (self.min_g[inverse] > 0)
        self.incons_mask = to_mask(is_minority)
        self.total = int(self.min_g.sum())
        self.consistent_mask = to_mask(self.min_g[inverse] == 0)

        # inconsistent groups sorted by minority ratio, for the no-collaboration bound
        inc = np.flatnonzero(self.min_g > 0)
        inc = sorted(inc.tolist(), key=lambda g: (Fraction(int(self.min_g[g]), int(sizes[g])), g))
        self.inconsistent = [(int(first[g]), int(self.min_g[g]), int(sizes[g])) for g in inc]

    def __len__(self):
        return len(self.sizes)

    @property
    def groups(self) -> list[Group]:
        members: list[list[int]] = [[] for _ in range(len(self))]
        for i, g in enumerate(self.inverse):
            members[g].append(i)
        return [
            Group(self._keys[g], tuple(members[g]), int(self.min_g[g]), int(self.maj_g[g]),
                  int(self.minority_label[g]))
            for g in range(len(self))
        ]

    def floor_mask(self, per_group_floor: np.ndarray) -> int:
        """Mask selecting ``per_group_floor[g]`` members of each group ``g``."""
        return to_mask(self._rank < np.asarray(per_group_floor)[self.inverse])

    def incons_of(self, subset_mask: int) -> int:
        inside = from_mask(subset_mask, self.n)
        hit = np.bincount(self.inverse, weights=inside, minlength=len(self)).astype(np.int64)
        if np.any((hit != 0) & (hit != self.sizes)):
            raise DataError("mask splits an equivalence group")
        return int(self.min_g[hit == self.sizes].sum())


def equiv_groups(data: "BinaryDataset") -> EquivGroups:
    return EquivGroups(data)


def incons_of(groups: EquivGroups, subset_mask: int) -> int:
    return groups.incons_of(subset_mask)
