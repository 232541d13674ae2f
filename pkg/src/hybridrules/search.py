"""Branch-and-bound over the prefix tree with a transparency hard constraint."""
from __future__ import annotations

import gc
import heapq
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .bits import ceil_fraction_of, popcount
from .errors import ConfigError, InfeasibleError
from .objectives import ObjectiveSpec, ObjectiveValue, Scorer, check_transparency
from .rules import ALWAYS_TRUE, Antecedent, EquivGroups, Prefix, capture, equiv_groups

log = logging.getLogger(__name__)

POLICIES = ("bfs", "objective", "lower-bound")
_POLICY_ALIASES = {"objective-guided": "objective", "lower-bound-guided": "lower-bound",
                   "lb": "lower-bound", "curious": "objective"}

OPTIMAL = "optimal"
TIME_LIMIT = "time-limit"
MEMORY_LIMIT = "memory-limit"

# rough per-entry footprints for memory accounting (bytes, excluding masks)
NODE_OVERHEAD = 250
MAP_ENTRY_OVERHEAD = 250


def normalize_policy(policy: str) -> str:
    policy = _POLICY_ALIASES.get(policy, policy)
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    return policy


@dataclass
class SearchConfig:
    mode: str = "pre"
    lam: float = 0.01
    beta: float | None = None
    min_coverage: float = 0.0
    policy: str = "lower-bound"
    min_support: float = 0.0
    support_on: str = "newly"  # or "raw": filter antecedents by their own support
    max_length: int = 10
    time_limit: float | None = None
    memory_limit: int | None = None
    use_permutation_map: bool = True
    initial_prefix: Sequence[Antecedent] | None = None

    def __post_init__(self):
        self.policy = normalize_policy(self.policy)
        if self.support_on not in ("newly", "raw"):
            raise ConfigError("support_on must be 'newly' or 'raw'")
        if not 0.0 <= self.min_support < 1.0:
            raise ConfigError("min_support must be in [0, 1)")
        if self.max_length < 0:
            raise ConfigError("max_length must be >= 0")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ConfigError("time_limit must be positive")
        if self.memory_limit is not None and self.memory_limit <= 0:
            raise ConfigError("memory_limit must be positive")
        self.objective = ObjectiveSpec(self.mode, self.lam, self.beta, self.min_coverage)


@dataclass
class SearchStats:
    nodes_explored: int = 0
    nodes_evaluated: int = 0
    pruned_bound: int = 0
    pruned_permutation: int = 0
    pruned_support: int = 0
    peak_queue: int = 0
    best_updates: int = 0
    wall_time: float = 0.0


@dataclass
class ProgressEvent:
    time: float
    objective: float
    coverage: float
    length: int


@dataclass
class SearchResult:
    prefix: Prefix
    objective: ObjectiveValue
    status: str
    stats: SearchStats
    progress: list[ProgressEvent] = field(default_factory=list)
    beta: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def priority_key(prefix: Prefix, lb, obj, policy: str, seq: int) -> tuple:
    """Smaller is popped first; ``seq`` (insertion order) breaks ties FIFO."""
    if policy == "bfs":
        return (prefix.length, seq)
    if policy == "lower-bound":
        return (lb, seq)
    return (lb if obj is None else obj, seq)


def permutation_filter(pmap: dict, prefix: Prefix, token=None) -> bool:
    """Keep ``prefix`` unless a permutation of its antecedent set with no more errors was seen.

    A kept prefix replaces the stored entry; ``token`` identifies it so that a
    queued node whose entry was replaced can be recognised later.
    """
    key = tuple(sorted(prefix.ids))
    held = pmap.get(key)
    if held is not None and held[0] <= prefix.errors:
        return False
    pmap[key] = (prefix.errors, token)
    return True


def support_prune(newly_captured: int, n: int, min_support_frac) -> bool:
    """True when the extension should be dropped."""
    if newly_captured == 0:
        return True
    return newly_captured < ceil_fraction_of(min_support_frac, n)


def anytime_check(start: float, time_limit: float | None, mem_bytes: int,
                  memory_limit: int | None) -> str | None:
    if time_limit is not None and time.monotonic() - start >= time_limit:
        return TIME_LIMIT
    if memory_limit is not None and mem_bytes > memory_limit:
        return MEMORY_LIMIT
    return None


def optimize(data, pool, groups: EquivGroups | None = None, cfg: SearchConfig | None = None,
             bb_preds=None, on_improve: Callable[[ProgressEvent, Prefix], None] | None = None
             ) -> SearchResult:
    """Return the constraint-satisfying prefix over ``pool`` minimising the mode objective."""
    cfg = cfg or SearchConfig()
    start = time.monotonic()
    if groups is None:
        groups = equiv_groups(data)
    antecedents = list(pool)
    masks = [capture(a, data) for a in antecedents]
    n = data.n
    scorer = Scorer(cfg.objective, data, groups, bb_preds)
    psi = cfg.min_coverage
    stats = SearchStats()
    progress: list[ProgressEvent] = []

    support_floor = ceil_fraction_of(cfg.min_support, n)
    if cfg.support_on == "raw":
        active = [i for i, m in enumerate(masks) if popcount(m) >= max(support_floor, 1)]
        stats.pruned_support += len(masks) - len(active)
        newly_floor = 1
    else:
        active = list(range(len(masks)))
        newly_floor = max(support_floor, 1)

    initial = Prefix.empty()
    for a in (cfg.initial_prefix if cfg.initial_prefix is not None else [ALWAYS_TRUE]):
        initial = initial.extend(a, data)
    if not check_transparency(initial, data, psi):
        raise InfeasibleError("initial prefix violates the transparency constraint")
    best = initial
    best_key = scorer.obj(initial)
    if best_key is None:
        raise ConfigError("initial prefix has an undefined objective")

    def consider(p: Prefix, key):
        nonlocal best, best_key
        stats.nodes_evaluated += 1
        if key is not None and key < best_key and check_transparency(p, data, psi):
            best, best_key = p, key
            stats.best_updates += 1
            ev = ProgressEvent(time.monotonic() - start, scorer.to_float(key), p.n_captured / n, p.length)
            progress.append(ev)
            log.info("t=%.3fs objective=%.6f coverage=%.4f length=%d", ev.time, ev.objective,
                     ev.coverage, ev.length)
            if on_improve is not None:
                on_improve(ev, p)

    # queue entries hold only antecedent ids; prefixes are rebuilt when popped
    bytes_per_node = NODE_OVERHEAD
    bytes_per_entry = MAP_ENTRY_OVERHEAD
    pmap: dict = {}
    heap: list = []
    seq = 0
    root = Prefix.empty()
    root_lb = scorer.lb(root)
    root_obj = scorer.obj(root)
    consider(root, root_obj)
    status = OPTIMAL
    if cfg.max_length > 0:
        heapq.heappush(heap, (*priority_key(root, root_lb, root_obj, cfg.policy, seq), root_lb, ()))
        seq += 1

    def rebuild(ids):
        p = root
        for i in ids:
            p = p.extend(antecedents[i], data, masks[i], i)
        return p

    policy = cfg.policy
    max_len = cfg.max_length
    use_map = cfg.use_permutation_map
    check_every = 32
    compact_at = 1 << 16

    def compact():
        # drop queued entries that can no longer beat the incumbent or were superseded
        nonlocal heap
        keep = []
        for e in heap:
            if e[-2] >= best_key:
                stats.pruned_bound += 1
                continue
            if use_map and e[-1]:
                held = pmap.get(tuple(sorted(e[-1])))
                if held is not None and held[1] != e[-3]:
                    continue
            keep.append(e)
        heapq.heapify(keep)
        heap = keep

    gc_was_enabled = gc.isenabled()
    gc.disable()  # nodes hold no reference cycles; collection passes only cost time
    try:
        while heap:
            halt = anytime_check(start, cfg.time_limit, 0, None)
            if halt:
                status = halt
                break
            entry = heapq.heappop(heap)
            node_seq, node_lb, ids = entry[-3], entry[-2], entry[-1]
            if use_map and ids:
                held = pmap.get(tuple(sorted(ids)))
                if held is not None and held[1] != node_seq:
                    continue  # superseded by a better permutation
            if node_lb >= best_key:
                stats.pruned_bound += 1
                continue
            stats.nodes_explored += 1
            parent = rebuild(ids)
            used = set(ids)
            child_len = parent.length + 1
            halted = None
            for count, i in enumerate(active):
                if i in used:
                    continue
                if count % check_every == 0 and cfg.time_limit is not None:
                    halted = anytime_check(start, cfg.time_limit, 0, None)
                    if halted:
                        break
                mask = masks[i]
                if popcount(mask & ~parent.captured) < newly_floor:
                    stats.pruned_support += 1
                    continue
                child = parent.extend(antecedents[i], data, mask, i)
                obj = scorer.obj(child)
                consider(child, obj)
                if child_len >= max_len:
                    continue
                lb = scorer.lb(child)
                if lb >= best_key:
                    stats.pruned_bound += 1
                    continue
                if use_map and not permutation_filter(pmap, child, seq):
                    stats.pruned_permutation += 1
                    continue
                if cfg.memory_limit is not None:
                    mem = (len(heap) + 1) * bytes_per_node + len(pmap) * bytes_per_entry
                    halted = anytime_check(start, None, mem, cfg.memory_limit)
                    if halted:
                        break
                heapq.heappush(heap, (*priority_key(child, lb, obj, policy, seq), lb, child.ids))
                seq += 1
            if len(heap) > stats.peak_queue:
                stats.peak_queue = len(heap)
            if len(heap) >= compact_at:
                compact()
                compact_at = max(2 * len(heap), 1 << 16)
            if halted:
                status = halted
                break
    finally:
        if gc_was_enabled:
            gc.enable()

    stats.wall_time = time.monotonic() - start
    if status != OPTIMAL:
        log.info("search halted: %s after %.2fs", status, stats.wall_time)
    return SearchResult(best, scorer.value(best), status, stats, progress, float(scorer.beta))
