"""Caching edges: memoized matched-principal lists stored in the graph.

A caching edge ``(s, o, MP)`` lets later requests from ``s`` on ``o`` skip
principal matching. Entries are purged when the graph or the
principal-matching policy changes, and can be bounded by a global count,
a per-node out-degree and an idle age measured in evaluations.
"""

from __future__ import annotations

import enum
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import ConfigurationError
from .graph import ChangeEvent, Edge, EdgeKind, SystemGraph

if TYPE_CHECKING:
    from .engine import Engine

logger = logging.getLogger(__name__)


class Invalidation(enum.Enum):
    FLUSH_ALL = "flush"
    # heuristic; not sound in general
    SCOPED_BY_SUBJECT = "subject"


@dataclass
class CacheConfig:
    enabled: bool = True
    write_on_eval: bool = True
    invalidation: Invalidation = Invalidation.FLUSH_ALL
    max_total: int | None = None
    max_out_degree: int | None = None
    retirement_age: int | None = None
    recent_k: int = 16

    def __post_init__(self):
        for name in ("max_total", "max_out_degree", "retirement_age"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigurationError(f"cache.{name} must be >= 1, got {value}")
        if self.recent_k < 1:
            raise ConfigurationError(f"cache.recent_k must be >= 1, got {self.recent_k}")


@dataclass
class CacheEntryMeta:
    created_rev: int
    created_seq: int
    last_hit: int


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    inserts: int = 0
    evictions: int = 0
    purged: int = 0
    retired: int = 0


class CacheManager:
    """Owns the caching edges of one graph.

    ``seq`` is the evaluation sequence number, advanced by :meth:`tick` once
    per evaluation; retirement ages are measured against it.
    """

    def __init__(self, graph: SystemGraph, config: CacheConfig | None = None):
        self.graph = graph
        self.config = config or CacheConfig()
        self.meta: dict[tuple[str, str], CacheEntryMeta] = {}
        self.stats = CacheStats()
        self.seq = 0
        self.last_invalidation_rev = graph.revision
        # caching edges already present (e.g. loaded from a file)
        for edge in graph.edges(EdgeKind.CACHING):
            self.meta[(edge.src, edge.dst)] = CacheEntryMeta(graph.revision, 0, 0)

    @property
    def enabled(self) -> bool:
        return self.config.enabled

    def __len__(self) -> int:
        return len(self.meta)

    def tick(self) -> int:
        self.seq += 1
        self.retire()
        return self.seq

    def lookup(self, s: str, o: str) -> list[str] | None:
        edge = self.graph.caching_edge(s, o)
        meta = self.meta.get((s, o))
        if edge is None or meta is None:
            self.stats.misses += 1
            return None
        age = self.config.retirement_age
        if age is not None and self.seq - meta.last_hit > age:
            self._drop(s, o)
            self.stats.retired += 1
            self.stats.misses += 1
            return None
        meta.last_hit = self.seq
        self.stats.hits += 1
        return list(edge.label)

    def insert(self, s: str, o: str, principals: Sequence[str]) -> bool:
        label = tuple(principals)
        existing = self.graph.caching_edge(s, o)
        if existing is not None and existing.label == label:
            return False
        if existing is None:
            self._make_room(s)
        self.graph.add_edge(s, o, EdgeKind.CACHING, label)
        self.meta[(s, o)] = CacheEntryMeta(self.graph.revision, self.seq, self.seq)
        self.stats.inserts += 1
        return True

    def _eviction_order(self, keys: Iterable[tuple[str, str]]) -> list[tuple[str, str]]:
        # least recently hit first, then oldest
        return sorted(keys, key=lambda k: (self.meta[k].last_hit, self.meta[k].created_rev, k))

    def _make_room(self, s: str) -> None:
        limit = self.config.max_out_degree
        if limit is not None:
            own = [k for k in self.meta if k[0] == s]
            for key in self._eviction_order(own)[: max(0, len(own) - limit + 1)]:
                self._drop(*key)
                self.stats.evictions += 1
        limit = self.config.max_total
        if limit is not None and len(self.meta) >= limit:
            for key in self._eviction_order(self.meta)[: len(self.meta) - limit + 1]:
                self._drop(*key)
                self.stats.evictions += 1

    def _drop(self, s: str, o: str) -> None:
        edge = self.graph.caching_edge(s, o)
        self.meta.pop((s, o), None)
        if edge is not None:
            self.graph.remove_edge(s, o, EdgeKind.CACHING, edge.label)

    def flush(self) -> int:
        count = len(self.meta)
        for key in list(self.meta):
            self._drop(*key)
        # caching edges the manager did not know about
        for edge in self.graph.edges(EdgeKind.CACHING):
            self.graph.remove_edge(edge.src, edge.dst, edge.kind, edge.label)
            count += 1
        self.last_invalidation_rev = self.graph.revision
        self.stats.purged += count
        return count

    def invalidate(self, event: ChangeEvent | None = None) -> int:
        """Purge entries affected by a change; ``None`` means a policy change."""
        if event is not None and event.edge.kind is EdgeKind.CACHING:
            return 0
        if event is None or self.config.invalidation is Invalidation.FLUSH_ALL:
            return self.flush()
        return self.purge_subject(event.edge.src)

    def purge_subject(self, node: str) -> int:
        """Drop every caching edge leaving ``node``."""
        victims = [k for k in self.meta if k[0] == node]
        for key in victims:
            self._drop(*key)
        self.stats.purged += len(victims)
        return len(victims)

    def retire(self) -> int:
        age = self.config.retirement_age
        if age is None:
            return 0
        stale = [k for k, m in self.meta.items() if self.seq - m.last_hit > age]
        for key in stale:
            self._drop(*key)
        self.stats.retired += len(stale)
        return len(stale)

    def out_degree(self, node: str) -> int:
        return self.graph.caching_out_degree(node)

    def check_invariants(self) -> list[str]:
        """Describe any violated threshold or bookkeeping invariant."""
        problems = []
        edges = self.graph.edges(EdgeKind.CACHING)
        if {(e.src, e.dst) for e in edges} != set(self.meta):
            problems.append("caching edges and metadata disagree")
        if self.config.max_total is not None and len(edges) > self.config.max_total:
            problems.append(f"{len(edges)} caching edges exceed max_total")
        if self.config.max_out_degree is not None:
            for node in self.graph.nodes:
                if self.graph.caching_out_degree(node) > self.config.max_out_degree:
                    problems.append(f"caching out-degree of {node} exceeds max_out_degree")
        for key, meta in self.meta.items():
            if meta.created_rev < self.last_invalidation_rev:
                problems.append(f"caching edge {key} predates the last invalidation")
            if meta.last_hit < meta.created_seq:
                problems.append(f"caching edge {key} hit before creation")
        return problems


@dataclass(frozen=True)
class SubjectFocused:
    """Pair the ``recent_k`` most recently active subjects with ``targets``."""

    recent_k: int
    targets: tuple[str, ...] = ()


@dataclass(frozen=True)
class ObjectFocused:
    """Pair ``objects`` with ``subjects`` (recently active subjects when empty)."""

    objects: tuple[str, ...]
    subjects: tuple[str, ...] = field(default=())


def candidate_pairs(engine: Engine, strategy: SubjectFocused | ObjectFocused) -> list[tuple[str, str]]:
    recent = engine.recent_subjects()
    if isinstance(strategy, SubjectFocused):
        subjects = recent[: strategy.recent_k]
        objects = list(strategy.targets)
    else:
        subjects = list(strategy.subjects) or recent
        objects = list(strategy.objects)
    return [(s, o) for s in subjects for o in objects]


def precache(engine: Engine, strategy: SubjectFocused | ObjectFocused, budget: int) -> int:
    """Insert caching edges for up to ``budget`` uncached pairs.

    Only principal matching runs; no decision is made and no audit edge is
    written.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    inserted = 0
    if not engine.cache.enabled:
        return inserted
    for s, o in candidate_pairs(engine, strategy):
        if inserted >= budget:
            break
        if engine.graph.caching_edge(s, o) is not None:
            continue
        principals, _ = engine.match(s, o)
        if engine.cache.insert(s, o, principals):
            inserted += 1
    logger.debug("precache inserted %d caching edges", inserted)
    return inserted
