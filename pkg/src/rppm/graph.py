"""System model and system graph storage.

The graph holds four kinds of edges. Relationship edges are the ordinary
labelled edges checked against the permissible relationship graph. The
other three kinds form an overlay written by the engine itself:

* caching edges, labelled with a tuple of matched principals;
* decision-audit edges, labelled ``allow!<action>`` or ``deny!<action>``;
* interest-audit edges, labelled ``@active`` or ``@blocked``.

Relationship, decision-audit and interest-audit labels share one string
namespace (identifiers cannot contain ``!`` or ``@``), which lets path
conditions refer to audit edges by label.
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field

from .errors import UnknownNodeError, WellFormednessError

ACTIVE_INTEREST = "@active"
BLOCKED_INTEREST = "@blocked"
ALLOW_PREFIX = "allow!"
DENY_PREFIX = "deny!"


def allow_audit(action: str) -> str:
    return ALLOW_PREFIX + action


def deny_audit(action: str) -> str:
    return DENY_PREFIX + action


class EdgeKind(enum.Enum):
    RELATIONSHIP = "relationship"
    CACHING = "caching"
    DECISION_AUDIT = "decision"
    INTEREST_AUDIT = "interest"


TRAVERSABLE_KINDS = frozenset(
    {EdgeKind.RELATIONSHIP, EdgeKind.DECISION_AUDIT, EdgeKind.INTEREST_AUDIT}
)


def kind_of_label(label) -> EdgeKind:
    """Edge kind implied by a label; tuples of principals are caching labels."""
    if isinstance(label, (tuple, list)):
        return EdgeKind.CACHING
    if label.startswith(ALLOW_PREFIX) or label.startswith(DENY_PREFIX):
        return EdgeKind.DECISION_AUDIT
    if label in (ACTIVE_INTEREST, BLOCKED_INTEREST):
        return EdgeKind.INTEREST_AUDIT
    return EdgeKind.RELATIONSHIP


def _label_fits(kind: EdgeKind, label) -> bool:
    if kind is EdgeKind.CACHING:
        return isinstance(label, tuple) and all(isinstance(p, str) for p in label)
    if not isinstance(label, str) or not label:
        return False
    return kind_of_label(label) is kind


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: EdgeKind
    label: str | tuple[str, ...]

    def sort_key(self):
        return (self.src, self.dst, self.kind.value, self.label)

    def __str__(self):
        if self.kind is EdgeKind.CACHING:
            return f"{self.src} -[{','.join(self.label)}]-> {self.dst}"
        return f"{self.src} -{self.label}-> {self.dst}"


@dataclass(frozen=True)
class Entity:
    id: str
    type: str


@dataclass
class SystemModel:
    types: set[str] = field(default_factory=set)
    labels: set[str] = field(default_factory=set)
    symmetric: set[str] = field(default_factory=set)
    permissible: set[tuple[str, str, str]] = field(default_factory=set)

    def problems(self) -> list[str]:
        out = [f"symmetric label {s!r} is not a label" for s in sorted(self.symmetric - self.labels)]
        for src_t, dst_t, label in sorted(self.permissible):
            for t in (src_t, dst_t):
                if t not in self.types:
                    out.append(f"permissible ({src_t}, {dst_t}, {label}) uses unknown type {t!r}")
            if label not in self.labels:
                out.append(f"permissible ({src_t}, {dst_t}, {label}) uses unknown label {label!r}")
        return out

    def allows(self, src_type: str, dst_type: str, label: str) -> bool:
        return (src_type, dst_type, label) in self.permissible


@dataclass(frozen=True)
class Violation:
    item: str
    reason: str

    def __str__(self):
        return f"{self.item}: {self.reason}"


@dataclass(frozen=True)
class ChangeEvent:
    """One graph mutation. ``added`` is False for removals."""

    edge: Edge
    added: bool
    revision: int


class SystemGraph:
    """Typed entities plus a set of kind-tagged edges.

    With ``strict=True`` (the default) node types and relationship edges are
    checked against ``model`` on insertion. Overlay edges are never checked
    against the permissible relationship graph.

    Mutations are not locked; callers serialize writers.
    """

    def __init__(self, model: SystemModel | None = None, *, strict: bool = True):
        self.model = model if model is not None else SystemModel()
        self.strict = strict
        self.revision = 0
        # free-form key/value annotations carried by the text format
        self.meta: dict[str, str] = {}
        self._types: dict[str, str] = {}
        self._edges: dict[Edge, None] = {}
        # traversable (non-caching) adjacency, insertion ordered
        self._out: dict[str, dict[Edge, None]] = {}
        self._in: dict[str, dict[Edge, None]] = {}
        self._cache_out: dict[str, dict[str, Edge]] = {}
        self._listeners: list[Callable[[ChangeEvent], None]] = []
        self._guards: list[Callable[[Edge, bool], None]] = []

    # -- nodes ---------------------------------------------------------
    def add_node(self, node: str, type_: str) -> bool:
        if self.strict and type_ not in self.model.types:
            raise WellFormednessError(f"node {node!r} has unknown type {type_!r}")
        current = self._types.get(node)
        if current == type_:
            return False
        if current is not None:
            raise WellFormednessError(f"node {node!r} already has type {current!r}")
        self._types[node] = type_
        self._out[node] = {}
        self._in[node] = {}
        self._cache_out[node] = {}
        self.revision += 1
        return True

    def has_node(self, node: str) -> bool:
        return node in self._types

    def type_of(self, node: str) -> str:
        self._require(node)
        return self._types[node]

    @property
    def nodes(self) -> list[str]:
        return list(self._types)

    def entities(self) -> list[Entity]:
        return [Entity(n, t) for n, t in self._types.items()]

    def _require(self, *nodes: str) -> None:
        for n in nodes:
            if n not in self._types:
                raise UnknownNodeError(n)

    # -- hooks ---------------------------------------------------------
    def subscribe(self, listener: Callable[[ChangeEvent], None]) -> None:
        """Call ``listener`` after every successful edge mutation."""
        self._listeners.append(listener)

    def unsubscribe(self, listener: Callable[[ChangeEvent], None]) -> None:
        self._listeners.remove(listener)

    def add_guard(self, guard: Callable[[Edge, bool], None]) -> None:
        """Call ``guard(edge, adding)`` before every edge mutation; raising vetoes it."""
        self._guards.append(guard)

    def remove_guard(self, guard: Callable[[Edge, bool], None]) -> None:
        self._guards.remove(guard)

    # -- edges ---------------------------------------------------------
    def make_edge(self, src: str, dst: str, kind: EdgeKind, label) -> Edge:
        if kind is EdgeKind.CACHING and isinstance(label, list):
            label = tuple(label)
        if not _label_fits(kind, label):
            raise WellFormednessError(f"label {label!r} is not valid on a {kind.value} edge")
        return Edge(src, dst, kind, label)

    def add_edge(self, src: str, dst: str, kind: EdgeKind, label) -> bool:
        """Insert an edge; return False when the identical edge already exists."""
        self._require(src, dst)
        edge = self.make_edge(src, dst, kind, label)
        if edge in self._edges:
            return False
        if self.strict and kind is EdgeKind.RELATIONSHIP:
            triple = (self._types[src], self._types[dst], label)
            if not self.model.allows(*triple):
                raise WellFormednessError(
                    f"edge {edge} not permitted: {triple} not in permissible relationship graph"
                )
        for guard in self._guards:
            guard(edge, True)
        if kind is EdgeKind.CACHING:
            # at most one caching edge per (src, dst)
            stale = self._cache_out[src].get(dst)
            if stale is not None:
                self.remove_edge(src, dst, kind, stale.label)
        self._edges[edge] = None
        if kind is EdgeKind.CACHING:
            self._cache_out[src][dst] = edge
        else:
            self._out[src][edge] = None
            self._in[dst][edge] = None
        self.revision += 1
        self._notify(ChangeEvent(edge, True, self.revision))
        return True

    def remove_edge(self, src: str, dst: str, kind: EdgeKind, label) -> bool:
        self._require(src, dst)
        edge = self.make_edge(src, dst, kind, label)
        if edge not in self._edges:
            return False
        for guard in self._guards:
            guard(edge, False)
        del self._edges[edge]
        if kind is EdgeKind.CACHING:
            del self._cache_out[src][dst]
        else:
            del self._out[src][edge]
            del self._in[dst][edge]
        self.revision += 1
        self._notify(ChangeEvent(edge, False, self.revision))
        return True

    def has_edge(self, src: str, dst: str, kind: EdgeKind, label) -> bool:
        if kind is EdgeKind.CACHING and isinstance(label, list):
            label = tuple(label)
        return Edge(src, dst, kind, label) in self._edges

    def _notify(self, event: ChangeEvent) -> None:
        for listener in list(self._listeners):
            listener(event)

    def edges(self, kind: EdgeKind | None = None) -> list[Edge]:
        return [e for e in self._edges if kind is None or e.kind is kind]

    def __len__(self) -> int:
        return len(self._edges)

    def _symmetric(self, edge: Edge) -> bool:
        return edge.kind is EdgeKind.RELATIONSHIP and edge.label in self.model.symmetric

    def edges_from(self, node: str, kind: EdgeKind | None = None) -> list[Edge]:
        """Edges leaving ``node``; symmetric relationship edges count in both directions."""
        self._require(node)
        out = []
        if kind is None or kind is EdgeKind.CACHING:
            out.extend(self._cache_out[node].values())
        if kind is not EdgeKind.CACHING:
            out.extend(e for e in self._out[node] if kind is None or e.kind is kind)
            if kind is None or kind is EdgeKind.RELATIONSHIP:
                out.extend(e for e in self._in[node] if self._symmetric(e) and e.src != node)
        return out

    def edges_between(self, u: str, v: str, kind: EdgeKind | None = None) -> list[Edge]:
        self._require(u, v)
        out = []
        for e in self.edges_from(u, kind):
            if (e.src, e.dst) == (u, v) or (self._symmetric(e) and (e.dst, e.src) == (u, v)):
                out.append(e)
        return out

    def out_adjacency(self, node: str) -> Iterable[Edge]:
        """Traversable edges stored with ``node`` as source (matcher use)."""
        return self._out[node]

    def in_adjacency(self, node: str) -> Iterable[Edge]:
        return self._in[node]

    def caching_edge(self, src: str, dst: str) -> Edge | None:
        return self._cache_out.get(src, {}).get(dst)

    def caching_out_degree(self, node: str) -> int:
        return len(self._cache_out.get(node, ()))

    def __iter__(self) -> Iterator[Edge]:
        return iter(list(self._edges))


def validate_graph(model: SystemModel, graph: SystemGraph) -> list[Violation]:
    """Return every well-formedness violation of ``graph`` against ``model``."""
    violations = []
    for entity in graph.entities():
        if entity.type not in model.types:
            violations.append(Violation(f"node {entity.id}", f"type {entity.type!r} not in model"))
    for edge in graph.edges(EdgeKind.RELATIONSHIP):
        triple = (graph.type_of(edge.src), graph.type_of(edge.dst), edge.label)
        if edge.label not in model.labels:
            violations.append(Violation(f"edge {edge}", f"label {edge.label!r} not in model"))
        elif triple not in model.permissible:
            violations.append(Violation(f"edge {edge}", f"{triple} not permissible"))
    return violations
