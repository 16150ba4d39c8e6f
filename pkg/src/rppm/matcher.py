"""Path-condition satisfaction over a system graph.

A simple path condition is a regular expression over edge conditions built
from concatenation and one-or-more repetition. It is compiled into a
position automaton (no epsilon moves), and satisfaction of ``(u, v)`` is a
breadth-first search of the product of graph nodes and automaton states,
starting at ``(u, start)`` and accepting at ``(v, final)``.

Caching edges are invisible to the search; relationship and audit edges are
traversed alike.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache

from .errors import UnknownNodeError
from .graph import EdgeKind, SystemGraph
from .paths import Concat, Diamond, EdgeCond, PathCondition, Plus, ReversedEdge, simplify

START = -1


@dataclass
class EvalMetrics:
    """Work counters for one evaluation.

    ``nodes_visited`` counts distinct (node, automaton state) pairs taken off
    the search queue; ``edges_considered`` counts adjacency entries inspected,
    whether or not their label matched.
    """

    nodes_visited: int = 0
    edges_considered: int = 0

    def __iadd__(self, other: EvalMetrics) -> EvalMetrics:
        self.nodes_visited += other.nodes_visited
        self.edges_considered += other.edges_considered
        return self


@dataclass(frozen=True)
class Automaton:
    steps: tuple[tuple[str, bool], ...]  # position -> (label, reversed)
    first: frozenset[int]
    last: frozenset[int]
    follow: tuple[frozenset[int], ...]

    @property
    def n_states(self) -> int:
        return len(self.steps) + 1

    def successors(self, state: int) -> frozenset[int]:
        return self.first if state == START else self.follow[state]


def _positions(pc: PathCondition, steps: list, follow: list) -> tuple[set[int], set[int]]:
    match pc:
        case EdgeCond(label) | ReversedEdge(label):
            steps.append((label, isinstance(pc, ReversedEdge)))
            follow.append(set())
            pos = len(steps) - 1
            return {pos}, {pos}
        case Concat(left, right):
            first_l, last_l = _positions(left, steps, follow)
            first_r, last_r = _positions(right, steps, follow)
            for p in last_l:
                follow[p] |= first_r
            return first_l, last_r
        case Plus(inner):
            first, last = _positions(inner, steps, follow)
            for p in last:
                follow[p] |= first
            return first, last
    raise ValueError(f"not a simple path condition: {pc!r}")


@lru_cache(maxsize=4096)
def compile_condition(pc: PathCondition) -> Automaton:
    """Position automaton for a non-empty simple path condition."""
    steps: list[tuple[str, bool]] = []
    follow: list[set[int]] = []
    first, last = _positions(pc, steps, follow)
    return Automaton(
        tuple(steps), frozenset(first), frozenset(last), tuple(frozenset(f) for f in follow)
    )


def satisfies(
    graph: SystemGraph,
    u: str,
    v: str,
    pc: PathCondition,
    metrics: EvalMetrics | None = None,
) -> bool:
    """Decide whether ``u`` and ``v`` satisfy ``pc`` in ``graph``.

    Non-simple conditions are simplified first.
    """
    for node in (u, v):
        if not graph.has_node(node):
            raise UnknownNodeError(node)
    if metrics is None:
        metrics = EvalMetrics()
    pc = simplify(pc)
    if isinstance(pc, Diamond):
        return u == v
    automaton = compile_condition(pc)
    symmetric = graph.model.symmetric

    seen = {(u, START)}
    queue = deque([(u, START)])
    while queue:
        node, state = queue.popleft()
        metrics.nodes_visited += 1
        moves = automaton.successors(state)
        if not moves:
            continue
        forward = [(p, *automaton.steps[p]) for p in moves]
        need_out = any(not rev or label in symmetric for _, label, rev in forward)
        need_in = any(rev or label in symmetric for _, label, rev in forward)
        candidates = []
        if need_out:
            for edge in graph.out_adjacency(node):
                metrics.edges_considered += 1
                sym = edge.kind is EdgeKind.RELATIONSHIP and edge.label in symmetric
                for p, label, rev in forward:
                    if edge.label == label and (not rev or sym):
                        candidates.append((edge.dst, p))
        if need_in:
            for edge in graph.in_adjacency(node):
                metrics.edges_considered += 1
                sym = edge.kind is EdgeKind.RELATIONSHIP and edge.label in symmetric
                for p, label, rev in forward:
                    if edge.label == label and (rev or sym):
                        candidates.append((edge.src, p))
        for item in candidates:
            if item in seen:
                continue
            if item[0] == v and item[1] in automaton.last:
                return True
            seen.add(item)
            queue.append(item)
    return False


def state_bound(graph: SystemGraph, pc: PathCondition) -> int:
    """Upper bound on product states a single :func:`satisfies` call can visit."""
    pc = simplify(pc)
    if isinstance(pc, Diamond):
        return 0
    return len(graph.nodes) * compile_condition(pc).n_states
