"""Audit edge writers.

Every evaluation leaves a decision-audit edge from the subject to the
object. When a Chinese Wall layout is configured, allowed requests also
record the subject's interest in the company owning the object and block
the subject from that company's competitors.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .graph import (
    ACTIVE_INTEREST,
    BLOCKED_INTEREST,
    Edge,
    EdgeKind,
    SystemGraph,
    allow_audit,
    deny_audit,
)
from .matcher import satisfies
from .paths import PathCondition, simplify
from .policy import Decision, Request


@dataclass
class ChineseWallConfig:
    enabled: bool = False
    data_to_company_paths: Sequence[PathCondition] = field(default_factory=tuple)
    membership_label: str = "m"

    def __post_init__(self):
        self.data_to_company_paths = tuple(simplify(p) for p in self.data_to_company_paths)
        if self.enabled and not self.data_to_company_paths:
            raise ConfigurationError("cw.paths must name at least one path when cw is enabled")


def _add(graph: SystemGraph, src: str, dst: str, kind: EdgeKind, label: str) -> list[Edge]:
    if graph.add_edge(src, dst, kind, label):
        return [Edge(src, dst, kind, label)]
    return []


def write_decision_audit(graph: SystemGraph, request: Request, decision: Decision) -> list[Edge]:
    label = allow_audit(request.action) if decision is Decision.ALLOW else deny_audit(request.action)
    return _add(graph, request.subject, request.object, EdgeKind.DECISION_AUDIT, label)


def companies_of(graph: SystemGraph, obj: str, cw: ChineseWallConfig) -> list[str]:
    """Companies reachable from ``obj`` along any configured data-to-company path."""
    found = []
    for candidate in sorted(graph.nodes):
        if not member_classes(graph, candidate, cw.membership_label):
            continue
        if any(satisfies(graph, obj, candidate, pc) for pc in cw.data_to_company_paths):
            found.append(candidate)
    return found


def member_classes(graph: SystemGraph, company: str, label: str) -> list[str]:
    return sorted(
        {e.dst for e in graph.out_adjacency(company) if e.kind is EdgeKind.RELATIONSHIP and e.label == label}
    )


def class_members(graph: SystemGraph, coi_class: str, label: str) -> list[str]:
    return sorted(
        {e.src for e in graph.in_adjacency(coi_class) if e.kind is EdgeKind.RELATIONSHIP and e.label == label}
    )


def write_interest_edges(
    graph: SystemGraph, request: Request, decision: Decision, cw: ChineseWallConfig
) -> list[Edge]:
    if not cw.enabled or decision is not Decision.ALLOW:
        return []
    s = request.subject
    written: list[Edge] = []
    for company in companies_of(graph, request.object, cw):
        written += _add(graph, s, company, EdgeKind.INTEREST_AUDIT, ACTIVE_INTEREST)
        for coi_class in member_classes(graph, company, cw.membership_label):
            for rival in class_members(graph, coi_class, cw.membership_label):
                if rival == company:
                    continue
                if graph.has_edge(s, rival, EdgeKind.INTEREST_AUDIT, ACTIVE_INTEREST):
                    # cannot happen when the blocking rules are installed
                    continue
                written += _add(graph, s, rival, EdgeKind.INTEREST_AUDIT, BLOCKED_INTEREST)
    return written
