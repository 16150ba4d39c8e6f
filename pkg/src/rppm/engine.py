"""Request evaluation pipeline.

``Engine.evaluate`` runs: cache lookup, principal matching on a miss,
authorization with conflict resolution, then the post-decision writers in a
fixed order (caching edge, decision-audit edge, interest-audit edges).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

from .audit import ChineseWallConfig, write_decision_audit, write_interest_edges
from .cache import CacheConfig, CacheManager, ObjectFocused, SubjectFocused, precache
from .errors import ConfigurationError, UnknownNodeError
from .graph import ChangeEvent, Edge, EdgeKind, SystemGraph
from .matcher import EvalMetrics
from .policy import (
    CRS,
    PMS,
    AuthorizationPolicy,
    AuthorizationRule,
    Decision,
    EvalOutcome,
    PrincipalMatchingPolicy,
    PrincipalMatchingRule,
    Request,
    applicable_rules,
    authorize,
    match_principals_detail,
)

logger = logging.getLogger(__name__)


@dataclass
class EngineConfig:
    pms: PMS = PMS.ALL_MATCH
    crs: CRS = CRS.DENY_OVERRIDE
    default_decision: Decision = Decision.DENY
    cache: CacheConfig = field(default_factory=CacheConfig)
    cw: ChineseWallConfig = field(default_factory=ChineseWallConfig)


class Engine:
    """Stateful decision point over one system graph.

    Calls must be serialized with each other and with any direct mutation of
    ``graph``; the engine subscribes to the graph so that such mutations
    still invalidate the cache.
    """

    def __init__(
        self,
        graph: SystemGraph,
        pm_rules=(),
        auth_rules=(),
        config: EngineConfig | None = None,
    ):
        self.graph = graph
        self.config = config or EngineConfig()
        self.cw = self.config.cw
        if self.cw.enabled and graph.strict and self.cw.membership_label not in graph.model.labels:
            raise ConfigurationError(
                f"cw.member_label {self.cw.membership_label!r} is not a relationship label"
            )
        self.pm_policy = PrincipalMatchingPolicy(tuple(pm_rules), self.config.pms)
        self.auth_policy = AuthorizationPolicy(
            tuple(auth_rules), self.config.crs, self.config.default_decision
        )
        self._watched = self.pm_policy.labels()
        self.cache = CacheManager(graph, self.config.cache)
        self._recent: deque[str] = deque(maxlen=self.config.cache.recent_k)
        graph.subscribe(self._on_change)
        graph.add_guard(self._guard)

    # -- graph hooks ---------------------------------------------------
    def _on_change(self, event: ChangeEvent) -> None:
        kind = event.edge.kind
        if kind is EdgeKind.CACHING:
            return
        # an overlay label no rule mentions cannot change any match
        if kind is not EdgeKind.RELATIONSHIP and event.edge.label not in self._watched:
            return
        self.cache.invalidate(event)

    def _guard(self, edge: Edge, adding: bool) -> None:
        if (
            self.cw.enabled
            and edge.kind is EdgeKind.RELATIONSHIP
            and edge.label == self.cw.membership_label
        ):
            raise ConfigurationError(
                "conflict-of-interest membership is fixed while the Chinese Wall hook is enabled"
            )

    def close(self) -> None:
        """Detach from the graph."""
        self.graph.unsubscribe(self._on_change)
        self.graph.remove_guard(self._guard)

    # -- policy management ---------------------------------------------
    def reload_policy(
        self,
        pm_rules: tuple[PrincipalMatchingRule, ...],
        auth_rules: tuple[AuthorizationRule, ...],
    ) -> int:
        """Swap both policies; purges every caching edge."""
        self.pm_policy = PrincipalMatchingPolicy(tuple(pm_rules), self.pm_policy.strategy)
        self.auth_policy = AuthorizationPolicy(
            tuple(auth_rules), self.auth_policy.crs, self.auth_policy.default_decision
        )
        self._watched = self.pm_policy.labels()
        return self.cache.invalidate(None)

    def set_strategy(self, pms: PMS) -> int:
        self.pm_policy = PrincipalMatchingPolicy(self.pm_policy.rules, pms)
        return self.cache.invalidate(None)

    # -- evaluation ----------------------------------------------------
    def recent_subjects(self) -> list[str]:
        """Distinct recent request subjects, most recent first."""
        return list(reversed(self._recent))

    def touch_subject(self, subject: str) -> None:
        """Mark ``subject`` as the most recently active one."""
        if subject in self._recent:
            self._recent.remove(subject)
        self._recent.append(subject)

    def match(self, s: str, o: str) -> tuple[list[str], EvalMetrics]:
        principals, metrics, _ = match_principals_detail(self.graph, s, o, self.pm_policy)
        return principals, metrics

    def evaluate(self, request: Request | str, obj: str | None = None, action: str | None = None) -> EvalOutcome:
        if not isinstance(request, Request):
            request = Request(request, obj, action)
        s, o = request.subject, request.object
        for node in (s, o):
            if not self.graph.has_node(node):
                raise UnknownNodeError(node)
        self.cache.tick()
        self.touch_subject(s)

        principals = None
        rule_ids = None
        metrics = EvalMetrics()
        if self.cache.enabled:
            principals = self.cache.lookup(s, o)
        hit = principals is not None
        if not hit:
            principals, metrics, rule_ids = match_principals_detail(self.graph, s, o, self.pm_policy)

        decision, decision_set = authorize(principals, request, self.auth_policy)
        outcome = EvalOutcome(
            decision=decision,
            matched_principals=principals,
            decision_set=decision_set,
            metrics=metrics,
            cache_hit=hit,
            matched_rules=rule_ids,
            applicable_rules=applicable_rules(principals, request, self.auth_policy),
        )

        written = outcome.written_edges
        if self.cache.enabled and self.config.cache.write_on_eval and not hit:
            if self.cache.insert(s, o, principals):
                written.append(Edge(s, o, EdgeKind.CACHING, tuple(principals)))
        written += write_decision_audit(self.graph, request, decision)
        if self.cw.enabled:
            written += write_interest_edges(self.graph, request, decision, self.cw)
        logger.debug("%s -> %s mp=%s hit=%s", request, decision.word, principals, hit)
        return outcome

    def precache(self, strategy: SubjectFocused | ObjectFocused, budget: int) -> int:
        return precache(self, strategy, budget)
