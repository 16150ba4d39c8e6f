"""Principal matching, authorization rules and conflict resolution."""

from __future__ import annotations

import enum
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .errors import ConfigurationError, UnknownNodeError
from .graph import SystemGraph
from .matcher import EvalMetrics, satisfies
from .paths import PathCondition, labels_of, render, simplify

STAR = "*"


class PMS(enum.Enum):
    """Principal-matching strategy."""

    ALL_MATCH = "AllMatch"
    FIRST_MATCH = "FirstMatch"


class CRS(enum.Enum):
    """Conflict-resolution strategy."""

    DENY_OVERRIDE = "DenyOverride"
    ALLOW_OVERRIDE = "AllowOverride"
    FIRST_MATCH = "FirstMatch"


class Decision(enum.Enum):
    DENY = 0
    ALLOW = 1

    @property
    def bit(self) -> int:
        return self.value

    @property
    def word(self) -> str:
        return "allow" if self is Decision.ALLOW else "deny"

    @classmethod
    def parse(cls, word: str) -> Decision:
        try:
            return {"allow": cls.ALLOW, "deny": cls.DENY, "1": cls.ALLOW, "0": cls.DENY}[word.lower()]
        except KeyError:
            raise ValueError(f"not a decision: {word!r}") from None


@dataclass(frozen=True)
class PrincipalMatchingRule:
    """``condition=None`` is the default rule, matched unconditionally."""

    condition: PathCondition | None
    principal: str

    @property
    def is_default(self) -> bool:
        return self.condition is None

    def __str__(self):
        cond = "default" if self.condition is None else render(self.condition)
        return f"{cond} -> {self.principal}"


@dataclass(frozen=True)
class PrincipalMatchingPolicy:
    rules: tuple[PrincipalMatchingRule, ...] = ()
    strategy: PMS = PMS.ALL_MATCH

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        for rule in self.rules[:-1]:
            if rule.is_default:
                raise ConfigurationError("the default principal-matching rule must be last")

    def principals(self) -> set[str]:
        return {r.principal for r in self.rules}

    def labels(self) -> set[str]:
        out: set[str] = set()
        for rule in self.rules:
            if rule.condition is not None:
                out |= labels_of(rule.condition)
        return out


@dataclass(frozen=True)
class AuthorizationRule:
    principal: str
    object: str
    action: str
    decision: Decision

    def applies(self, principals: Iterable[str], obj: str, action: str) -> bool:
        return (
            self.principal in principals
            and self.object in (obj, STAR)
            and self.action in (action, STAR)
        )

    def __str__(self):
        return f"{self.principal} {self.object} {self.action} {self.decision.word}"


@dataclass(frozen=True)
class AuthorizationPolicy:
    rules: tuple[AuthorizationRule, ...] = ()
    crs: CRS = CRS.DENY_OVERRIDE
    default_decision: Decision = Decision.DENY

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    def principals(self) -> set[str]:
        return {r.principal for r in self.rules}


@dataclass(frozen=True)
class Request:
    subject: str
    object: str
    action: str

    def __str__(self):
        return f"({self.subject}, {self.object}, {self.action})"


@dataclass
class EvalOutcome:
    decision: Decision
    matched_principals: list[str]
    decision_set: frozenset[int]
    metrics: EvalMetrics = field(default_factory=EvalMetrics)
    cache_hit: bool = False
    written_edges: list = field(default_factory=list)
    # indices into the policies, for explanations; None on a cache hit
    matched_rules: list[int] | None = None
    applicable_rules: list[int] = field(default_factory=list)

    @property
    def allowed(self) -> bool:
        return self.decision is Decision.ALLOW


def match_principals_detail(
    graph: SystemGraph, s: str, o: str, policy: PrincipalMatchingPolicy
) -> tuple[list[str], EvalMetrics, list[int]]:
    """Like :func:`match_principals`, also returning matched rule indices."""
    for node in (s, o):
        if not graph.has_node(node):
            raise UnknownNodeError(node)
    metrics = EvalMetrics()
    matched: list[str] = []
    rule_ids: list[int] = []
    for index, rule in enumerate(policy.rules):
        if rule.condition is None:
            hit = True
        else:
            hit = satisfies(graph, s, o, simplify(rule.condition), metrics)
        if not hit:
            continue
        rule_ids.append(index)
        if rule.principal not in matched:
            matched.append(rule.principal)
        if policy.strategy is PMS.FIRST_MATCH:
            break
    return matched, metrics, rule_ids


def match_principals(
    graph: SystemGraph, s: str, o: str, policy: PrincipalMatchingPolicy
) -> tuple[list[str], EvalMetrics]:
    """Matched principals for the pair ``(s, o)`` under ``policy``."""
    matched, metrics, _ = match_principals_detail(graph, s, o, policy)
    return matched, metrics


def applicable_rules(
    principals: Sequence[str], request: Request, policy: AuthorizationPolicy
) -> list[int]:
    chosen = set(principals)
    return [
        i
        for i, rule in enumerate(policy.rules)
        if rule.applies(chosen, request.object, request.action)
    ]


def resolve(decisions: Sequence[Decision], crs: CRS, default: Decision) -> Decision:
    """Reduce applicable decisions (in policy order) to one."""
    if not decisions:
        return default
    if crs is CRS.FIRST_MATCH:
        return decisions[0]
    if crs is CRS.DENY_OVERRIDE:
        return Decision.DENY if Decision.DENY in decisions else Decision.ALLOW
    return Decision.ALLOW if Decision.ALLOW in decisions else Decision.DENY


def authorize(
    principals: Sequence[str], request: Request, policy: AuthorizationPolicy
) -> tuple[Decision, frozenset[int]]:
    rules = [policy.rules[i] for i in applicable_rules(principals, request, policy)]
    decisions = [r.decision for r in rules]
    decision = resolve(decisions, policy.crs, policy.default_decision)
    return decision, frozenset(d.bit for d in decisions)
