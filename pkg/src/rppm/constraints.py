"""History-based constraint policies and their reference oracles.

The generators prepend constraint rules to existing policies:

* separation of duty over a set of actions on one object, either the
  per-action form (``allow!a_i -> p_i`` plus mutual deny rules) or the
  basic form with a single ``p_seen`` principal;
* a Chinese Wall, which matches a principal whenever a subject holds a
  blocked interest in the company owning the requested object.

The oracles decide the same requests from an explicit request history and
never touch the graph or the engine; they are the ground truth for
differential tests.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .errors import NameCollisionError, UnknownObjectError
from .graph import BLOCKED_INTEREST, allow_audit
from .paths import Concat, EdgeCond, PathCondition, Reverse, simplify
from .policy import STAR, AuthorizationRule, Decision, PrincipalMatchingRule, Request


class SodMode(enum.Enum):
    BASIC = "basic"
    GENERAL = "general"


@dataclass(frozen=True)
class SodSpec:
    object: str
    actions: tuple[str, ...]
    principals: tuple[str, ...] = ()
    mode: SodMode = SodMode.GENERAL
    seen_principal: str = "p_seen"

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if len(self.actions) < 2:
            raise ValueError("separation of duty needs at least two actions")
        if len(set(self.actions)) != len(self.actions):
            raise ValueError("constrained actions must be distinct")
        principals = tuple(self.principals) or tuple(f"p{i + 1}" for i in range(len(self.actions)))
        if self.mode is SodMode.GENERAL and len(principals) != len(self.actions):
            raise ValueError("need one principal per constrained action")
        object.__setattr__(self, "principals", principals)

    def fresh_principals(self) -> tuple[str, ...]:
        if self.mode is SodMode.BASIC:
            return (self.seen_principal,)
        return self.principals


def _used_principals(pm_rules: Iterable[PrincipalMatchingRule], auth_rules: Iterable[AuthorizationRule]) -> set[str]:
    return {r.principal for r in pm_rules} | {r.principal for r in auth_rules}


def _check_fresh(names: Iterable[str], pm_rules, auth_rules) -> None:
    clash = sorted(set(names) & _used_principals(pm_rules, auth_rules))
    if clash:
        raise NameCollisionError(f"principal(s) already used by the base policies: {', '.join(clash)}")


def sod_rules(spec: SodSpec) -> tuple[list[PrincipalMatchingRule], list[AuthorizationRule]]:
    """The constraint rules alone, in the order they are prepended."""
    o = spec.object
    if spec.mode is SodMode.BASIC:
        pm = [PrincipalMatchingRule(EdgeCond(allow_audit(a)), spec.seen_principal) for a in spec.actions]
        auth = [AuthorizationRule(spec.seen_principal, o, STAR, Decision.DENY)]
        return pm, auth
    pm = [
        PrincipalMatchingRule(EdgeCond(allow_audit(a)), p)
        for a, p in zip(spec.actions, spec.principals)
    ]
    auth = [
        AuthorizationRule(p, o, other, Decision.DENY)
        for a, p in zip(spec.actions, spec.principals)
        for other in spec.actions
        if other != a
    ]
    return pm, auth


def generate_sod(
    base_pm: Sequence[PrincipalMatchingRule],
    base_auth: Sequence[AuthorizationRule],
    spec: SodSpec,
) -> tuple[tuple[PrincipalMatchingRule, ...], tuple[AuthorizationRule, ...]]:
    _check_fresh(spec.fresh_principals(), base_pm, base_auth)
    pm, auth = sod_rules(spec)
    return tuple(pm) + tuple(base_pm), tuple(auth) + tuple(base_auth)


def blocking_condition(data_to_company: PathCondition) -> PathCondition:
    """``@blocked`` followed by the data-to-company path walked backwards."""
    return Concat(EdgeCond(BLOCKED_INTEREST), simplify(Reverse(data_to_company)))


def chinese_wall_rules(
    paths: Sequence[PathCondition], principal: str
) -> tuple[list[PrincipalMatchingRule], list[AuthorizationRule]]:
    pm = [PrincipalMatchingRule(blocking_condition(p), principal) for p in paths]
    auth = [AuthorizationRule(principal, STAR, STAR, Decision.DENY)]
    return pm, auth


def generate_chinese_wall(
    base_pm: Sequence[PrincipalMatchingRule],
    base_auth: Sequence[AuthorizationRule],
    paths: Sequence[PathCondition],
    principal: str = "p_cw",
) -> tuple[tuple[PrincipalMatchingRule, ...], tuple[AuthorizationRule, ...]]:
    if not paths:
        raise ValueError("at least one data-to-company path is required")
    _check_fresh([principal], base_pm, base_auth)
    pm, auth = chinese_wall_rules(paths, principal)
    return tuple(pm) + tuple(base_pm), tuple(auth) + tuple(base_auth)


# -- oracles -----------------------------------------------------------------

History = Sequence[tuple[Request, Decision]]


def sod_oracle(history: History, request: Request, base_decision: Decision, spec: SodSpec) -> Decision:
    """Decision required by the separation-of-duty guarantee.

    General mode: a constrained action on the constrained object is refused
    when the same subject was previously allowed a *different* constrained
    action there. Basic mode: refused after any allowed constrained action,
    including a repeat of the same one.
    """
    if base_decision is Decision.DENY or request.object != spec.object:
        return base_decision
    constrained = set(spec.actions)
    done = {
        past.action
        for past, decision in history
        if decision is Decision.ALLOW
        and past.subject == request.subject
        and past.object == spec.object
        and past.action in constrained
    }
    if spec.mode is SodMode.BASIC:
        return Decision.DENY if done else base_decision
    if request.action in constrained and done - {request.action}:
        return Decision.DENY
    return base_decision


@dataclass
class WallLayout:
    """Which company owns each data object and which classes each company is in."""

    company_of: Mapping[str, str]
    classes_of: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def competitors(self, company: str) -> set[str]:
        mine = self.classes_of.get(company, frozenset())
        return {
            other
            for other, theirs in self.classes_of.items()
            if other != company and mine & theirs
        }


def cw_oracle(history: History, request: Request, base_decision: Decision, layout: WallLayout) -> Decision:
    """Decision required by the Chinese Wall guarantee."""
    try:
        company = layout.company_of[request.object]
    except KeyError:
        raise UnknownObjectError(request.object) from None
    if base_decision is Decision.DENY:
        return base_decision
    interests = {
        layout.company_of[past.object]
        for past, decision in history
        if decision is Decision.ALLOW
        and past.subject == request.subject
        and past.object in layout.company_of
    }
    if interests & layout.competitors(company):
        return Decision.DENY
    return base_decision
