"""Line-oriented text formats for models, graphs, policies and configuration.

All four formats ignore blank lines and ``#`` comments.

Model::

    type <name>
    label <name> [symmetric]
    perm <type> <label> <type>

Graph::

    node <id> : <type>
    edge <src> <label> <dst>
    cached <src> <dst> [p1,p2,...]
    decision <src> <dst> allow|deny <action>
    interest <src> active|blocked <dst>
    meta <key> <value>

Policy::

    pm <path-expr> -> <principal>
    pm default -> <principal>
    auth <principal> <object|*> <action|*> allow|deny

Config: ``key = value`` lines (see :data:`CONFIG_KEYS`).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .audit import ChineseWallConfig
from .cache import CacheConfig, Invalidation
from .engine import Engine, EngineConfig
from .errors import ParseError, UnresolvedReferenceError, WellFormednessError
from .graph import (
    ACTIVE_INTEREST,
    ALLOW_PREFIX,
    BLOCKED_INTEREST,
    DENY_PREFIX,
    EdgeKind,
    SystemGraph,
    SystemModel,
    allow_audit,
    deny_audit,
    kind_of_label,
)
from .paths import IDENT_RE, labels_of, parse_path, render
from .policy import CRS, PMS, AuthorizationRule, Decision, PrincipalMatchingRule


def _lines(text: str):
    for number, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if body.strip():
            yield number, raw, body


def _fields(raw: str, body: str) -> list[tuple[str, int]]:
    """Whitespace-separated words with 1-based columns."""
    return [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", body)]


def _ident(word: str, number: int, column: int, what: str) -> str:
    if not IDENT_RE.fullmatch(word):
        raise ParseError(f"invalid {what} {word!r}", line=number, column=column)
    return word


def _node_id(word: str, number: int, column: int) -> str:
    if not re.fullmatch(r"[^\s#\[\],:]+", word):
        raise ParseError(f"invalid node id {word!r}", line=number, column=column)
    return word


def _expect(words, count: int, number: int, shape: str) -> None:
    if len(words) != count:
        column = words[min(len(words), count) - 1][1] if words else 1
        raise ParseError(f"expected '{shape}'", line=number, column=column)


# -- model -------------------------------------------------------------------


def parse_model(text: str) -> SystemModel:
    model = SystemModel()
    perms = []
    for number, raw, body in _lines(text):
        words = _fields(raw, body)
        head = words[0][0]
        if head == "type":
            _expect(words, 2, number, "type <name>")
            model.types.add(_ident(words[1][0], number, words[1][1], "type name"))
        elif head == "label":
            if len(words) == 3 and words[2][0] == "symmetric":
                model.symmetric.add(_ident(words[1][0], number, words[1][1], "label"))
            else:
                _expect(words, 2, number, "label <name> [symmetric]")
            model.labels.add(_ident(words[1][0], number, words[1][1], "label"))
        elif head == "perm":
            _expect(words, 4, number, "perm <type> <label> <type>")
            perms.append((number, words))
        else:
            raise ParseError(f"unknown model directive {head!r}", line=number, column=words[0][1])
    for number, words in perms:
        (_, _), (src_t, c1), (label, c2), (dst_t, c3) = words
        for name, column in ((src_t, c1), (dst_t, c3)):
            if name not in model.types:
                raise UnresolvedReferenceError(f"unknown type {name!r}", line=number, column=column)
        if label not in model.labels:
            raise UnresolvedReferenceError(f"unknown label {label!r}", line=number, column=c2)
        model.permissible.add((src_t, dst_t, label))
    return model


def serialize_model(model: SystemModel) -> str:
    out = [f"type {t}" for t in sorted(model.types)]
    for label in sorted(model.labels):
        out.append(f"label {label} symmetric" if label in model.symmetric else f"label {label}")
    out += [f"perm {s} {label} {d}" for s, d, label in sorted(model.permissible, key=lambda p: (p[0], p[2], p[1]))]
    return "".join(line + "\n" for line in out)


# -- graph -------------------------------------------------------------------


def _principal_list(word: str, number: int, column: int) -> tuple[str, ...]:
    if not (word.startswith("[") and word.endswith("]")):
        raise ParseError("expected principal list like [p1,p2]", line=number, column=column)
    inner = word[1:-1]
    if not inner:
        return ()
    return tuple(_ident(p, number, column, "principal") for p in inner.split(","))


def parse_graph(text: str, model: SystemModel | None = None, *, strict: bool = True) -> SystemGraph:
    """Parse a graph document.

    Nodes are declared before edges are resolved, so lines may appear in any
    order. With ``strict`` the graph is checked against ``model``.
    """
    graph = SystemGraph(model, strict=strict and model is not None)
    meta: dict[str, str] = {}
    edge_lines = []
    for number, raw, body in _lines(text):
        words = _fields(raw, body)
        head = words[0][0]
        if head == "node":
            _expect(words, 4, number, "node <id> : <type>")
            if words[2][0] != ":":
                raise ParseError("expected ':'", line=number, column=words[2][1])
            node = _node_id(words[1][0], number, words[1][1])
            try:
                graph.add_node(node, _ident(words[3][0], number, words[3][1], "type"))
            except WellFormednessError as exc:
                raise WellFormednessError(f"line {number}: {exc}") from None
        elif head in ("edge", "cached", "decision", "interest"):
            edge_lines.append((number, head, words))
        elif head == "meta":
            _expect(words, 3, number, "meta <key> <value>")
            meta[words[1][0]] = words[2][0]
        else:
            raise ParseError(f"unknown graph directive {head!r}", line=number, column=words[0][1])
    graph.meta.update(meta)
    for number, head, words in edge_lines:
        if head == "edge":
            _expect(words, 4, number, "edge <src> <label> <dst>")
            (src, c_src), (label, c_label), (dst, c_dst) = words[1], words[2], words[3]
            _ident(label, number, c_label, "label")
            if graph.strict and label not in graph.model.labels:
                raise UnresolvedReferenceError(f"unknown label {label!r}", line=number, column=c_label)
            kind = EdgeKind.RELATIONSHIP
        elif head == "cached":
            _expect(words, 4, number, "cached <src> <dst> [principals]")
            (src, c_src), (dst, c_dst) = words[1], words[2]
            label = _principal_list(words[3][0], number, words[3][1])
            kind = EdgeKind.CACHING
        elif head == "decision":
            _expect(words, 5, number, "decision <src> <dst> allow|deny <action>")
            (src, c_src), (dst, c_dst) = words[1], words[2]
            verdict, action = words[3][0], _ident(words[4][0], number, words[4][1], "action")
            if verdict not in ("allow", "deny"):
                raise ParseError("expected allow or deny", line=number, column=words[3][1])
            label = allow_audit(action) if verdict == "allow" else deny_audit(action)
            kind = EdgeKind.DECISION_AUDIT
        else:
            _expect(words, 4, number, "interest <src> active|blocked <dst>")
            (src, c_src), (dst, c_dst) = words[1], words[3]
            flavour = words[2][0]
            if flavour not in ("active", "blocked"):
                raise ParseError("expected active or blocked", line=number, column=words[2][1])
            label = ACTIVE_INTEREST if flavour == "active" else BLOCKED_INTEREST
            kind = EdgeKind.INTEREST_AUDIT
        for node, column in ((src, c_src), (dst, c_dst)):
            if not graph.has_node(node):
                raise UnresolvedReferenceError(f"unknown node {node!r}", line=number, column=column)
        try:
            graph.add_edge(src, dst, kind, label)
        except WellFormednessError as exc:
            raise WellFormednessError(f"line {number}: {exc}") from None
    return graph


def _edge_line(edge) -> str:
    if edge.kind is EdgeKind.RELATIONSHIP:
        return f"edge {edge.src} {edge.label} {edge.dst}"
    if edge.kind is EdgeKind.CACHING:
        return f"cached {edge.src} {edge.dst} [{','.join(edge.label)}]"
    if edge.kind is EdgeKind.DECISION_AUDIT:
        if edge.label.startswith(ALLOW_PREFIX):
            return f"decision {edge.src} {edge.dst} allow {edge.label[len(ALLOW_PREFIX):]}"
        return f"decision {edge.src} {edge.dst} deny {edge.label[len(DENY_PREFIX):]}"
    flavour = "active" if edge.label == ACTIVE_INTEREST else "blocked"
    return f"interest {edge.src} {flavour} {edge.dst}"


_SECTIONS = (
    (EdgeKind.RELATIONSHIP, "EDGES"),
    (EdgeKind.CACHING, "CACHED"),
    (EdgeKind.DECISION_AUDIT, "DECISIONS"),
    (EdgeKind.INTEREST_AUDIT, "INTERESTS"),
)


def serialize_graph(graph: SystemGraph, include_overlay: bool = True) -> str:
    """Deterministic text for ``graph``: sorted nodes, then one section per edge kind.

    Edges are sorted within each section except decision audits, which keep
    insertion order so the file doubles as an ordered audit trail.
    """
    out = []
    if include_overlay and graph.meta:
        out.append("# META")
        out += [f"meta {k} {v}" for k, v in sorted(graph.meta.items())]
    if graph.nodes:
        out.append("# NODES")
        out += [f"node {n} : {graph.type_of(n)}" for n in sorted(graph.nodes)]
    for kind, title in _SECTIONS:
        if kind is not EdgeKind.RELATIONSHIP and not include_overlay:
            continue
        edges = graph.edges(kind)
        # decision audits stay in the order they happened
        if kind is not EdgeKind.DECISION_AUDIT:
            edges.sort(key=lambda e: e.sort_key())
        if edges:
            out.append(f"# {title}")
            out += [_edge_line(e) for e in edges]
    return "".join(line + "\n" for line in out)


# -- policy ------------------------------------------------------------------


@dataclass
class PolicyDocument:
    pm_rules: list[PrincipalMatchingRule] = field(default_factory=list)
    auth_rules: list[AuthorizationRule] = field(default_factory=list)


def parse_policy(text: str) -> PolicyDocument:
    doc = PolicyDocument()
    for number, raw, body in _lines(text):
        words = _fields(raw, body)
        head, head_col = words[0]
        if head == "pm":
            start = head_col - 1 + len("pm")
            rest = body[start:]
            expr, arrow, principal = rest.rpartition("->")
            if not arrow:
                raise ParseError("expected 'pm <path> -> <principal>'", line=number, column=head_col)
            p_col = start + len(expr) + 3 + len(principal) - len(principal.lstrip())
            principal = principal.strip()
            _ident(principal, number, p_col, "principal")
            if expr.strip() == "default":
                condition = None
            else:
                try:
                    condition = parse_path(expr)
                except ParseError as exc:
                    raise ParseError(
                        f"bad path expression: {exc.args[0]}",
                        line=number,
                        column=start + 1 + (exc.offset or 0),
                    ) from None
            doc.pm_rules.append(PrincipalMatchingRule(condition, principal))
        elif head == "auth":
            _expect(words, 5, number, "auth <principal> <object|*> <action|*> allow|deny")
            principal = _ident(words[1][0], number, words[1][1], "principal")
            obj = words[2][0]
            if obj != "*":
                _node_id(obj, number, words[2][1])
            action = words[3][0]
            if action != "*":
                _ident(action, number, words[3][1], "action")
            try:
                decision = Decision.parse(words[4][0])
            except ValueError:
                raise ParseError("expected allow or deny", line=number, column=words[4][1]) from None
            doc.auth_rules.append(AuthorizationRule(principal, obj, action, decision))
        else:
            raise ParseError(f"unknown policy directive {head!r}", line=number, column=head_col)
    defaults = [i for i, r in enumerate(doc.pm_rules) if r.condition is None]
    if defaults and defaults != [len(doc.pm_rules) - 1]:
        raise ParseError("the default principal-matching rule must be the last pm rule")
    return doc


def format_pm_rule(rule: PrincipalMatchingRule) -> str:
    cond = "default" if rule.condition is None else render(rule.condition)
    return f"pm {cond} -> {rule.principal}"


def format_auth_rule(rule: AuthorizationRule) -> str:
    return f"auth {rule.principal} {rule.object} {rule.action} {rule.decision.word}"


def serialize_policy(doc: PolicyDocument) -> str:
    out = [format_pm_rule(r) for r in doc.pm_rules] + [format_auth_rule(r) for r in doc.auth_rules]
    return "".join(line + "\n" for line in out)


def resolve_policy(doc: PolicyDocument, model: SystemModel) -> None:
    """Check that path labels exist in ``model`` and auth principals are matchable."""
    for rule in doc.pm_rules:
        if rule.condition is None:
            continue
        for label in sorted(labels_of(rule.condition)):
            if kind_of_label(label) is EdgeKind.RELATIONSHIP and label not in model.labels:
                raise UnresolvedReferenceError(f"policy uses unknown label {label!r} in rule '{format_pm_rule(rule)}'")
    known = {r.principal for r in doc.pm_rules}
    for rule in doc.auth_rules:
        if rule.principal not in known:
            raise UnresolvedReferenceError(
                f"authorization rule '{format_auth_rule(rule)}' names principal "
                f"{rule.principal!r} that no pm rule can match"
            )


# -- config ------------------------------------------------------------------

CONFIG_KEYS = (
    "pms",
    "crs",
    "default_decision",
    "cache.enabled",
    "cache.write_on_eval",
    "cache.invalidation",
    "cache.max_total",
    "cache.max_out_degree",
    "cache.retirement_age",
    "cache.recent_k",
    "cw.enabled",
    "cw.paths",
    "cw.member_label",
)

_BOOL = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


def parse_config(text: str) -> EngineConfig:
    values: dict[str, tuple[str, int]] = {}
    for number, raw, body in _lines(text):
        key, eq, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or not key:
            raise ParseError("expected 'key = value'", line=number, column=1)
        if key not in CONFIG_KEYS:
            raise ParseError(f"unknown config key {key!r}", line=number, column=raw.index(key) + 1)
        values[key] = (value, number)

    def get(key, convert, default):
        if key not in values:
            return default
        value, number = values[key]
        try:
            return convert(value)
        except (KeyError, ValueError, ParseError):
            raise ParseError(f"bad value {value!r} for {key}", line=number) from None

    def optional_int(v: str):
        return None if v.lower() in ("none", "") else int(v)

    def enum_by_value(cls):
        table = {m.value.lower(): m for m in cls}
        return lambda v: table[v.lower()]

    def paths(v: str):
        return tuple(parse_path(p) for p in v.split(",") if p.strip())

    try:
        cache = CacheConfig(
            enabled=get("cache.enabled", lambda v: _BOOL[v.lower()], True),
            write_on_eval=get("cache.write_on_eval", lambda v: _BOOL[v.lower()], True),
            invalidation=get("cache.invalidation", enum_by_value(Invalidation), Invalidation.FLUSH_ALL),
            max_total=get("cache.max_total", optional_int, None),
            max_out_degree=get("cache.max_out_degree", optional_int, None),
            retirement_age=get("cache.retirement_age", optional_int, None),
            recent_k=get("cache.recent_k", int, 16),
        )
        cw = ChineseWallConfig(
            enabled=get("cw.enabled", lambda v: _BOOL[v.lower()], False),
            data_to_company_paths=get("cw.paths", paths, ()),
            membership_label=get("cw.member_label", str, "m"),
        )
    except ParseError:
        raise
    except Exception as exc:  # ConfigurationError from the dataclasses
        raise ParseError(str(exc)) from None
    return EngineConfig(
        pms=get("pms", enum_by_value(PMS), PMS.ALL_MATCH),
        crs=get("crs", enum_by_value(CRS), CRS.DENY_OVERRIDE),
        default_decision=get("default_decision", Decision.parse, Decision.DENY),
        cache=cache,
        cw=cw,
    )


def serialize_config(config: EngineConfig) -> str:
    def opt(v):
        return "none" if v is None else str(v)

    c, w = config.cache, config.cw
    pairs = [
        ("pms", config.pms.value),
        ("crs", config.crs.value),
        ("default_decision", config.default_decision.word),
        ("cache.enabled", str(c.enabled).lower()),
        ("cache.write_on_eval", str(c.write_on_eval).lower()),
        ("cache.invalidation", c.invalidation.value),
        ("cache.max_total", opt(c.max_total)),
        ("cache.max_out_degree", opt(c.max_out_degree)),
        ("cache.retirement_age", opt(c.retirement_age)),
        ("cache.recent_k", str(c.recent_k)),
        ("cw.enabled", str(w.enabled).lower()),
        ("cw.paths", ", ".join(render(p) for p in w.data_to_company_paths)),
        ("cw.member_label", w.membership_label),
    ]
    return "".join(f"{k} = {v}\n" for k, v in pairs)


# -- document sets -----------------------------------------------------------


@dataclass
class DocumentSet:
    model: SystemModel
    graph: SystemGraph
    policy: PolicyDocument
    config: EngineConfig

    def engine(self) -> Engine:
        return Engine(self.graph, self.policy.pm_rules, self.policy.auth_rules, self.config)


def load_documents(model_text: str, graph_text: str, policy_text: str, config_text: str = "") -> DocumentSet:
    """Parse and cross-check a full document set."""
    model = parse_model(model_text)
    problems = model.problems()
    if problems:
        raise WellFormednessError("; ".join(problems))
    graph = parse_graph(graph_text, model)
    policy = parse_policy(policy_text)
    resolve_policy(policy, model)
    config = parse_config(config_text)
    return DocumentSet(model, graph, policy, config)
