"""Randomized trace drivers shared by the property and acceptance tests.

Each ``*_trial`` function builds one random instance from ``rng``, runs it
and raises AssertionError on the first disagreement with the reference.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from oracles import random_condition, random_graph, relation
from rppm import (
    CRS,
    PMS,
    AuthorizationRule,
    CacheConfig,
    ChineseWallConfig,
    Decision,
    EdgeKind,
    Engine,
    EngineConfig,
    EvalMetrics,
    Invalidation,
    ObjectFocused,
    PrincipalMatchingRule,
    Request,
    SodMode,
    SodSpec,
    SubjectFocused,
    SystemGraph,
    SystemModel,
    WallLayout,
    cw_oracle,
    generate_chinese_wall,
    generate_sod,
    parse_path,
    satisfies,
    simplify,
    sod_oracle,
)
from rppm.matcher import state_bound
from rppm.paths import is_simple, leaf_count

ALLOW, DENY = Decision.ALLOW, Decision.DENY


# -- matcher and simplifier --------------------------------------------------


def matcher_trial(rng: random.Random) -> int:
    """Compare the matcher with the relation oracle on every node pair."""
    rg = random_graph(rng, max_nodes=8)
    pc = random_condition(rng, rng.randint(1, 4))
    graph = rg.build()
    expected = relation(rg.nodes, rg.triples, rg.symmetric, pc)
    bound = state_bound(graph, pc)
    for u in rg.nodes:
        for v in rg.nodes:
            metrics = EvalMetrics()
            got = satisfies(graph, u, v, pc, metrics)
            assert got == ((u, v) in expected), f"{pc} on {rg.triples}: ({u}, {v})"
            assert metrics.nodes_visited <= bound
    return len(rg.nodes) ** 2


def simplifier_trial(rng: random.Random) -> None:
    pc = random_condition(rng, rng.randint(1, 5))
    s = simplify(pc)
    assert is_simple(s), str(s)
    assert simplify(s) == s
    assert leaf_count(s) <= leaf_count(pc)
    for _ in range(3):
        rg = random_graph(rng, max_nodes=5)
        assert relation(rg.nodes, rg.triples, rg.symmetric, pc) == relation(
            rg.nodes, rg.triples, rg.symmetric, s
        ), f"{pc} vs {s}"


# -- separation of duty ------------------------------------------------------

SOD_MODEL = SystemModel({"user", "resource"}, {"r"}, set(), {("user", "resource", "r")})


def sod_engine(users, links, spec: SodSpec, pms=PMS.ALL_MATCH, crs=CRS.DENY_OVERRIDE, cache=None):
    graph = SystemGraph(SOD_MODEL)
    for u in users:
        graph.add_node(u, "user")
    for o in ("o", "o2"):
        graph.add_node(o, "resource")
    for u, o in links:
        graph.add_edge(u, o, EdgeKind.RELATIONSHIP, "r")
    base_pm = [PrincipalMatchingRule(parse_path("r"), "p")]
    base_auth = [AuthorizationRule("p", o, "*", ALLOW) for o in ("o", "o2")]
    pm, auth = generate_sod(base_pm, base_auth, spec)
    config = EngineConfig(pms=pms, crs=crs, cache=cache or CacheConfig())
    return Engine(graph, pm, auth, config)


def sod_trial(
    rng: random.Random,
    pms=PMS.ALL_MATCH,
    crs=CRS.DENY_OVERRIDE,
    mode=SodMode.GENERAL,
    max_requests=30,
    deny_only=False,
) -> int:
    """One random request trace checked against the separation-of-duty oracle.

    With ``deny_only`` the engine may refuse more than the oracle but must
    never allow a request the oracle refuses.
    """
    users = [f"u{i}" for i in range(1, rng.randint(1, 5) + 1)]
    actions = tuple(f"a{i}" for i in range(1, rng.randint(2, 4) + 1))
    spec = SodSpec("o", actions, mode=mode)
    links = {(u, o) for u in users for o in ("o", "o2") if rng.random() < 0.8}
    cache = CacheConfig(enabled=rng.random() < 0.8)
    engine = sod_engine(users, links, spec, pms, crs, cache)
    history = []
    n = rng.randint(1, max_requests)
    for _ in range(n):
        if rng.random() < 0.1:
            u, o = rng.choice(users), rng.choice(("o", "o2"))
            if (u, o) in links:
                links.discard((u, o))
                engine.graph.remove_edge(u, o, EdgeKind.RELATIONSHIP, "r")
            else:
                links.add((u, o))
                engine.graph.add_edge(u, o, EdgeKind.RELATIONSHIP, "r")
        request = Request(rng.choice(users), rng.choice(("o", "o", "o2")), rng.choice(actions + ("x",)))
        base = ALLOW if (request.subject, request.object) in links else DENY
        expected = sod_oracle(history, request, base, spec)
        got = engine.evaluate(request).decision
        ok = not (got is ALLOW and expected is DENY) if deny_only else got is expected
        assert ok, f"{request}: engine {got.word}, oracle {expected.word}; history {history}"
        history.append((request, got))
    return n


# -- Chinese Wall ------------------------------------------------------------

CW_MODEL = SystemModel(
    {"user", "employer", "client", "folder", "file", "coiclass"},
    {"w", "s", "pt", "d", "f", "m"},
    set(),
    {
        ("user", "employer", "w"),
        ("employer", "client", "s"),
        ("employer", "employer", "pt"),
        ("file", "client", "d"),
        ("folder", "client", "d"),
        ("file", "folder", "f"),
        ("client", "coiclass", "m"),
    },
)
CW_TYPES = {
    "user": "user", "emp": "employer", "c": "client", "dir": "folder", "f": "file", "i": "coiclass",
}


@dataclass
class WallWorld:
    """A random wall layout kept as plain data next to the graph built from it."""

    p1: list[str]
    p2: list[str]
    users: list[str] = field(default_factory=list)
    files: list[str] = field(default_factory=list)
    company_of: dict[str, str] = field(default_factory=dict)
    classes_of: dict[str, frozenset[str]] = field(default_factory=dict)
    employer_of: dict[str, str] = field(default_factory=dict)
    supplies: dict[str, set[str]] = field(default_factory=dict)
    partner: dict[str, str] = field(default_factory=dict)
    triples: list[tuple[str, str, str]] = field(default_factory=list)

    def readable(self, user: str) -> set[str]:
        employer = self.employer_of.get(user)
        if employer is None:
            return set()
        out = set(self.supplies[employer]) if "w . s" in self.p1 else set()
        if "w . pt . s" in self.p1 and employer in self.partner:
            out |= self.supplies[self.partner[employer]]
        return out

    def base(self, request: Request) -> Decision:
        ok = request.action == "read" and self.company_of[request.object] in self.readable(request.subject)
        return ALLOW if ok else DENY


def random_wall(rng: random.Random) -> WallWorld:
    multi = rng.random() < 0.5
    world = WallWorld(
        p1=["w . s", "w . pt . s"] if multi else ["w . s"],
        p2=["d", "f . d"] if multi else ["d"],
    )
    classes = [f"i{k}" for k in range(1, rng.randint(1, 3) + 1)]
    companies = []
    for cls in classes:
        for _ in range(rng.randint(1, 4)):
            c = f"c{len(companies) + 1}"
            companies.append(c)
            mine = {cls}
            if rng.random() < 0.15:
                mine.add(rng.choice(classes))
            if rng.random() < 0.05:
                mine = set()
            world.classes_of[c] = frozenset(mine)
            world.triples += [(c, "m", k) for k in sorted(mine)]
    for c in companies:
        for _ in range(rng.randint(1, 3)):
            fid = f"f{len(world.files) + 1}"
            world.files.append(fid)
            world.company_of[fid] = c
            if multi and rng.random() < 0.5:
                folder = f"dir{len(world.files)}"
                world.triples += [(fid, "f", folder), (folder, "d", c)]
            else:
                world.triples.append((fid, "d", c))
    employers = [f"emp{k}" for k in range(1, rng.randint(1, 2) + 1)]
    for e in employers:
        world.supplies[e] = {c for c in companies if rng.random() < 0.6}
        world.triples += [(e, "s", c) for c in sorted(world.supplies[e])]
    if multi and len(employers) > 1:
        world.partner[employers[0]] = employers[1]
        world.triples.append((employers[0], "pt", employers[1]))
    for k in range(1, rng.randint(1, 3) + 1):
        u = f"user{k}"
        world.users.append(u)
        if rng.random() < 0.9:
            world.employer_of[u] = rng.choice(employers)
            world.triples.append((u, "w", world.employer_of[u]))
    return world


def wall_engine(world: WallWorld, pms=PMS.ALL_MATCH, crs=CRS.DENY_OVERRIDE, cache=None) -> Engine:
    graph = SystemGraph(CW_MODEL)
    names = {n for s, _, d in world.triples for n in (s, d)} | set(world.users) | set(world.files)
    for name in sorted(names):
        graph.add_node(name, CW_TYPES[name.rstrip("0123456789")])
    for s, label, d in world.triples:
        graph.add_edge(s, d, EdgeKind.RELATIONSHIP, label)
    p2 = [parse_path(p) for p in world.p2]
    base_pm = [
        PrincipalMatchingRule(parse_path(f"{a} . ~({b})"), "p") for a in world.p1 for b in world.p2
    ]
    base_auth = [AuthorizationRule("p", "*", "read", ALLOW)]
    pm, auth = generate_chinese_wall(base_pm, base_auth, p2)
    config = EngineConfig(
        pms=pms,
        crs=crs,
        cache=cache or CacheConfig(),
        cw=ChineseWallConfig(True, p2, "m"),
    )
    return Engine(graph, pm, auth, config)


def wall_trial(rng: random.Random, pms=PMS.ALL_MATCH, crs=CRS.DENY_OVERRIDE, max_requests=30) -> int:
    """One random request trace checked against the Chinese Wall oracle."""
    world = random_wall(rng)
    engine = wall_engine(world, pms, crs, CacheConfig(enabled=rng.random() < 0.8))
    layout = WallLayout(world.company_of, world.classes_of)
    history = []
    n = rng.randint(1, max_requests)
    for _ in range(n):
        request = Request(rng.choice(world.users), rng.choice(world.files), rng.choice(("read", "read", "write")))
        expected = cw_oracle(history, request, world.base(request), layout)
        got = engine.evaluate(request).decision
        assert got is expected, f"{request}: engine {got.word}, oracle {expected.word}; history {history}"
        history.append((request, got))
    return n


# -- caching -----------------------------------------------------------------

RING = 6
CACHE_MODEL = SystemModel({"t"}, {"a", "b", "c"}, {"c"}, {("t", "t", lab) for lab in "abc"})
CACHE_POLICIES = [
    ["a -> p1", "a . b -> p2", "c -> p3", "~a . a -> p4"],
    ["a+ -> p1", "allow!r . a -> p2", "b -> p3", "<> -> p4"],
    ["~a -> p2", "(a . c)+ -> p1", "deny!w . ~a -> p3"],
]
CACHE_AUTH = [
    AuthorizationRule("p1", "*", "r", ALLOW),
    AuthorizationRule("p2", "*", "w", ALLOW),
    AuthorizationRule("p3", "*", "*", DENY),
    AuthorizationRule("p4", "*", "r", DENY),
    AuthorizationRule("p4", "n0", "*", ALLOW),
]


def _pm(lines):
    out = []
    for line in lines:
        cond, principal = (x.strip() for x in line.split("->"))
        out.append(PrincipalMatchingRule(parse_path(cond), principal))
    return tuple(out)


def _ring_graph() -> SystemGraph:
    graph = SystemGraph(CACHE_MODEL)
    for i in range(RING):
        graph.add_node(f"n{i}", "t")
    for i in range(RING):
        graph.add_edge(f"n{i}", f"n{(i + 1) % RING}", EdgeKind.RELATIONSHIP, "a")
    return graph


def cache_pair(rng: random.Random, cache: CacheConfig):
    pms = rng.choice(list(PMS))
    crs = rng.choice(list(CRS))
    policy = rng.randrange(len(CACHE_POLICIES))
    engines = []
    for cfg in (cache, CacheConfig(enabled=False)):
        config = EngineConfig(pms=pms, crs=crs, cache=cfg)
        engines.append(Engine(_ring_graph(), _pm(CACHE_POLICIES[policy]), CACHE_AUTH, config))
    return engines


def transparency_trial(rng: random.Random, steps: int = 25, cache: CacheConfig | None = None) -> int:
    """Interleave evaluations with graph and policy changes; return the hit count.

    The cached engine must agree with a cache-free twin on every decision
    and matched-principal list, hits must skip matching entirely, and
    every caching edge must equal what matching would produce now.
    """
    warm, cold = cache_pair(rng, cache or CacheConfig(invalidation=Invalidation.FLUSH_ALL))
    nodes = warm.graph.nodes
    extras: list[tuple[str, str, str]] = []
    hits = 0
    for _ in range(steps):
        roll = rng.random()
        if roll < 0.15:
            edge = (rng.choice(nodes), rng.choice("abc"), rng.choice(nodes))
            added = [e.graph.add_edge(edge[0], edge[2], EdgeKind.RELATIONSHIP, edge[1]) for e in (warm, cold)]
            assert added[0] == added[1]
            # ring edges stay put so every request inspects at least one edge
            if added[0]:
                extras.append(edge)
        elif roll < 0.25 and extras:
            s, label, d = extras.pop(rng.randrange(len(extras)))
            for e in (warm, cold):
                e.graph.remove_edge(s, d, EdgeKind.RELATIONSHIP, label)
        elif roll < 0.3:
            pm = _pm(rng.choice(CACHE_POLICIES))
            for e in (warm, cold):
                e.reload_policy(pm, CACHE_AUTH)
        elif roll < 0.35:
            warm.precache(ObjectFocused((rng.choice(nodes),)), rng.randint(0, 4))
        else:
            request = Request(rng.choice(nodes), rng.choice(nodes), rng.choice("rwx"))
            a, b = warm.evaluate(request), cold.evaluate(request)
            assert (a.decision, a.matched_principals) == (b.decision, b.matched_principals), (
                f"{request}: cached {a.decision.word} {a.matched_principals}, "
                f"uncached {b.decision.word} {b.matched_principals}"
            )
            if a.cache_hit:
                hits += 1
                assert a.metrics.edges_considered == 0 and a.metrics.nodes_visited == 0
                assert b.metrics.edges_considered >= 1
        assert warm.cache.check_invariants() == []
        for edge in warm.graph.edges(EdgeKind.CACHING):
            assert list(edge.label) == cold.match(edge.src, edge.dst)[0], f"stale {edge}"
    return hits


def threshold_trial(rng: random.Random, steps: int = 60, max_total: int = 16, max_out_degree: int = 2) -> None:
    """Random cache traffic; thresholds and bookkeeping must hold after every step."""
    retirement = rng.choice([None, None, 3, 10])
    cfg = CacheConfig(max_total=max_total, max_out_degree=max_out_degree, retirement_age=retirement)
    engine = Engine(_ring_graph(), _pm(rng.choice(CACHE_POLICIES)), CACHE_AUTH, EngineConfig(cache=cfg))
    for i in range(RING, 12):
        engine.graph.add_node(f"n{i}", "t")
    nodes = engine.graph.nodes
    for _ in range(steps):
        roll = rng.random()
        if roll < 0.5:
            engine.evaluate(rng.choice(nodes), rng.choice(nodes), rng.choice("rwx"))
        elif roll < 0.65:
            engine.cache.insert(rng.choice(nodes), rng.choice(nodes), (rng.choice(["p1", "p2"]),))
        elif roll < 0.75:
            engine.precache(SubjectFocused(rng.randint(1, 4), tuple(rng.sample(nodes, 4))), rng.randint(0, 20))
        elif roll < 0.85:
            engine.precache(ObjectFocused(tuple(rng.sample(nodes, 3)), tuple(rng.sample(nodes, 5))), 20)
        elif roll < 0.9:
            engine.cache.retire()
        else:
            s, d = rng.choice(nodes), rng.choice(nodes)
            label = rng.choice("bc")
            if not engine.graph.remove_edge(s, d, EdgeKind.RELATIONSHIP, label):
                engine.graph.add_edge(s, d, EdgeKind.RELATIONSHIP, label)
        problems = engine.cache.check_invariants()
        assert problems == [], problems
        assert len(engine.graph.edges(EdgeKind.CACHING)) <= max_total
