import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import load
from rppm import CacheConfig, ConfigurationError, EdgeKind, Invalidation, ObjectFocused, SubjectFocused
from scenarios import threshold_trial, transparency_trial

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_cached_engine_matches_uncached(seed):
    transparency_trial(random.Random(seed))


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 6), st.integers(1, 3))
def test_thresholds_hold(seed, max_total, max_out_degree):
    threshold_trial(random.Random(seed), steps=40, max_total=max_total, max_out_degree=max_out_degree)


@pytest.mark.parametrize("field", ["max_total", "max_out_degree", "retirement_age", "recent_k"])
def test_config_rejects_non_positive(field):
    with pytest.raises(ConfigurationError):
        CacheConfig(**{field: 0})


def test_lookup_counts_hits_and_misses(chain):
    cache = chain.cache
    assert cache.lookup("v2", "v4") is None
    cache.insert("v2", "v4", ["p5"])
    assert cache.lookup("v2", "v4") == ["p5"]
    assert (cache.stats.hits, cache.stats.misses, cache.stats.inserts) == (1, 1, 1)
    assert not cache.insert("v2", "v4", ["p5"])


def test_empty_principal_list_is_cached(chain):
    chain.evaluate("v4", "v1", "a1")
    assert chain.graph.caching_edge("v4", "v1").label == ()
    assert chain.evaluate("v4", "v1", "a1").cache_hit


def test_out_degree_evicts_least_recently_hit():
    engine = load("chain", max_out_degree=2).engine()
    engine.evaluate("v1", "v2", "a1")
    engine.evaluate("v1", "v3", "a1")
    engine.evaluate("v1", "v2", "a1")  # hit keeps v2 warm
    engine.evaluate("v1", "v4", "a1")
    targets = {e.dst for e in engine.graph.edges(EdgeKind.CACHING)}
    assert targets == {"v2", "v4"}
    assert engine.cache.stats.evictions == 1


def test_max_total():
    engine = load("chain", max_total=2).engine()
    for o in ("v1", "v2", "v3", "v4"):
        engine.evaluate("v2", o, "a1")
    assert len(engine.graph.edges(EdgeKind.CACHING)) == 2
    assert engine.cache.check_invariants() == []


def test_retirement_after_idle_evaluations():
    engine = load("chain", retirement_age=2).engine()
    engine.evaluate("v2", "v4", "a1")
    engine.evaluate("v1", "v1", "a1")
    assert engine.graph.caching_edge("v2", "v4") is not None
    engine.evaluate("v1", "v1", "a1")
    engine.evaluate("v1", "v1", "a1")
    assert engine.graph.caching_edge("v2", "v4") is None
    assert engine.cache.stats.retired >= 1


def test_scoped_invalidation_only_touches_source():
    engine = load("chain", invalidation=Invalidation.SCOPED_BY_SUBJECT).engine()
    engine.evaluate("v2", "v4", "a1")
    engine.evaluate("v1", "v4", "a1")
    engine.graph.add_edge("v1", "v2", EdgeKind.RELATIONSHIP, "r1")
    assert engine.graph.caching_edge("v2", "v4") is not None
    assert engine.graph.caching_edge("v1", "v4") is None


def test_scoped_invalidation_can_go_stale():
    # a change downstream of the subject is invisible to subject scoping
    engine = load("chain", invalidation=Invalidation.SCOPED_BY_SUBJECT).engine()
    assert engine.evaluate("v2", "v4", "a1").matched_principals == ["p5"]
    engine.graph.remove_edge("v3", "v4", EdgeKind.RELATIONSHIP, "r3")
    stale = engine.evaluate("v2", "v4", "a1")
    assert stale.cache_hit and stale.matched_principals == ["p5"]
    assert engine.match("v2", "v4")[0] == []


def test_precache_subject_focused(chain):
    chain.evaluate("v1", "v1", "a1")
    chain.evaluate("v2", "v2", "a1")
    assert chain.precache(SubjectFocused(1, ("v3", "v4")), 10) == 2
    assert chain.graph.caching_edge("v2", "v4").label == ("p5",)
    assert chain.graph.caching_edge("v1", "v4") is None
    audits = chain.graph.edges(EdgeKind.DECISION_AUDIT)
    assert {(e.src, e.dst) for e in audits} == {("v1", "v1"), ("v2", "v2")}


def test_precache_object_focused_respects_budget(chain):
    assert chain.precache(ObjectFocused(("v4",), ("v1", "v2", "v3")), 2) == 2
    assert chain.precache(ObjectFocused(("v4",), ("v1", "v2", "v3")), 5) == 1
    assert chain.precache(ObjectFocused(("v4",), ("v1", "v2", "v3")), 5) == 0
    out = chain.evaluate("v2", "v4", "a1")
    assert out.cache_hit and out.matched_principals == ["p5"]


def test_precache_disabled_cache():
    engine = load("chain", enabled=False).engine()
    assert engine.precache(ObjectFocused(("v4",), ("v2",)), 5) == 0
    with pytest.raises(ValueError):
        engine.precache(ObjectFocused(("v4",), ("v2",)), -1)


def test_preloaded_caching_edges_are_adopted():
    docs = load("chain")
    docs.graph.add_edge("v2", "v4", EdgeKind.CACHING, ("p5",))
    engine = docs.engine()
    assert engine.evaluate("v2", "v4", "a2").cache_hit
