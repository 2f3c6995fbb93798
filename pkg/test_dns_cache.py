import ipaddress

import numpy as np
import pytest

from config import NS_PER_SECOND
from dns_cache import CacheKey, CachePolicy, DNSSimpleCache, DNSTTLCache, make_cache
from dns_wire import DomainName, ResourceRecord, RRType
from sim_kernel import rng_stream


def a_record(label, ttl, address="10.0.0.1"):
    return ResourceRecord(DomainName.from_text(f"{label}.example."), RRType.A, ttl, ipaddress.IPv4Address(address))


def key_of(label):
    return CacheKey(DomainName.from_text(f"{label}.example."), RRType.A)


def test_entry_expires_exactly_at_its_lifetime():
    cache = DNSTTLCache(4)
    cache.put(key_of("www"), [a_record("www", 10)], now=0)
    assert cache.get(key_of("www"), 10 * NS_PER_SECOND - 1) is not None
    assert cache.get(key_of("www"), 10 * NS_PER_SECOND) is None
    assert key_of("www") not in cache


def test_hits_report_decayed_ttl_rounded_up():
    cache = DNSTTLCache(4)
    cache.put(key_of("www"), [a_record("www", 10)], now=0)
    (record,) = cache.get(key_of("www"), int(2.5 * NS_PER_SECOND))
    assert record.ttl == 8
    (record,) = cache.get(key_of("www"), 10 * NS_PER_SECOND - 1)
    assert record.ttl == 1


def test_rrset_lifetime_is_the_smallest_ttl():
    cache = DNSTTLCache(4)
    records = [a_record("www", 30, "10.0.0.1"), a_record("www", 5, "10.0.0.2")]
    cache.put(key_of("www"), records, now=0)
    assert cache.peek(key_of("www")).original_ttl == 5
    assert cache.get(key_of("www"), 5 * NS_PER_SECOND) is None


def test_mismatched_or_empty_rrsets_are_refused():
    cache = DNSTTLCache(4)
    with pytest.raises(ValueError):
        cache.put(key_of("www"), [], now=0)
    with pytest.raises(ValueError):
        cache.put(key_of("www"), [a_record("mail", 5)], now=0)
    with pytest.raises(ValueError):
        CacheKey(DomainName.from_text("www.example."), RRType.ANY)


def test_ttl_policy_evicts_earliest_expiry_then_earliest_insert():
    cache = DNSTTLCache(3)
    cache.put(key_of("a"), [a_record("a", 50)], now=0)
    cache.put(key_of("b"), [a_record("b", 20)], now=0)
    cache.put(key_of("c"), [a_record("c", 20)], now=0)
    assert cache.put(key_of("d"), [a_record("d", 100)], now=0) == [key_of("b")]
    assert cache.put(key_of("e"), [a_record("e", 100)], now=0) == [key_of("c")]
    assert cache.keys() == [key_of("a"), key_of("d"), key_of("e")]


def test_ttl_policy_evicts_the_shortest_lived_of_three_types():
    owner = DomainName.from_text("uni-konstanz.de.")
    target = DomainName.from_text("pan.rz.uni-konstanz.de.")
    cache = DNSTTLCache(2)
    address = ipaddress.IPv4Address("134.34.240.80")
    cache.put(CacheKey(owner, RRType.A), [ResourceRecord(owner, RRType.A, 100, address)], now=0)
    cache.put(CacheKey(owner, RRType.NS), [ResourceRecord(owner, RRType.NS, 50, target)], now=0)
    evicted = cache.put(CacheKey(owner, RRType.CNAME), [ResourceRecord(owner, RRType.CNAME, 200, target)],
                        now=10 * NS_PER_SECOND)
    assert evicted == [CacheKey(owner, RRType.NS)]
    assert CacheKey(owner, RRType.A) in cache


def test_simple_policy_third_put_evicts_one_seeded_victim():
    def third_put(seed):
        cache = DNSSimpleCache(2, rng_stream("resolver-1/cache", seed))
        cache.put(key_of("a"), [a_record("a", 100)], now=0)
        cache.put(key_of("b"), [a_record("b", 100)], now=0)
        return cache.put(key_of("c"), [a_record("c", 100)], now=0)

    evicted = third_put(42)
    assert len(evicted) == 1 and evicted[0] in (key_of("a"), key_of("b"))
    assert third_put(42) == evicted


def test_replacing_a_key_does_not_evict():
    cache = DNSTTLCache(1)
    cache.put(key_of("a"), [a_record("a", 50)], now=0)
    assert cache.put(key_of("a"), [a_record("a", 60)], now=0) == []
    assert cache.evictions == 0


def test_ttl_policy_matches_brute_force_model():
    rng = np.random.default_rng(7)
    cache = DNSTTLCache(8)
    # key -> (expiry, seq)
    model = {}
    seq = 0
    now = 0
    for _ in range(10_000):
        now += int(rng.integers(0, 3 * NS_PER_SECOND))
        label = f"h{int(rng.integers(20))}"
        if rng.integers(3) == 0:
            got = cache.get(key_of(label), now)
            expected = key_of(label) in model and now < model[key_of(label)][0]
            assert (got is not None) == expected
            if key_of(label) in model and not expected:
                del model[key_of(label)]
            continue
        ttl = int(rng.integers(1, 30))
        evicted = cache.put(key_of(label), [a_record(label, ttl)], now)
        if key_of(label) not in model and len(model) >= 8:
            victim = min(model, key=lambda k: model[k])
            assert evicted == [victim]
            del model[victim]
        else:
            assert evicted == []
        seq += 1
        model[key_of(label)] = (now + ttl * NS_PER_SECOND, seq)
        assert len(cache) <= 8


def test_simple_policy_is_deterministic_per_stream():
    def fill(seed):
        cache = DNSSimpleCache(4, rng_stream("resolver-1/cache", seed))
        evicted = []
        for i in range(40):
            evicted += cache.put(key_of(f"h{i}"), [a_record(f"h{i}", 100)], now=0)
        return evicted

    assert fill(3) == fill(3)
    assert len(fill(3)) == 36


def test_sweep_drops_expired_entries():
    cache = DNSTTLCache(8)
    cache.put(key_of("short"), [a_record("short", 1)], now=0)
    cache.put(key_of("long"), [a_record("long", 100)], now=0)
    assert cache.sweep(NS_PER_SECOND) == 1
    assert cache.keys() == [key_of("long")]


def test_stats_and_factory():
    cache = make_cache(CachePolicy("ttl", 2))
    assert isinstance(cache, DNSTTLCache)
    cache.put(key_of("a"), [a_record("a", 5)], now=0)
    cache.get(key_of("a"), 0)
    cache.get(key_of("b"), 0)
    stats = cache.get_stats()
    assert (stats["hits"], stats["misses"], stats["hit_rate_pct"]) == (1, 1, 50.0)
    with pytest.raises(ValueError):
        make_cache(CachePolicy("simple", 2))
    with pytest.raises(ValueError):
        CachePolicy("lru", 2)
