# dns_cache.py - RRset cache behind a policy interface (random and TTL-ordered eviction)
"""
Record cache used by DNS server nodes.

One entry per (name, type) RRset. An entry is valid while
now < inserted_at + original_ttl, where original_ttl is the smallest TTL of
its records. Reads hand back copies whose TTL is decayed to the remaining
lifetime (rounded up, so a hit never reports 0).

Policies:
- DNSSimpleCache: evicts a uniformly random entry, drawing from the owning
  node's seeded RNG stream
- DNSTTLCache: evicts the entry with the earliest expiry (ties: earliest insertion)
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from config import CACHE_DEFAULTS, NS_PER_SECOND
from dns_wire import DomainName, ResourceRecord, RRType

logger = logging.getLogger(__name__)

POLICY_KINDS = ("simple", "ttl")


@dataclass(frozen=True)
class CacheKey:
    name: DomainName
    rtype: RRType

    def __post_init__(self):
        object.__setattr__(self, "rtype", RRType(self.rtype))
        if self.rtype is RRType.ANY:
            raise ValueError("cache keys cannot use type ANY")

    @classmethod
    def for_record(cls, record: ResourceRecord) -> "CacheKey":
        return cls(record.owner, record.rtype)


@dataclass
class CacheEntry:
    records: List[ResourceRecord]
    inserted_at: int        # SimTime, ns
    original_ttl: int       # seconds, minimum over the records
    seq: int                # insertion order, TTL-policy tiebreak

    @property
    def expiry(self) -> int:
        return self.inserted_at + self.original_ttl * NS_PER_SECOND

    def is_valid(self, now: int) -> bool:
        return now < self.expiry

    def remaining_ttl(self, now: int) -> int:
        return -(-(self.expiry - now) // NS_PER_SECOND)


@dataclass(frozen=True)
class CachePolicy:
    kind: str = CACHE_DEFAULTS["policy"]
    capacity: int = CACHE_DEFAULTS["capacity"]
    rng_stream: str = "cache"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown cache policy {self.kind!r}, expected one of {POLICY_KINDS}")
        if self.capacity < 1:
            raise ValueError(f"cache capacity must be >= 1, got {self.capacity}")


class CacheStore(ABC):
    """Capacity-bounded RRset store; subclasses pick the eviction victim."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"cache capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries: Dict[CacheKey, CacheEntry] = {}
        self._seq = 0
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: CacheKey) -> bool:
        return key in self._entries

    def keys(self) -> List[CacheKey]:
        return list(self._entries)

    def peek(self, key: CacheKey) -> Optional[CacheEntry]:
        """Entry without expiry handling or statistics"""
        return self._entries.get(key)

    def put(self, key: CacheKey, records: Sequence[ResourceRecord], now: int) -> List[CacheKey]:
        """Store an RRset; returns the keys evicted to make room"""
        if not records:
            raise ValueError(f"empty RRset for {key.name} {key.rtype.name}")
        for record in records:
            if record.owner != key.name or record.rtype != key.rtype:
                raise ValueError(f"record {record.to_text()} does not match key {key.name} {key.rtype.name}")

        evicted: List[CacheKey] = []
        if key not in self._entries and len(self._entries) >= self.capacity:
            victim = self._choose_victim()
            del self._entries[victim]
            self.evictions += 1
            evicted.append(victim)
            logger.debug(f"Evicted {victim.name} {victim.rtype.name}")

        self._seq += 1
        self._entries[key] = CacheEntry(
            records=list(records),
            inserted_at=now,
            original_ttl=min(record.ttl for record in records),
            seq=self._seq,
        )
        return evicted

    def get(self, key: CacheKey, now: int) -> Optional[List[ResourceRecord]]:
        """Records with TTL decayed to the remaining lifetime, or None on a miss"""
        entry = self._entries.get(key)
        if entry is None:
            self.misses += 1
            return None
        if not entry.is_valid(now):
            del self._entries[key]
            self.misses += 1
            return None
        self.hits += 1
        remaining = entry.remaining_ttl(now)
        return [record.with_ttl(remaining) for record in entry.records]

    def sweep(self, now: int) -> int:
        """Drop every entry with expiry <= now"""
        expired = [key for key, entry in self._entries.items() if entry.expiry <= now]
        for key in expired:
            del self._entries[key]
        return len(expired)

    def get_stats(self) -> Dict[str, float]:
        total = self.hits + self.misses
        hit_rate = (self.hits / total * 100) if total > 0 else 0
        return {
            "hits": self.hits,
            "misses": self.misses,
            "evictions": self.evictions,
            "hit_rate_pct": round(hit_rate, 1),
            "cache_size": len(self._entries),
            "capacity": self.capacity,
        }

    @abstractmethod
    def _choose_victim(self) -> CacheKey:
        """Key to evict when the store is full"""


class DNSSimpleCache(CacheStore):
    """Random eviction"""

    def __init__(self, capacity: int, rng: np.random.Generator):
        super().__init__(capacity)
        self._rng = rng

    def _choose_victim(self) -> CacheKey:
        keys = list(self._entries)
        return keys[int(self._rng.integers(len(keys)))]


class DNSTTLCache(CacheStore):
    """Lifetime-based eviction"""

    def _choose_victim(self) -> CacheKey:
        key, _ = min(self._entries.items(), key=lambda item: (item[1].expiry, item[1].seq))
        return key


def make_cache(policy: CachePolicy, rng: Optional[np.random.Generator] = None) -> CacheStore:
    if policy.kind == "simple":
        if rng is None:
            raise ValueError("the simple cache policy needs an RNG stream")
        return DNSSimpleCache(policy.capacity, rng)
    return DNSTTLCache(policy.capacity)


def cache_put(store: CacheStore, key: CacheKey, records: Sequence[ResourceRecord], now: int) -> List[CacheKey]:
    return store.put(key, records, now)


def cache_get(store: CacheStore, key: CacheKey, now: int) -> Optional[List[ResourceRecord]]:
    return store.get(key, now)


def cache_sweep(store: CacheStore, now: int) -> int:
    return store.sweep(now)
