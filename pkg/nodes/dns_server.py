# nodes/dns_server.py
"""
Simulated DNS server nodes.

DNSServerBase owns the iterative resolution machinery (root hints, referral
following, CNAME restarts, upstream timeouts, record caching). The concrete
roles only decide how an incoming query is answered:

    DNSAuthServer     answers from its zone
    DNSCachingServer  answers recursive queries through the cache + iteration
    DNSEchoServer     answers from data encoded in the query name
"""

import ipaddress
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from config import (
    AUTH_SUPPORTED_QTYPES, CCA_MARKER_LABEL, CNAME_CHASE_LIMIT, DNS_QUERY_RETRIES,
    DNS_QUERY_TIMEOUT_SECONDS, ECHO_MARKER_LABEL, ECHO_RECORD_TTL, seconds_to_ns,
)
from dns_cache import CacheKey, CachePolicy, CacheStore, make_cache
from dns_wire import (
    ROOT, DnsFlags, DnsMessage, DnsQuestion, DomainName, Rcode, ResourceRecord, RRType, TXTData,
    make_response,
)
from sim_kernel import SimPacket, TimeEvent
from sim_logging import log_event
from zone_config import ZoneConfig

from .base_node import ResolverConfigError, SimNode

logger = logging.getLogger(__name__)

RootHints = List[Tuple[DomainName, str]]
Continuation = Callable[[Rcode, List[ResourceRecord]], None]

SUPPORTED_QTYPES = tuple(RRType.from_text(name) for name in AUTH_SUPPORTED_QTYPES)


class ServerRole(str, Enum):
    AUTH = "auth"
    CACHING = "caching"
    ECHO = "echo"


# ============= AUTHORITATIVE ANSWERS =============

def auth_handle_query(zone: ZoneConfig, msg: DnsMessage) -> DnsMessage:
    """Answer one query from zone data"""
    if len(msg.questions) != 1:
        return make_response(msg, Rcode.FORMERR)
    question = msg.questions[0]
    if question.qtype not in SUPPORTED_QTYPES:
        return make_response(msg, Rcode.NOTIMP)
    if not zone.contains(question.qname):
        return make_response(msg, Rcode.SERVFAIL)

    delegation = zone.find_delegation(question.qname)
    if delegation is not None:
        _, ns_records = delegation
        return make_response(msg, Rcode.NOERROR, authorities=ns_records, additionals=zone.glue_for(ns_records))

    answers: List[ResourceRecord] = []
    result = zone.lookup(question.qname, question.qtype)
    depth = 0
    while result is not None and result.cname is not None and depth < CNAME_CHASE_LIMIT:
        answers.append(result.cname)
        target = result.cname.rdata
        depth += 1
        # stop at the zone edge; the querier chases the rest
        if not zone.contains(target) or zone.find_delegation(target) is not None:
            result = None
            break
        result = zone.lookup(target, question.qtype)

    if result is not None:
        answers.extend(result.records)
        if not result.records and result.cname is None:
            rcode = Rcode.NXDOMAIN if result.nxdomain else Rcode.NOERROR
            return make_response(msg, rcode, aa=True, answers=answers, authorities=[zone.soa])

    apex_ns = list(zone.records.get((zone.origin, RRType.NS), ()))
    authorities = [] if any(rr.rtype is RRType.NS and rr.owner == zone.origin for rr in answers) else apex_ns
    return make_response(msg, Rcode.NOERROR, aa=True, answers=answers,
                         authorities=authorities, additionals=zone.glue_for(apex_ns))


# ============= ECHO / CCA ANSWERS =============

def _decode_echo_label(label: bytes) -> Optional[ipaddress.IPv4Address]:
    if len(label) != 8:
        return None
    try:
        return ipaddress.IPv4Address(bytes.fromhex(label.decode("ascii")))
    except ValueError:
        return None


def echo_handle_query(msg: DnsMessage, querier_address: Optional[str]) -> DnsMessage:
    """
    Stateless answers:
      <8 hex digits>.00.<suffix>  -> A record decoded from the hex label
      <anything>.cca.<suffix>     -> TXT with the querier's address
    """
    if len(msg.questions) != 1:
        return make_response(msg, Rcode.FORMERR)
    question = msg.questions[0]
    labels = question.qname.key

    if ECHO_MARKER_LABEL in labels:
        index = labels.index(ECHO_MARKER_LABEL)
        address = _decode_echo_label(labels[index - 1]) if index > 0 else None
        if address is None:
            return make_response(msg, Rcode.NXDOMAIN, aa=True)
        if question.qtype not in (RRType.A, RRType.ANY):
            return make_response(msg, Rcode.NOERROR, aa=True)
        record = ResourceRecord(question.qname, RRType.A, ECHO_RECORD_TTL, address)
        return make_response(msg, Rcode.NOERROR, aa=True, answers=[record])

    if CCA_MARKER_LABEL in labels and querier_address is not None:
        if question.qtype not in (RRType.TXT, RRType.ANY):
            return make_response(msg, Rcode.NOERROR, aa=True)
        record = ResourceRecord(question.qname, RRType.TXT, ECHO_RECORD_TTL, TXTData.from_strings(querier_address))
        return make_response(msg, Rcode.NOERROR, aa=True, answers=[record])

    return make_response(msg, Rcode.NXDOMAIN, aa=True)


# ============= ITERATIVE RESOLUTION =============

@dataclass(eq=False)
class PendingResolution:
    question: DnsQuestion
    continuation: Continuation
    qname: DomainName
    chain: List[ResourceRecord] = field(default_factory=list)   # CNAMEs followed so far
    zone_cut: DomainName = ROOT
    servers: List[str] = field(default_factory=list)
    server_index: int = 0
    retries: int = 0
    visited: List[DomainName] = field(default_factory=list)
    cname_depth: int = 0
    nesting: int = 0
    query_id: Optional[int] = None
    timeout: Optional[TimeEvent] = None
    upstream_queries: int = 0
    done: bool = False

    @property
    def current_server(self) -> str:
        return self.servers[self.server_index % len(self.servers)]


class DNSServerBase(SimNode):
    role = "dns-server"

    def __init__(self, node_id: str, address: str, *, cache_policy: Optional[CachePolicy] = None,
                 root_hints: Sequence[Tuple[DomainName, str]] = (),
                 timeout: float = DNS_QUERY_TIMEOUT_SECONDS, retries: int = DNS_QUERY_RETRIES):
        super().__init__(node_id, address)
        self.cache_policy = cache_policy
        self.cache: Optional[CacheStore] = None
        self.root_hints: RootHints = list(root_hints)
        self.timeout_ns = seconds_to_ns(timeout)
        self.retries = retries
        self.upstream_queries = 0
        self._outstanding: Dict[int, PendingResolution] = {}

    def attach(self, kernel) -> None:
        super().attach(kernel)
        if self.cache_policy is not None:
            self.cache = make_cache(self.cache_policy, self.rng(self.cache_policy.rng_stream))

    def on_packet(self, pkt: SimPacket) -> None:
        msg = pkt.payload
        if not isinstance(msg, DnsMessage):
            self.stats.malformed_packets += 1
            return
        if msg.is_response:
            self._on_upstream_response(msg)
        else:
            self.handle_query(pkt, msg)

    def handle_query(self, pkt: SimPacket, msg: DnsMessage) -> None:
        self.reply(pkt, make_response(msg, Rcode.NOTIMP))

    def reply(self, pkt: SimPacket, response: DnsMessage) -> None:
        self.stats.responses_sent += 1
        self.send_unicast(pkt.src, response, pkt.port)

    # ---- cache ---------------------------------------------------------

    def _cache_get(self, name: DomainName, rtype: RRType) -> Optional[List[ResourceRecord]]:
        if self.cache is None or rtype is RRType.ANY:
            return None
        records = self.cache.get(CacheKey(name, rtype), self.now)
        self.stats.cache_hits = self.cache.hits
        self.stats.cache_misses = self.cache.misses
        return records

    def _cache_peek(self, name: DomainName, rtype: RRType) -> List[ResourceRecord]:
        """Live cached records without touching the hit/miss counters"""
        if self.cache is None:
            return []
        entry = self.cache.peek(CacheKey(name, rtype))
        if entry is None or not entry.is_valid(self.now):
            return []
        return entry.records

    def _cache_response(self, msg: DnsMessage) -> None:
        """Store every RRset of the answer, authority and additional sections"""
        if self.cache is None:
            return
        rrsets: Dict[Tuple[DomainName, RRType], List[ResourceRecord]] = {}
        for record in msg.records():
            rrsets.setdefault((record.owner, record.rtype), []).append(record)
        for (owner, rtype), records in rrsets.items():
            self.cache.put(CacheKey(owner, rtype), records, self.now)

    def _best_servers(self, qname: DomainName) -> Tuple[DomainName, List[str]]:
        """Deepest cached delegation with cached server addresses, else the root hints"""
        for ancestor in qname.ancestors():
            if ancestor.is_root():
                break
            ns_records = self._cache_peek(ancestor, RRType.NS)
            if not ns_records:
                continue
            addresses: List[str] = []
            for ns in ns_records:
                for record in self._cache_peek(ns.rdata, RRType.A):
                    addresses.append(str(record.rdata))
            if addresses:
                return ancestor, addresses
        return ROOT, [address for _, address in self.root_hints]

    # ---- resolution ----------------------------------------------------

    def resolve_iteratively(self, question: DnsQuestion, continuation: Continuation,
                            nesting: int = 0) -> PendingResolution:
        if not self.root_hints:
            raise ResolverConfigError(f"{self.node_id} has no root hints configured")
        res = PendingResolution(question, continuation, question.qname, nesting=nesting)
        self._advance(res)
        return res

    def _advance(self, res: PendingResolution) -> None:
        """(Re)start the walk for res.qname: cache first, then the best known servers"""
        qtype = res.question.qtype
        while True:
            cached = self._cache_get(res.qname, qtype)
            if cached:
                self._finish(res, Rcode.NOERROR, res.chain + cached)
                return
            if qtype is RRType.CNAME:
                break
            cname = self._cache_get(res.qname, RRType.CNAME)
            if not cname:
                break
            if not self._follow_cname(res, cname[0]):
                return

        res.zone_cut, res.servers = self._best_servers(res.qname)
        res.visited = [res.zone_cut]
        res.server_index = 0
        res.retries = 0
        self._send_upstream(res)

    def _follow_cname(self, res: PendingResolution, cname: ResourceRecord) -> bool:
        res.chain.append(cname)
        res.qname = cname.rdata
        res.cname_depth += 1
        if res.cname_depth > CNAME_CHASE_LIMIT:
            self._finish(res, Rcode.SERVFAIL, [])
            return False
        return True

    def _new_query_id(self) -> int:
        rng = self.rng("query-ids")
        while True:
            query_id = int(rng.integers(0, 65536))
            if query_id not in self._outstanding:
                return query_id

    def _send_upstream(self, res: PendingResolution) -> None:
        res.query_id = self._new_query_id()
        self._outstanding[res.query_id] = res
        res.upstream_queries += 1
        self.upstream_queries += 1
        self.stats.queries_sent += 1
        server = res.current_server
        query = DnsMessage(
            id=res.query_id,
            flags=DnsFlags(rd=False),
            questions=[DnsQuestion(res.qname, res.question.qtype)],
        )
        res.timeout = self.schedule_in(
            self.timeout_ns, self._on_upstream_timeout, "upstream-timeout",
            detail=f"{res.qname.to_text()} {res.question.qtype.name} @{server}", payload=res,
        )
        self.send_to_address(server, query)

    def _on_upstream_timeout(self, event: TimeEvent) -> None:
        res: PendingResolution = event.payload
        res.timeout = None
        self._outstanding.pop(res.query_id, None)
        if res.retries >= self.retries:
            log_event("resolution_failed", "Upstream query timed out", node=self.node_id, sim_time=self.now,
                      qname=res.qname.to_text(), server=res.current_server, attempts=res.retries + 1)
            self._finish(res, Rcode.SERVFAIL, [])
            return
        res.retries += 1
        res.server_index += 1
        self._send_upstream(res)

    def _on_upstream_response(self, msg: DnsMessage) -> None:
        res = self._outstanding.get(msg.id)
        expected = DnsQuestion(res.qname, res.question.qtype) if res is not None else None
        if res is None or len(msg.questions) != 1 or msg.questions[0] != expected:
            self.stats.stale_responses += 1
            return
        del self._outstanding[msg.id]
        self.cancel(res.timeout)
        res.timeout = None
        self._cache_response(msg)

        if msg.rcode is Rcode.NXDOMAIN:
            self._finish(res, Rcode.NXDOMAIN, res.chain)
            return
        if msg.rcode is not Rcode.NOERROR:
            self._finish(res, Rcode.SERVFAIL, [])
            return

        qtype = res.question.qtype
        followed = False
        while True:
            direct = [rr for rr in msg.answers
                      if rr.owner == res.qname and (qtype is RRType.ANY or rr.rtype == qtype)]
            if direct:
                self._finish(res, Rcode.NOERROR, res.chain + direct)
                return
            cname = next((rr for rr in msg.answers if rr.owner == res.qname and rr.rtype is RRType.CNAME), None)
            if cname is None:
                break
            if not self._follow_cname(res, cname):
                return
            followed = True
        if followed:
            self._advance(res)
            return

        ns_records = [rr for rr in msg.authorities if rr.rtype is RRType.NS]
        if ns_records:
            self._follow_referral(res, msg, ns_records)
            return
        if any(rr.rtype is RRType.SOA for rr in msg.authorities):
            self._finish(res, Rcode.NOERROR, res.chain)
            return
        self._finish(res, Rcode.SERVFAIL, [])

    def _follow_referral(self, res: PendingResolution, msg: DnsMessage, ns_records: List[ResourceRecord]) -> None:
        cut = ns_records[0].owner
        deeper = cut != res.zone_cut and cut.is_subdomain_of(res.zone_cut) and res.qname.is_subdomain_of(cut)
        if not deeper or cut in res.visited:
            logger.warning(f"{self.node_id}: delegation loop at {cut} while resolving {res.qname}")
            self._finish(res, Rcode.SERVFAIL, [])
            return
        res.visited.append(cut)
        res.zone_cut = cut
        res.server_index = 0
        res.retries = 0
        targets = [ns.rdata for ns in ns_records]
        glue = [str(rr.rdata) for rr in msg.additionals if rr.rtype is RRType.A and rr.owner in targets]
        if glue:
            res.servers = glue
            self._send_upstream(res)
            return
        self._resolve_server_name(res, targets, 0)

    def _resolve_server_name(self, res: PendingResolution, targets: List[DomainName], index: int) -> None:
        """No glue: resolve the NS names one by one until an address turns up"""
        if index >= len(targets) or res.nesting >= CNAME_CHASE_LIMIT:
            self._finish(res, Rcode.SERVFAIL, [])
            return

        def resume(rcode: Rcode, records: List[ResourceRecord]) -> None:
            res.upstream_queries += nested.upstream_queries
            addresses = [str(rr.rdata) for rr in records if rr.rtype is RRType.A]
            if rcode is Rcode.NOERROR and addresses:
                res.servers = addresses
                self._send_upstream(res)
            else:
                self._resolve_server_name(res, targets, index + 1)

        nested = PendingResolution(DnsQuestion(targets[index], RRType.A), resume, targets[index],
                                   nesting=res.nesting + 1)
        self._advance(nested)

    def _finish(self, res: PendingResolution, rcode: Rcode, records: List[ResourceRecord]) -> None:
        if res.done:
            return
        res.done = True
        if res.timeout is not None:
            self.cancel(res.timeout)
            res.timeout = None
        res.continuation(rcode, records)


# ============= SERVER ROLES =============

class DNSAuthServer(DNSServerBase):
    role = "dns-auth"

    def __init__(self, node_id: str, address: str, zone: ZoneConfig, **kwargs):
        super().__init__(node_id, address, **kwargs)
        if zone is None:
            raise ResolverConfigError(f"authoritative server {node_id} needs a zone")
        self.zone = zone

    def handle_query(self, pkt: SimPacket, msg: DnsMessage) -> None:
        self.reply(pkt, auth_handle_query(self.zone, msg))


class DNSCachingServer(DNSServerBase):
    role = "dns-caching"

    def __init__(self, node_id: str, address: str, *, cache_policy: Optional[CachePolicy] = None,
                 root_hints: Sequence[Tuple[DomainName, str]] = (), **kwargs):
        super().__init__(node_id, address, cache_policy=cache_policy or CachePolicy(),
                         root_hints=root_hints, **kwargs)
        if not self.root_hints:
            raise ResolverConfigError(f"caching server {node_id} needs at least one root hint")

    def handle_query(self, pkt: SimPacket, msg: DnsMessage) -> None:
        if len(msg.questions) != 1:
            self.reply(pkt, make_response(msg, Rcode.FORMERR, ra=True))
            return
        if not msg.flags.rd:
            self.reply(pkt, make_response(msg, Rcode.NOERROR, ra=True))
            return

        def respond(rcode: Rcode, records: List[ResourceRecord]) -> None:
            self.reply(pkt, make_response(msg, rcode, ra=True, answers=records))

        self.resolve_iteratively(msg.questions[0], respond)


class DNSEchoServer(DNSServerBase):
    role = "dns-echo"

    def handle_query(self, pkt: SimPacket, msg: DnsMessage) -> None:
        self.reply(pkt, echo_handle_query(msg, self.address_of(pkt.src)))


def make_server(role: ServerRole, node_id: str, address: str, *, zone: Optional[ZoneConfig] = None,
                cache_policy: Optional[CachePolicy] = None,
                root_hints: Sequence[Tuple[DomainName, str]] = ()) -> DNSServerBase:
    role = ServerRole(role)
    if role is ServerRole.AUTH:
        return DNSAuthServer(node_id, address, zone)
    if role is ServerRole.CACHING:
        return DNSCachingServer(node_id, address, cache_policy=cache_policy, root_hints=root_hints)
    return DNSEchoServer(node_id, address)
