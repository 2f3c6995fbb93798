# nodes/mdns_resolver.py
"""
mDNS/DNS-SD resolver node: owns the announcer, the three schedulers and
the record cache, and dispatches every packet it receives.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from config import MDNS_DOMAIN, MDNS_GROUP, MDNS_PORT, NS_PER_SECOND, seconds_to_ns
from dns_wire import DnsFlags, DnsMessage, DnsQuestion, DomainName, ResourceRecord, RRType, encode_rdata
from sim_kernel import SimPacket, TimeEvent
from traffic_stats import Transport

from .base_node import SimNode
from .mdns_announcer import MDNSAnnouncer, ServiceInstance, ServicePhase, ServiceState
from .mdns_schedulers import MdnsParams, ProbeScheduler, QueryJob, QueryScheduler, ResponseJob, ResponseScheduler

logger = logging.getLogger(__name__)

# cache-flush only evicts rdata older than this, so a multi-record RRset survives its own packet
CACHE_FLUSH_GRACE_NS = NS_PER_SECOND


# ============= RECORD CACHE =============

@dataclass
class CachedRecord:
    record: ResourceRecord
    inserted_at: int

    @property
    def original_ttl(self) -> int:
        return self.record.ttl

    @property
    def expiry(self) -> int:
        return self.inserted_at + self.record.ttl * NS_PER_SECOND

    def remaining_ns(self, now: int) -> int:
        return self.expiry - now

    def decayed(self, now: int) -> ResourceRecord:
        return self.record.with_ttl(-(-self.remaining_ns(now) // NS_PER_SECOND))


class MdnsRecordCache:
    """Records keyed by (owner, type, rdata); no capacity bound"""

    def __init__(self):
        self._entries: Dict[Tuple[DomainName, RRType, bytes], CachedRecord] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def add(self, record: ResourceRecord, now: int) -> None:
        key = (record.owner, record.rtype, encode_rdata(record))
        if record.ttl == 0:
            # goodbye
            self._entries.pop(key, None)
            return
        if record.cache_flush:
            stale = [k for k, entry in self._entries.items()
                     if k[0] == record.owner and k[1] == record.rtype and k != key
                     and now - entry.inserted_at > CACHE_FLUSH_GRACE_NS]
            for k in stale:
                del self._entries[k]
        self._entries[key] = CachedRecord(record, now)

    def expire(self, now: int) -> int:
        expired = [key for key, entry in self._entries.items() if entry.expiry <= now]
        for key in expired:
            del self._entries[key]
        return len(expired)

    def lookup(self, name: DomainName, rtype: RRType, now: int) -> List[ResourceRecord]:
        self.expire(now)
        return [entry.decayed(now) for (owner, kind, _), entry in self._entries.items()
                if owner == name and (rtype is RRType.ANY or kind == rtype)]

    def known_answers(self, questions: Sequence[DnsQuestion], now: int, threshold: float) -> List[ResourceRecord]:
        """Cached answers to questions with at least threshold of their TTL left"""
        self.expire(now)
        known: List[ResourceRecord] = []
        for question in questions:
            for (owner, kind, _), entry in self._entries.items():
                if owner != question.qname or not (question.qtype is RRType.ANY or kind == question.qtype):
                    continue
                if entry.remaining_ns(now) >= threshold * entry.original_ttl * NS_PER_SECOND:
                    known.append(entry.decayed(now))
        return known

    def records(self) -> List[ResourceRecord]:
        return [entry.record for entry in self._entries.values()]

    def contains_name(self, name: DomainName) -> bool:
        return any(owner == name for owner, _, _ in self._entries)


# ============= RESOLVER NODE =============

class MDNSResolver(SimNode):
    role = "mdns"

    def __init__(self, node_id: str, address: str, *, host_name: Optional[str] = None,
                 services: Sequence[ServiceInstance] = (), params: Optional[MdnsParams] = None,
                 one_shot_query: Optional[str] = None, one_shot_query_at: Optional[float] = None):
        super().__init__(node_id, address)
        self.host_name = host_name or node_id
        self.params = params or MdnsParams()
        self.cache = MdnsRecordCache()
        self.announcer = MDNSAnnouncer(self)
        self.probe_scheduler = ProbeScheduler(self)
        self.query_scheduler = QueryScheduler(self)
        self.response_scheduler = ResponseScheduler(self)
        self.one_shot_query = one_shot_query
        self.one_shot_query_at = one_shot_query_at
        for service in services:
            self.add_service(service)

    def attach(self, kernel) -> None:
        super().attach(kernel)
        kernel.topology.join_group(MDNS_GROUP, self.node_id)

    def add_service(self, service: ServiceInstance) -> ServiceState:
        return self.announcer.add_service(service)

    def make_service(self, instance: str, service_type: str, port: int, txt: Sequence[str] = ()) -> ServiceInstance:
        return ServiceInstance(instance, service_type, port, self.host_name, self.address, tuple(txt))

    @property
    def services(self) -> List[ServiceState]:
        return self.announcer.services

    def start(self) -> None:
        self.announcer.start()
        if self.one_shot_query is not None and self.one_shot_query_at is not None:
            self.schedule_at(seconds_to_ns(self.one_shot_query_at), self._one_shot, "one-shot-query",
                             detail=self.one_shot_query)

    def _one_shot(self, event: TimeEvent) -> None:
        self.query(DomainName.from_text(f"{self.one_shot_query}.{MDNS_DOMAIN}."), RRType.PTR)

    # ---- sending -------------------------------------------------------

    def send_mdns(self, msg: DnsMessage) -> None:
        self.send_multicast(MDNS_GROUP, msg, MDNS_PORT)

    def announce(self, records: Sequence[ResourceRecord]) -> None:
        """Unsolicited multicast response"""
        self.stats.announcements_sent += 1
        self.send_mdns(DnsMessage(id=0, flags=DnsFlags(qr=True, aa=True), answers=list(records)))

    def query(self, name: DomainName, rtype: RRType = RRType.PTR) -> QueryJob:
        return self.query_scheduler.post_query(QueryJob([DnsQuestion(name, rtype)]))

    # ---- receiving -----------------------------------------------------

    def on_packet(self, pkt: SimPacket) -> None:
        msg = pkt.payload
        if not isinstance(msg, DnsMessage) or msg.flags.opcode != 0:
            self.stats.malformed_packets += 1
            return
        if msg.is_response:
            self._handle_response(pkt, msg)
        else:
            self._handle_query(pkt, msg)

    def _handle_query(self, pkt: SimPacket, msg: DnsMessage) -> None:
        if msg.authorities:
            self._handle_probe(pkt, msg)
            return
        if pkt.transport is Transport.MULTICAST:
            for question in msg.questions:
                self.query_scheduler.observe_question(question)
        if self._intercept_query(pkt, msg):
            return
        answers, additionals = self.answer_questions(msg.questions)
        if answers:
            self.response_scheduler.post_response(ResponseJob(answers, additionals), known_answers=msg.answers)

    def _intercept_query(self, pkt: SimPacket, msg: DnsMessage) -> bool:
        """Hook for extensions; True when the query was fully handled"""
        return False

    def answer_questions(self, questions: Sequence[DnsQuestion]) -> Tuple[List[ResourceRecord], List[ResourceRecord]]:
        """Records of announcing/established services answering questions, plus additional data"""
        params = self.params
        answers: List[ResourceRecord] = []
        additionals: List[ResourceRecord] = []
        for question in questions:
            qtype = question.qtype
            for state in self.services:
                if not state.active:
                    continue
                svc = state.service
                if question.qname == svc.type_name and qtype in (RRType.PTR, RRType.ANY):
                    answers.append(svc.ptr_record(params))
                    additionals.extend([*svc.unique_records(params), svc.address_record(params)])
                elif question.qname == svc.instance_name:
                    if qtype in (RRType.SRV, RRType.ANY):
                        answers.append(svc.srv_record(params))
                        additionals.append(svc.address_record(params))
                    if qtype in (RRType.TXT, RRType.ANY):
                        answers.append(svc.txt_record(params))
                elif question.qname == svc.host_fqdn and qtype in (RRType.A, RRType.ANY):
                    answers.append(svc.address_record(params))
        return answers, additionals

    def _handle_probe(self, pkt: SimPacket, msg: DnsMessage) -> None:
        for state in list(self.services):
            if state.phase is ServicePhase.WITHDRAWN:
                continue
            name = state.instance_name
            if not any(q.qname == name for q in msg.questions):
                continue
            proposed = [rr for rr in msg.authorities if rr.owner == name]
            if state.phase is ServicePhase.PROBING:
                if self.announcer.check_probe(state, proposed):
                    logger.debug(f"{self.node_id}: yielding {state.service.instance} to {pkt.src}")
                    self.announcer.handle_conflict(state)
            elif state.active:
                unique = state.service.unique_records(self.params)
                if not all(any(rr.same_data(mine) for mine in unique) for rr in proposed):
                    # defend the name right away
                    self.response_scheduler.post_response(
                        ResponseJob(unique, [state.service.address_record(self.params)], immediate=True))

    def _handle_response(self, pkt: SimPacket, msg: DnsMessage) -> None:
        records = list(msg.answers) + list(msg.additionals)
        for state in list(self.services):
            if state.phase is ServicePhase.PROBING and self.announcer.check_response(state, records):
                logger.debug(f"{self.node_id}: conflicting answer for {state.service.instance} from {pkt.src}")
                self.announcer.handle_conflict(state)
        now = self.now
        for record in records:
            self.cache.add(record, now)
        if pkt.transport is Transport.MULTICAST:
            self.response_scheduler.observe_response(records)

    # ---- introspection -------------------------------------------------

    def established_names(self) -> List[DomainName]:
        return [state.instance_name for state in self.services if state.phase is ServicePhase.ESTABLISHED]
