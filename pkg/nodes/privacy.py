# nodes/privacy.py
"""
Privacy extension for mDNS-SD.

Private services never go out on the multicast link. Their record bundles
are pushed over unicast (the private-channel port) to paired friends on the
announcement schedule. The only multicast footprint is a meta-service
(type _privacy._udp) that paired peers query, unicast and carrying their
pairing identifier, to learn the private channel's address and port.

audit_privacy() scans captured multicast traffic for private names.
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

from config import MDNS_PORT, META_SERVICE_TYPE, PRIVATE_CHANNEL_PORT, seconds_to_ns
from dns_wire import DnsFlags, DnsMessage, DnsQuestion, DomainName, ResourceRecord, RRType, TXTData
from sim_kernel import CapturedPacket, SimPacket, TimeEvent
from sim_logging import log_event
from traffic_stats import Transport

from .base_node import ResolverConfigError
from .mdns_announcer import ServiceInstance, ServiceState
from .mdns_resolver import MDNSResolver, MdnsRecordCache

logger = logging.getLogger(__name__)

PAIR_PREFIX = "pair="


@dataclass
class PairingData:
    peer: str
    pairing_id: bytes
    established: bool = True


@dataclass(frozen=True)
class PrivateChannel:
    peer: str
    address: str
    port: int


@dataclass(frozen=True)
class PrivacyViolation:
    sent_at: int
    src: str
    section: str
    name: DomainName
    rtype: Optional[RRType]
    detail: str

    def to_dict(self) -> Dict:
        return {
            "sent_at": self.sent_at,
            "src": self.src,
            "section": self.section,
            "name": self.name.to_text(),
            "rtype": self.rtype.name if self.rtype is not None else None,
            "detail": self.detail,
        }


def _txt_values(record: ResourceRecord) -> List[str]:
    return record.rdata.as_text() if isinstance(record.rdata, TXTData) else []


class PrivateMDNSResolver(MDNSResolver):
    role = "mdns-private"

    def __init__(self, node_id: str, address: str, *, private_services: Sequence[ServiceInstance] = (),
                 pairings: Sequence[PairingData] = (), **kwargs):
        super().__init__(node_id, address, **kwargs)
        self.private_services: List[ServiceInstance] = list(private_services)
        self.pairings: Dict[str, PairingData] = {}
        for pairing in pairings:
            self.add_pairing(pairing)
        self.meta_state: Optional[ServiceState] = None
        self.channels: Dict[str, PrivateChannel] = {}
        # friends' private records, never offered as known answers
        self.private_cache = MdnsRecordCache()
        self.bundles_received: Dict[str, int] = {}
        self.private_rounds = 0
        self.malformed_meta_queries = 0
        self.rejected_meta_queries = 0
        self.rejected_bundles = 0
        self._channel_requests: Dict[int, str] = {}
        self._publish_timer: Optional[TimeEvent] = None

    def add_pairing(self, pairing: PairingData) -> None:
        if pairing.peer == self.node_id:
            raise ResolverConfigError(f"{self.node_id} cannot pair with itself")
        self.pairings[pairing.peer] = pairing

    def add_private_service(self, service: ServiceInstance) -> None:
        self.private_services.append(service)

    def established_peers(self) -> List[str]:
        return [peer for peer, pairing in self.pairings.items() if pairing.established]

    # ---- meta-service --------------------------------------------------

    @property
    def meta_type_name(self) -> DomainName:
        return DomainName.from_text(f"{META_SERVICE_TYPE}.local.")

    def pairing_hash(self) -> str:
        digest = hashlib.sha256()
        for pairing_id in sorted(p.pairing_id for p in self.pairings.values()):
            digest.update(pairing_id)
        return digest.hexdigest()[:16]

    def _meta_service(self) -> ServiceInstance:
        return ServiceInstance(
            instance=self.host_name,
            service_type=META_SERVICE_TYPE,
            port=PRIVATE_CHANNEL_PORT,
            host_name=self.host_name,
            host_address=self.address,
            txt=("v=1", f"h={self.pairing_hash()}", f"port={PRIVATE_CHANNEL_PORT}"),
            reannounce=False,
        )

    def start(self) -> None:
        # nothing extra is drawn or sent without private services
        if self.private_services and self.meta_state is None:
            self.meta_state = self.add_service(self._meta_service())
        super().start()
        if self.private_services:
            delay = self.rng("privacy").uniform(0.0, self.params.probe_initial_delay_max)
            self._schedule_round(seconds_to_ns(float(delay)))

    # ---- private publishing --------------------------------------------

    def _schedule_round(self, delay: int) -> None:
        self._publish_timer = self.schedule_in(delay, self._private_round, "private-publish",
                                               detail=f"round {self.private_rounds + 1}")

    def _private_round(self, event: TimeEvent) -> None:
        self._publish_timer = None
        self.private_rounds += 1
        self.publish_private()
        if self.private_rounds < self.params.announce_count:
            self._schedule_round(self.params.ns("announce_interval"))
        else:
            self._schedule_round(self.params.ns("reannounce_interval"))

    def private_records(self, services: Optional[Sequence[ServiceInstance]] = None) -> List[ResourceRecord]:
        records: List[ResourceRecord] = []
        for service in services if services is not None else self.private_services:
            for record in service.records(self.params):
                if not any(record.same_data(kept) for kept in records):
                    records.append(record)
        return records

    def publish_private(self, services: Optional[Sequence[ServiceInstance]] = None) -> List[str]:
        """One unicast bundle of the private records to every established friend"""
        records = self.private_records(services)
        if not records:
            return []
        peers = self.established_peers()
        for peer in peers:
            bundle = DnsMessage(id=0, flags=DnsFlags(qr=True, aa=True), answers=list(records))
            self.stats.private_bundles_sent += 1
            self.send_unicast(peer, bundle, PRIVATE_CHANNEL_PORT)
        return peers

    # ---- private channel requests ---------------------------------------

    def request_private_channel(self, peer: str) -> int:
        """Ask a friend's meta-service for its private channel; returns the query id"""
        pairing = self.pairings.get(peer)
        if pairing is None:
            raise ResolverConfigError(f"{self.node_id} has no pairing with {peer}")
        query_id = int(self.rng("privacy-ids").integers(1, 65536))
        pair_record = ResourceRecord(self.meta_type_name, RRType.TXT, 0,
                                     TXTData.from_strings(f"{PAIR_PREFIX}{pairing.pairing_id.hex()}"))
        query = DnsMessage(id=query_id, questions=[DnsQuestion(self.meta_type_name, RRType.PTR)],
                           additionals=[pair_record])
        self._channel_requests[query_id] = peer
        self.stats.queries_sent += 1
        self.send_unicast(peer, query, MDNS_PORT)
        return query_id

    def _intercept_query(self, pkt: SimPacket, msg: DnsMessage) -> bool:
        if not any(q.qname == self.meta_type_name for q in msg.questions):
            return False
        payload = [rr for rr in msg.additionals if rr.rtype is RRType.TXT and rr.owner == self.meta_type_name]
        if not payload:
            return False
        self.handle_meta_query(pkt, msg, payload[0])
        return True

    def handle_meta_query(self, pkt: SimPacket, msg: DnsMessage, pair_record: ResourceRecord) -> bool:
        """Unicast the channel parameters to a paired querier; silence otherwise"""
        values = [value for value in _txt_values(pair_record) if value.startswith(PAIR_PREFIX)]
        try:
            offered = bytes.fromhex(values[0][len(PAIR_PREFIX):]) if values else None
        except ValueError:
            offered = None
        if not offered:
            self.malformed_meta_queries += 1
            return False
        pairing = self.pairings.get(pkt.src)
        if pairing is None or not pairing.established or pairing.pairing_id != offered or self.meta_state is None:
            self.rejected_meta_queries += 1
            return False

        meta = self.meta_state.service
        channel_txt = ResourceRecord(meta.instance_name, RRType.TXT, self.params.service_ttl,
                                     TXTData.from_strings(f"addr={self.address}", f"port={PRIVATE_CHANNEL_PORT}"))
        reply = DnsMessage(id=msg.id, flags=DnsFlags(qr=True, aa=True), questions=list(msg.questions),
                           answers=[meta.srv_record(self.params), channel_txt])
        self.stats.responses_sent += 1
        self.send_unicast(pkt.src, reply, pkt.port)
        return True

    def _handle_response(self, pkt: SimPacket, msg: DnsMessage) -> None:
        if pkt.transport is Transport.UNICAST:
            if pkt.port == PRIVATE_CHANNEL_PORT:
                self._accept_bundle(pkt, msg)
                return
            peer = self._channel_requests.pop(msg.id, None)
            if peer is not None and peer == pkt.src:
                self._record_channel(peer, msg)
        super()._handle_response(pkt, msg)

    def _accept_bundle(self, pkt: SimPacket, msg: DnsMessage) -> None:
        pairing = self.pairings.get(pkt.src)
        if pairing is None or not pairing.established:
            self.rejected_bundles += 1
            return
        self.bundles_received[pkt.src] = self.bundles_received.get(pkt.src, 0) + 1
        for record in msg.answers:
            self.private_cache.add(record, self.now)

    def _record_channel(self, peer: str, msg: DnsMessage) -> None:
        fields_seen: Dict[str, str] = {}
        for record in msg.answers:
            for value in _txt_values(record):
                key, _, rest = value.partition("=")
                fields_seen[key] = rest
        if "addr" in fields_seen and fields_seen.get("port", "").isdigit():
            self.channels[peer] = PrivateChannel(peer, fields_seen["addr"], int(fields_seen["port"]))
            logger.debug(f"{self.node_id}: private channel to {peer} at {fields_seen['addr']}")

    def private_names(self) -> List[DomainName]:
        return [service.instance_name for service in self.private_services]


# ============= AUDIT =============

def audit_privacy(capture: Sequence[CapturedPacket], private_names: Iterable[DomainName]) -> List[PrivacyViolation]:
    """Every appearance of a private instance name in a multicast packet"""
    private = list(private_names)
    violations: List[PrivacyViolation] = []
    for captured in capture:
        pkt = captured.packet
        msg = pkt.payload
        if pkt.transport is not Transport.MULTICAST or not isinstance(msg, DnsMessage):
            continue
        for question in msg.questions:
            if question.qname in private:
                violations.append(PrivacyViolation(captured.sent_at, pkt.src, "question", question.qname, None,
                                                   f"question {question.qname.to_text()} {question.qtype.name}"))
        sections = (("answer", msg.answers), ("authority", msg.authorities), ("additional", msg.additionals))
        for section, records in sections:
            for record in records:
                if record.owner in private:
                    violations.append(PrivacyViolation(captured.sent_at, pkt.src, section, record.owner,
                                                       record.rtype, record.to_text()))
                elif record.rtype is RRType.PTR and record.rdata in private:
                    violations.append(PrivacyViolation(captured.sent_at, pkt.src, section, record.rdata,
                                                       record.rtype, record.to_text()))
    if violations:
        log_event("privacy_violation", f"{len(violations)} private names seen on the multicast link",
                  violations=[v.to_dict() for v in violations])
    return violations


def collect_private_names(nodes: Iterable) -> List[DomainName]:
    names: List[DomainName] = []
    for node in nodes:
        if isinstance(node, PrivateMDNSResolver):
            names.extend(node.private_names())
    return names
