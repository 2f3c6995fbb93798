# nodes/mdns_announcer.py
"""
Service records and the per-service announcer state machine:

    PROBING (3 probes, 250 ms apart) -> ANNOUNCING (2 unsolicited responses,
    1 s apart) -> ESTABLISHED (re-announced every reannounce_interval)

A conflict while probing renames the service ("name #2", "name #3", ...)
and restarts probing; too many conflicts withdraw it.
"""

import ipaddress
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

from config import MDNS_DOMAIN, seconds_to_ns
from dns_wire import DnsQuestion, DomainName, ResourceRecord, RRType, SRVData, TXTData, encode_rdata
from sim_kernel import TimeEvent
from sim_logging import log_event

from .mdns_schedulers import MdnsParams, ProbeJob

if TYPE_CHECKING:
    from .mdns_resolver import MDNSResolver

logger = logging.getLogger(__name__)


class ServicePhase(str, Enum):
    PROBING = "probing"
    ANNOUNCING = "announcing"
    ESTABLISHED = "established"
    WITHDRAWN = "withdrawn"


@dataclass(frozen=True)
class ServiceInstance:
    instance: str
    service_type: str               # e.g. "_http._tcp"
    port: int
    host_name: str
    host_address: str
    txt: Tuple[str, ...] = ()
    domain: str = MDNS_DOMAIN
    reannounce: bool = True

    def __post_init__(self):
        object.__setattr__(self, "txt", tuple(self.txt))
        if not 0 <= self.port <= 0xFFFF:
            raise ValueError(f"service port {self.port} out of range")

    @property
    def type_name(self) -> DomainName:
        return DomainName.from_text(f"{self.service_type}.{self.domain}.")

    @property
    def instance_name(self) -> DomainName:
        # the instance label may hold spaces and dots, so it is never parsed as text
        return DomainName((self.instance.encode("utf-8"),) + self.type_name.labels)

    @property
    def host_fqdn(self) -> DomainName:
        return DomainName.from_text(f"{self.host_name}.{self.domain}.")

    def ptr_record(self, params: MdnsParams) -> ResourceRecord:
        return ResourceRecord(self.type_name, RRType.PTR, params.service_ttl, self.instance_name)

    def srv_record(self, params: MdnsParams) -> ResourceRecord:
        return ResourceRecord(self.instance_name, RRType.SRV, params.host_ttl,
                              SRVData(0, 0, self.port, self.host_fqdn), cache_flush=True)

    def txt_record(self, params: MdnsParams) -> ResourceRecord:
        return ResourceRecord(self.instance_name, RRType.TXT, params.service_ttl,
                              TXTData.from_strings(*self.txt), cache_flush=True)

    def address_record(self, params: MdnsParams) -> ResourceRecord:
        return ResourceRecord(self.host_fqdn, RRType.A, params.host_ttl,
                              ipaddress.IPv4Address(self.host_address), cache_flush=True)

    def unique_records(self, params: MdnsParams) -> List[ResourceRecord]:
        return [self.srv_record(params), self.txt_record(params)]

    def records(self, params: MdnsParams) -> List[ResourceRecord]:
        """PTR, SRV, TXT and the host address record"""
        return [self.ptr_record(params), *self.unique_records(params), self.address_record(params)]

    def renamed(self, instance: str) -> "ServiceInstance":
        return replace(self, instance=instance)


def record_order(records: Sequence[ResourceRecord]) -> List[Tuple[int, bytes]]:
    """Ordering used to break simultaneous-probe ties"""
    return sorted((int(record.rtype), encode_rdata(record)) for record in records)


@dataclass(eq=False)
class ServiceState:
    key: str
    base_instance: str
    service: ServiceInstance
    phase: ServicePhase = ServicePhase.PROBING
    probes_sent: int = 0
    announcements_sent: int = 0
    conflicts: int = 0
    generation: int = 0
    timer: Optional[TimeEvent] = None
    established_at: Optional[int] = None
    history: List[Tuple[int, ServicePhase]] = field(default_factory=list)

    @property
    def instance_name(self) -> DomainName:
        return self.service.instance_name

    @property
    def active(self) -> bool:
        """Owns its records on the link"""
        return self.phase in (ServicePhase.ANNOUNCING, ServicePhase.ESTABLISHED)


class MDNSAnnouncer:
    def __init__(self, node: "MDNSResolver"):
        self.node = node
        self.services: List[ServiceState] = []

    @property
    def params(self) -> MdnsParams:
        return self.node.params

    def add_service(self, service: ServiceInstance) -> ServiceState:
        state = ServiceState(key=f"svc{len(self.services)}", base_instance=service.instance, service=service)
        self.services.append(state)
        return state

    def start(self) -> None:
        for state in self.services:
            self._begin_probing(state)

    def state_for(self, name: DomainName) -> Optional[ServiceState]:
        for state in self.services:
            if state.phase is not ServicePhase.WITHDRAWN and state.instance_name == name:
                return state
        return None

    # ---- state machine -------------------------------------------------

    def _enter(self, state: ServiceState, phase: ServicePhase) -> None:
        state.phase = phase
        state.history.append((self.node.now, phase))

    def _begin_probing(self, state: ServiceState) -> None:
        self._enter(state, ServicePhase.PROBING)
        state.probes_sent = 0
        state.announcements_sent = 0
        delay = self.node.rng("mdns").uniform(0.0, self.params.probe_initial_delay_max)
        self._post_probe(state, self.node.now + seconds_to_ns(float(delay)))

    def _post_probe(self, state: ServiceState, latest_send: int) -> None:
        generation = state.generation
        job = ProbeJob(
            service_key=state.key,
            questions=[DnsQuestion(state.instance_name, RRType.ANY)],
            records=state.service.unique_records(self.params),
            latest_send=latest_send,
            on_sent=lambda _at: self._probe_sent(state, generation),
        )
        self.node.probe_scheduler.post_probe(job)

    def _probe_sent(self, state: ServiceState, generation: int) -> None:
        if generation != state.generation or state.phase is not ServicePhase.PROBING:
            return
        state.probes_sent += 1
        self._set_timer(state, self.params.ns("probe_interval"))

    def _set_timer(self, state: ServiceState, delay: int) -> None:
        state.timer = self.node.schedule_in(delay, self._on_timer, "announcer",
                                            detail=f"{state.key} {state.phase.value}", payload=state)

    def _on_timer(self, event: TimeEvent) -> None:
        state: ServiceState = event.payload
        state.timer = None
        self.advance(state)

    def advance(self, state: ServiceState) -> None:
        """Move one step along probing -> announcing -> established"""
        if state.phase is ServicePhase.PROBING:
            if state.probes_sent < self.params.probe_count:
                self._post_probe(state, self.node.now)
                return
            self._enter(state, ServicePhase.ANNOUNCING)
            self._announce(state)
        elif state.phase is ServicePhase.ANNOUNCING:
            self._announce(state)
        elif state.phase is ServicePhase.ESTABLISHED and state.service.reannounce:
            self.node.announce(state.service.records(self.params))
            self._set_timer(state, self.params.ns("reannounce_interval"))

    def _announce(self, state: ServiceState) -> None:
        self.node.announce(state.service.records(self.params))
        state.announcements_sent += 1
        if state.announcements_sent < self.params.announce_count:
            self._set_timer(state, self.params.ns("announce_interval"))
            return
        self._enter(state, ServicePhase.ESTABLISHED)
        state.established_at = self.node.now
        logger.debug(f"{self.node.node_id}: {state.service.instance} established")
        if state.service.reannounce:
            self._set_timer(state, self.params.ns("reannounce_interval"))

    # ---- conflicts -----------------------------------------------------

    def handle_conflict(self, state: ServiceState) -> None:
        """Rename after a lost probe tie or a conflicting answer, or withdraw"""
        self.node.cancel(state.timer)
        state.timer = None
        self.node.probe_scheduler.remove_probes(state.key)
        state.generation += 1
        state.conflicts += 1
        old = state.service.instance
        if state.conflicts > self.params.max_renames:
            self._enter(state, ServicePhase.WITHDRAWN)
            logger.error(f"{self.node.node_id}: withdrew {state.base_instance} after {state.conflicts} conflicts")
            log_event("service_withdrawn", "Too many name conflicts", node=self.node.node_id,
                      sim_time=self.node.now, instance=state.base_instance, conflicts=state.conflicts)
            return
        state.service = state.service.renamed(f"{state.base_instance} #{state.conflicts + 1}")
        log_event("service_renamed", "Name conflict resolved", node=self.node.node_id,
                  sim_time=self.node.now, old=old, new=state.service.instance)
        self._begin_probing(state)

    def check_probe(self, state: ServiceState, proposed: Sequence[ResourceRecord]) -> bool:
        """
        Another host probes for a name this service uses.
        Returns True when this service has to yield.
        """
        ours = record_order(state.service.unique_records(self.params))
        theirs = record_order(proposed)
        if ours == theirs:
            return False
        if state.probes_sent == 0:
            return True
        return ours < theirs

    def check_response(self, state: ServiceState, records: Sequence[ResourceRecord]) -> bool:
        """A received answer claims this probing service's name with other data"""
        ours = state.service.unique_records(self.params)
        for record in records:
            if record.owner != state.instance_name or record.rtype not in (RRType.SRV, RRType.TXT):
                continue
            if not any(record.same_data(mine) for mine in ours):
                return True
        return False
