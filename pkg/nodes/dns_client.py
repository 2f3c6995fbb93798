# nodes/dns_client.py
"""
DNS client node with callback-based resolve(), plus the traffic generator
that replays a query file at a jittered period.

Query file grammar, one query per line:

    # comment
    pan.rz.uni-konstanz.de.  A
    uni-konstanz.de.         MX    # trailing comment
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

from config import DNS_QUERY_RETRIES, DNS_QUERY_TIMEOUT_SECONDS, TRAFFGEN_DEFAULTS, seconds_to_ns
from dns_wire import DnsFlags, DnsMessage, DnsQuestion, DomainName, EncodingError, Rcode, ResourceRecord, RRType
from sim_kernel import SimPacket, TimeEvent

from .base_node import QueryFileError, RequestRefused, ResolverConfigError, SimNode

logger = logging.getLogger(__name__)

ID_SPACE = 65536


@dataclass(frozen=True)
class ResolveOutcome:
    rcode: Optional[Rcode]          # None on timeout
    answers: List[ResourceRecord]
    rtt_ns: int
    timed_out: bool = False


ResolveCallback = Callable[[ResolveOutcome], None]


@dataclass(eq=False)
class ResolveRequest:
    qname: DomainName
    qtype: RRType
    server: str
    callback: Optional[ResolveCallback]
    issued_at: int
    id: int
    attempts: int = 0
    timeout: Optional[TimeEvent] = None
    outcome: Optional[ResolveOutcome] = None

    @property
    def done(self) -> bool:
        return self.outcome is not None


class DNSClient(SimNode):
    role = "dns-client"

    def __init__(self, node_id: str, address: str, server_address: Optional[str] = None, *,
                 timeout: float = DNS_QUERY_TIMEOUT_SECONDS, retries: int = DNS_QUERY_RETRIES):
        super().__init__(node_id, address)
        self.server_address = server_address
        self.timeout_ns = seconds_to_ns(timeout)
        self.retries = retries
        self.in_flight: Dict[int, ResolveRequest] = {}
        self.completed: List[ResolveRequest] = []
        self.requests_issued = 0

    def resolve(self, qname: DomainName, qtype: RRType, server: Optional[str] = None,
                callback: Optional[ResolveCallback] = None) -> ResolveRequest:
        server = server or self.server_address
        if server is None:
            raise ResolverConfigError(f"{self.node_id} has no DNS server configured")
        if len(self.in_flight) >= ID_SPACE:
            raise RequestRefused(f"{self.node_id} already has {ID_SPACE} requests in flight")

        request = ResolveRequest(qname, RRType(qtype), server, callback, self.now, self._new_id())
        self.in_flight[request.id] = request
        self.requests_issued += 1
        self._transmit(request)
        return request

    def _new_id(self) -> int:
        rng = self.rng("query-ids")
        while True:
            query_id = int(rng.integers(0, ID_SPACE))
            if query_id not in self.in_flight:
                return query_id

    def _transmit(self, request: ResolveRequest) -> None:
        request.attempts += 1
        self.stats.queries_sent += 1
        query = DnsMessage(id=request.id, flags=DnsFlags(rd=True),
                           questions=[DnsQuestion(request.qname, request.qtype)])
        request.timeout = self.schedule_in(
            self.timeout_ns, self._on_timeout, "client-timeout",
            detail=f"id={request.id} {request.qname.to_text()} {request.qtype.name}", payload=request,
        )
        self.send_to_address(request.server, query)

    def _on_timeout(self, event: TimeEvent) -> None:
        request: ResolveRequest = event.payload
        request.timeout = None
        if request.attempts <= self.retries:
            self._transmit(request)
            return
        logger.debug(f"{self.node_id}: {request.qname} {request.qtype.name} timed out after {request.attempts} attempts")
        self._complete(request, ResolveOutcome(None, [], self.now - request.issued_at, timed_out=True))

    def on_packet(self, pkt: SimPacket) -> None:
        msg = pkt.payload
        if not isinstance(msg, DnsMessage) or not msg.is_response:
            self.stats.malformed_packets += 1
            return
        request = self.in_flight.get(msg.id)
        if request is None or msg.questions != [DnsQuestion(request.qname, request.qtype)]:
            self.stats.stale_responses += 1
            return
        self.cancel(request.timeout)
        request.timeout = None
        self._complete(request, ResolveOutcome(msg.rcode, list(msg.answers), self.now - request.issued_at))

    def _complete(self, request: ResolveRequest, outcome: ResolveOutcome) -> None:
        del self.in_flight[request.id]
        request.outcome = outcome
        self.completed.append(request)
        if request.callback is not None:
            request.callback(outcome)


# ============= TRAFFIC GENERATOR =============

@dataclass(frozen=True)
class QueryLine:
    qname: DomainName
    qtype: RRType
    line: int


def parse_query_lines(text: str) -> List[QueryLine]:
    queries: List[QueryLine] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        tokens = content.split()
        if len(tokens) != 2:
            raise QueryFileError(f"expected '<name> <type>', got {content!r}", lineno)
        try:
            qtype = RRType.from_text(tokens[1])
        except ValueError:
            raise QueryFileError(f"unknown query type {tokens[1]!r}", lineno) from None
        try:
            qname = DomainName.from_text(tokens[0] if tokens[0].endswith(".") else tokens[0] + ".")
        except EncodingError as exc:
            raise QueryFileError(f"bad name {tokens[0]!r}: {exc}", lineno) from exc
        queries.append(QueryLine(qname, qtype, lineno))
    if not queries:
        raise QueryFileError("query file holds no queries")
    return queries


def load_query_file(path: Union[str, Path]) -> List[QueryLine]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise QueryFileError(f"cannot read query file {path}: {exc}") from exc
    try:
        return parse_query_lines(text)
    except QueryFileError as exc:
        raise QueryFileError(f"{path}: {exc.message}", exc.line) from exc


class DNSClientTraffGen(DNSClient):
    """Picks a query line uniformly each tick and resolves it"""
    role = "dns-traffgen"

    def __init__(self, node_id: str, address: str, server_address: str, queries: Sequence[QueryLine], *,
                 period: float = TRAFFGEN_DEFAULTS["period"], jitter: float = TRAFFGEN_DEFAULTS["jitter"],
                 rng_stream: str = "traffgen", **kwargs):
        super().__init__(node_id, address, server_address, **kwargs)
        if period <= 0:
            raise ResolverConfigError(f"traffic generator period must be > 0, got {period}")
        if not 0 <= jitter < 1:
            raise ResolverConfigError(f"traffic generator jitter must be in [0, 1), got {jitter}")
        if not queries:
            raise QueryFileError("query file holds no queries")
        self.queries = list(queries)
        self.period_ns = seconds_to_ns(period)
        self.jitter = jitter
        self.rng_stream = rng_stream
        self.send_counts = [0] * len(self.queries)
        self.tick_times: List[int] = []
        self.outcomes: List[ResolveOutcome] = []

    def start(self) -> None:
        self.schedule_in(self.period_ns, self._tick, "traffgen-tick")

    def _tick(self, event: TimeEvent) -> None:
        rng = self.rng(self.rng_stream)
        index = int(rng.integers(len(self.queries)))
        query = self.queries[index]
        self.send_counts[index] += 1
        self.tick_times.append(self.now)
        self.resolve(query.qname, query.qtype, callback=self.outcomes.append)

        factor = 1.0 + self.jitter * float(rng.uniform(-1.0, 1.0))
        self.schedule_in(int(round(self.period_ns * factor)), self._tick, "traffgen-tick")
