# nodes/mdns_schedulers.py
"""
The three mDNS transmit schedulers of a resolver node.

Each scheduler keeps a pending list and a single send event timed at the
earliest pending deadline; when it fires, everything pending leaves in one
packet. All of them schedule through the owning node, so the node still
holds exactly one kernel wakeup.

    ProbeScheduler     probes, sent within probe_window of being posted
    QueryScheduler     queries, with duplicate-question and known-answer suppression
    ResponseScheduler  responses, with known-answer filtering and duplicate-answer suppression
"""

import logging
from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Optional, Sequence, Tuple

from config import MDNS_TIMING, seconds_to_ns
from dns_wire import DnsFlags, DnsMessage, DnsQuestion, ResourceRecord
from sim_kernel import SimulationError, TimeEvent

if TYPE_CHECKING:
    from .mdns_resolver import MDNSResolver

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MdnsParams:
    """mDNS timing; seconds unless noted"""
    probe_count: int = MDNS_TIMING["probe_count"]
    probe_interval: float = MDNS_TIMING["probe_interval"]
    probe_initial_delay_max: float = MDNS_TIMING["probe_initial_delay_max"]
    probe_window: float = MDNS_TIMING["probe_window"]
    announce_count: int = MDNS_TIMING["announce_count"]
    announce_interval: float = MDNS_TIMING["announce_interval"]
    reannounce_interval: float = MDNS_TIMING["reannounce_interval"]
    response_delay_min: float = MDNS_TIMING["response_delay_min"]
    response_delay_max: float = MDNS_TIMING["response_delay_max"]
    query_delay_min: float = MDNS_TIMING["query_delay_min"]
    query_delay_max: float = MDNS_TIMING["query_delay_max"]
    duplicate_question_window: float = MDNS_TIMING["duplicate_question_window"]
    known_answer_threshold: float = MDNS_TIMING["known_answer_threshold"]
    max_renames: int = MDNS_TIMING["max_renames"]
    host_ttl: int = MDNS_TIMING["host_ttl"]
    service_ttl: int = MDNS_TIMING["service_ttl"]

    def __post_init__(self):
        if self.response_delay_min > self.response_delay_max:
            raise ValueError("response_delay_min exceeds response_delay_max")
        if self.query_delay_min > self.query_delay_max:
            raise ValueError("query_delay_min exceeds query_delay_max")
        if not 0 <= self.known_answer_threshold <= 1:
            raise ValueError(f"known_answer_threshold {self.known_answer_threshold} outside [0, 1]")

    @classmethod
    def from_overrides(cls, overrides: Optional[Dict[str, Any]] = None) -> "MdnsParams":
        known = {f.name for f in fields(cls)}
        unknown = [key for key in (overrides or {}) if key not in known]
        if unknown:
            raise ValueError(f"unknown mDNS timing parameter(s): {', '.join(unknown)}")
        return cls(**(overrides or {}))

    def ns(self, name: str) -> int:
        return seconds_to_ns(getattr(self, name))


# ============= JOBS =============

@dataclass(eq=False)
class ProbeJob:
    service_key: str
    questions: List[DnsQuestion]
    records: List[ResourceRecord]
    enqueued_at: int = 0
    latest_send: Optional[int] = None
    immediate: bool = False
    on_sent: Optional[Callable[[int], None]] = None


@dataclass(eq=False)
class QueryJob:
    questions: List[DnsQuestion]
    enqueued_at: int = 0
    send_at: int = 0
    suppressed: bool = False
    sent: bool = False


@dataclass(eq=False)
class ResponseJob:
    answers: List[ResourceRecord]
    additionals: List[ResourceRecord] = field(default_factory=list)
    enqueued_at: int = 0
    send_at: int = 0
    immediate: bool = False
    suppressed: bool = False


def _dedupe(records: Sequence[ResourceRecord], exclude: Sequence[ResourceRecord] = ()) -> List[ResourceRecord]:
    kept: List[ResourceRecord] = []
    for record in records:
        if any(record.same_data(other) for other in kept) or any(record.same_data(other) for other in exclude):
            continue
        kept.append(record)
    return kept


def is_known_answer(record: ResourceRecord, known: Sequence[ResourceRecord], threshold: float) -> bool:
    """Listed by the querier with at least `threshold` of our TTL left"""
    return any(other.same_data(record) and other.ttl >= record.ttl * threshold for other in known)


# ============= SCHEDULERS =============

class _BatchScheduler:
    event_kind = "mdns-send"

    def __init__(self, node: "MDNSResolver"):
        self.node = node
        self.pending: List[Any] = []
        self._send_event: Optional[TimeEvent] = None

    def _deadline(self, job) -> int:
        raise NotImplementedError

    def _flush(self, jobs: List[Any]) -> None:
        raise NotImplementedError

    @property
    def next_send(self) -> Optional[int]:
        return self._send_event.expiry if self._send_event is not None else None

    def _rearm(self) -> None:
        """Keep one send event at the earliest pending deadline"""
        deadline = min((self._deadline(job) for job in self.pending), default=None)
        if self._send_event is not None and self._send_event.expiry == deadline:
            return
        if self._send_event is not None:
            self.node.cancel(self._send_event)
            self._send_event = None
        if deadline is not None:
            self._send_event = self.node.schedule_at(deadline, self._fire, self.event_kind,
                                                     detail=f"{len(self.pending)} pending")

    def _fire(self, event: TimeEvent) -> None:
        self._send_event = None
        jobs, self.pending = self.pending, []
        self._flush(jobs)
        self._rearm()

    def _draw_delay(self, low: float, high: float) -> int:
        return seconds_to_ns(float(self.node.rng("mdns").uniform(low, high)))


class ProbeScheduler(_BatchScheduler):
    event_kind = "probe-send"

    def __init__(self, node: "MDNSResolver"):
        super().__init__(node)
        self.latencies: List[int] = []
        self.packets_sent = 0

    def _deadline(self, job: ProbeJob) -> int:
        return job.latest_send

    def post_probe(self, job: ProbeJob) -> None:
        now = self.node.now
        job.enqueued_at = now
        if job.immediate:
            self._flush([job])
            return
        window_end = now + self.node.params.ns("probe_window")
        job.latest_send = window_end if job.latest_send is None else min(job.latest_send, window_end)
        self.pending.append(job)
        self._rearm()

    def remove_probes(self, service_key: str) -> int:
        """Take a service's probes out of the schedule"""
        before = len(self.pending)
        self.pending = [job for job in self.pending if job.service_key != service_key]
        removed = before - len(self.pending)
        if removed:
            self._rearm()
        return removed

    def _flush(self, jobs: List[ProbeJob]) -> None:
        if not jobs:
            return
        now = self.node.now
        window = self.node.params.ns("probe_window")
        questions: List[DnsQuestion] = []
        records: List[ResourceRecord] = []
        for job in jobs:
            if not job.immediate:
                latency = now - job.enqueued_at
                if latency > window:
                    raise SimulationError(f"{self.node.node_id}: probe for {job.service_key} waited {latency}ns")
                self.latencies.append(latency)
            questions.extend(q for q in job.questions if q not in questions)
            records.extend(job.records)
        msg = DnsMessage(id=0, questions=questions, authorities=_dedupe(records))
        self.packets_sent += 1
        self.node.stats.probes_sent += 1
        self.node.send_mdns(msg)
        for job in jobs:
            if job.on_sent is not None:
                job.on_sent(now)


class QueryScheduler(_BatchScheduler):
    event_kind = "query-send"

    def __init__(self, node: "MDNSResolver"):
        super().__init__(node)
        self._seen_questions: Dict[Tuple[Tuple[bytes, ...], int], int] = {}
        self.packets_sent = 0
        self.suppressed = 0

    def _deadline(self, job: QueryJob) -> int:
        return job.send_at

    def observe_question(self, question: DnsQuestion) -> None:
        """A question another node multicast on the link"""
        self._seen_questions[(question.qname.key, int(question.qtype))] = self.node.now

    def _recently_asked(self, question: DnsQuestion) -> bool:
        seen = self._seen_questions.get((question.qname.key, int(question.qtype)))
        return seen is not None and self.node.now - seen <= self.node.params.ns("duplicate_question_window")

    def _suppress(self, job: QueryJob) -> bool:
        if all(self._recently_asked(q) for q in job.questions):
            job.suppressed = True
            self.suppressed += 1
            self.node.stats.suppressed_queries += 1
            return True
        return False

    def post_query(self, job: QueryJob) -> QueryJob:
        params = self.node.params
        job.enqueued_at = self.node.now
        if self._suppress(job):
            return job
        job.send_at = self.node.now + self._draw_delay(params.query_delay_min, params.query_delay_max)
        self.pending.append(job)
        self._rearm()
        return job

    def _flush(self, jobs: List[QueryJob]) -> None:
        questions: List[DnsQuestion] = []
        for job in jobs:
            if self._suppress(job):
                continue
            job.sent = True
            questions.extend(q for q in job.questions if q not in questions)
        if not questions:
            return
        known = self.node.cache.known_answers(questions, self.node.now, self.node.params.known_answer_threshold)
        msg = DnsMessage(id=0, questions=questions, answers=known)
        self.packets_sent += 1
        self.node.stats.queries_sent += 1
        self.node.send_mdns(msg)


class ResponseScheduler(_BatchScheduler):
    event_kind = "response-send"

    def __init__(self, node: "MDNSResolver"):
        super().__init__(node)
        self.packets_sent = 0
        self.suppressed = 0

    def _deadline(self, job: ResponseJob) -> int:
        return job.send_at

    def post_response(self, job: ResponseJob, known_answers: Sequence[ResourceRecord] = ()) -> Optional[ResponseJob]:
        """Schedule job unless the querier already knows every answer"""
        threshold = self.node.params.known_answer_threshold
        job.answers = _dedupe([rr for rr in job.answers if not is_known_answer(rr, known_answers, threshold)])
        job.additionals = _dedupe([rr for rr in job.additionals if not is_known_answer(rr, known_answers, threshold)],
                                  exclude=job.answers)
        job.enqueued_at = self.node.now
        if not job.answers:
            job.suppressed = True
            self.suppressed += 1
            self.node.stats.suppressed_responses += 1
            return None
        if job.immediate:
            job.send_at = self.node.now
            self._flush([job])
            return job
        params = self.node.params
        job.send_at = self.node.now + self._draw_delay(params.response_delay_min, params.response_delay_max)
        self.pending.append(job)
        self._rearm()
        return job

    def observe_response(self, records: Sequence[ResourceRecord]) -> None:
        """Another node multicast these; drop our pending copies of the same data"""
        if not self.pending:
            return
        threshold = self.node.params.known_answer_threshold
        kept: List[ResponseJob] = []
        for job in self.pending:
            job.answers = [rr for rr in job.answers if not is_known_answer(rr, records, threshold)]
            job.additionals = [rr for rr in job.additionals if not is_known_answer(rr, records, threshold)]
            if job.answers:
                kept.append(job)
            else:
                job.suppressed = True
                self.suppressed += 1
                self.node.stats.suppressed_responses += 1
        if len(kept) != len(self.pending):
            self.pending = kept
            self._rearm()

    def _flush(self, jobs: List[ResponseJob]) -> None:
        answers: List[ResourceRecord] = []
        additionals: List[ResourceRecord] = []
        for job in jobs:
            answers.extend(job.answers)
            additionals.extend(job.additionals)
        answers = _dedupe(answers)
        if not answers:
            return
        msg = DnsMessage(id=0, flags=DnsFlags(qr=True, aa=True), answers=answers,
                         additionals=_dedupe(additionals, exclude=answers))
        self.packets_sent += 1
        self.node.stats.responses_sent += 1
        self.node.send_mdns(msg)
