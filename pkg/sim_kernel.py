# sim_kernel.py - Deterministic discrete-event engine for simnet
"""
Virtual clock, per-node TimeEventSets, topology and packet delivery.

Every node owns a TimeEventSet. The kernel keeps exactly one wakeup per
node with a non-empty set, timed at that set's head; the main loop always
takes the globally earliest wakeup (ties broken by the insertion counter,
which is kernel-wide). Time is integer nanoseconds.

Randomness comes from named numpy PCG64 streams: the stream for
(name, seed) is seeded with SeedSequence([seed, crc32(name)]), so it is
identical across runs and platforms and independent of other names.
"""

import heapq
import itertools
import logging
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from config import DNS_PORT
from dns_wire import DnsMessage, message_wire_size
from sim_logging import log_error
from traffic_stats import TrafficStats, Transport

logger = logging.getLogger(__name__)

MIN_WIRE_BYTES = 12


class SchedulingError(ValueError):
    """Event scheduled in the past or for an unknown node"""


class SimulationError(RuntimeError):
    """A callback failed, or kernel bookkeeping went inconsistent"""

    def __init__(self, message: str, event: Optional["TimeEvent"] = None):
        super().__init__(message)
        self.event = event


def rng_stream(name: str, seed: int) -> np.random.Generator:
    """Deterministic random stream for (name, seed)"""
    sequence = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode("utf-8"))])
    return np.random.Generator(np.random.PCG64(sequence))


def _noop(_event: "TimeEvent") -> None:
    return None


# ========================================
# Events
# ========================================

@dataclass(eq=False)
class TimeEvent:
    expiry: int
    seq: int
    owner: str
    callback: Callable[["TimeEvent"], None]
    payload: Any = None
    kind: str = "event"
    detail: str = ""

    @property
    def sort_key(self) -> Tuple[int, int]:
        return self.expiry, self.seq


class TimeEventSet:
    """Events ordered by (expiry, seq); removal anywhere, lazily purged from the heap"""

    def __init__(self):
        self._heap: List[Tuple[int, int, int, TimeEvent]] = []
        self._live: Dict[int, TimeEvent] = {}
        self._pushes = itertools.count()

    def __len__(self) -> int:
        return len(self._live)

    def __contains__(self, event: TimeEvent) -> bool:
        return self._live.get(event.seq) is event

    def __iter__(self) -> Iterator[TimeEvent]:
        return iter(sorted(self._live.values(), key=lambda ev: ev.sort_key))

    def insert(self, event: TimeEvent) -> None:
        if event.seq in self._live:
            raise SchedulingError(f"duplicate event sequence number {event.seq}")
        self._live[event.seq] = event
        heapq.heappush(self._heap, (event.expiry, event.seq, next(self._pushes), event))

    def remove(self, event: TimeEvent) -> bool:
        if self._live.get(event.seq) is not event:
            return False
        del self._live[event.seq]
        self._prune()
        return True

    def head(self) -> Optional[TimeEvent]:
        self._prune()
        return self._heap[0][3] if self._heap else None

    def pop(self) -> TimeEvent:
        self._prune()
        if not self._heap:
            raise IndexError("pop from an empty TimeEventSet")
        _, seq, _, event = heapq.heappop(self._heap)
        del self._live[seq]
        return event

    def _prune(self) -> None:
        heap = self._heap
        while heap and self._live.get(heap[0][1]) is not heap[0][3]:
            heapq.heappop(heap)


# ========================================
# Topology and packets
# ========================================

class Topology:
    """Nodes with role tags, directed link delays (ns) and multicast groups"""

    def __init__(self, default_delay: Optional[int] = None):
        self.nodes: Dict[str, str] = {}
        self.links: Dict[Tuple[str, str], int] = {}
        self.groups: Dict[str, List[str]] = {}
        self.default_delay = default_delay
        self._address_to_node: Dict[str, str] = {}
        self._node_to_address: Dict[str, str] = {}

    def add_node(self, node_id: str, role: str = "host", address: Optional[str] = None) -> None:
        if node_id in self.nodes:
            raise SchedulingError(f"node {node_id} already exists")
        self.nodes[node_id] = role
        if address is not None:
            owner = self._address_to_node.get(address)
            if owner is not None:
                raise SchedulingError(f"address {address} already used by {owner}")
            self._address_to_node[address] = node_id
            self._node_to_address[node_id] = address

    def add_link(self, a: str, b: str, delay: int, symmetric: bool = True) -> None:
        if delay < 0:
            raise SchedulingError(f"negative link delay {delay} between {a} and {b}")
        for node_id in (a, b):
            if node_id not in self.nodes:
                raise SchedulingError(f"link endpoint {node_id} is not a node")
        self.links[(a, b)] = delay
        if symmetric:
            self.links[(b, a)] = delay

    def join_group(self, group: str, node_id: str) -> None:
        if node_id not in self.nodes:
            raise SchedulingError(f"group member {node_id} is not a node")
        members = self.groups.setdefault(group, [])
        if node_id not in members:
            members.append(node_id)

    def add_group(self, group: str) -> None:
        self.groups.setdefault(group, [])

    def members(self, group: str) -> List[str]:
        return list(self.groups.get(group, ()))

    def delay(self, src: str, dst: str) -> Optional[int]:
        """One-way delay, or None when there is no route"""
        if (src, dst) in self.links:
            return self.links[(src, dst)]
        if src in self.nodes and dst in self.nodes:
            return self.default_delay
        return None

    def node_for_address(self, address: str) -> Optional[str]:
        return self._address_to_node.get(address)

    def address_of(self, node_id: str) -> Optional[str]:
        return self._node_to_address.get(node_id)


@dataclass(frozen=True)
class SimPacket:
    src: str
    dst: str                    # node id (unicast) or group id (multicast)
    transport: Transport
    payload: Union[DnsMessage, bytes]
    wire_bytes: int = 0         # filled in by the kernel from message_wire_size
    port: int = DNS_PORT

    def describe(self) -> str:
        msg = self.payload
        if not isinstance(msg, DnsMessage):
            return "raw"
        kind = "R" if msg.is_response else "Q"
        first = msg.questions[0].qname.to_text() if msg.questions else (
            msg.answers[0].owner.to_text() if msg.answers else "-")
        return f"{kind} id={msg.id} {first}"


@dataclass
class CapturedPacket:
    sent_at: int
    packet: SimPacket
    receivers: int = 0          # copies scheduled
    delivered: int = 0          # copies handed to a node


# ========================================
# Kernel
# ========================================

class SimKernel:
    def __init__(self, seed: int = 1, topology: Optional[Topology] = None, *,
                 trace: bool = False, capture: bool = False, check_invariants: bool = False):
        self.seed = seed
        self.topology = topology or Topology()
        self.now = 0
        self.nodes: Dict[str, Any] = {}
        self.stats = TrafficStats()
        self.check_invariants = check_invariants
        self.trace: Optional[List[str]] = [] if trace else None
        self.capture: Optional[List[CapturedPacket]] = [] if capture else None
        self.delivered_bytes = 0
        self.events_processed = 0
        self._seq = itertools.count(1)
        self._event_sets: Dict[str, TimeEventSet] = {}
        self._wakeups = TimeEventSet()
        self._node_wakeup: Dict[str, TimeEvent] = {}
        self._streams: Dict[str, np.random.Generator] = {}
        self._started = False

    # ---- nodes ---------------------------------------------------------

    def add_node(self, node, role: Optional[str] = None, groups: Tuple[str, ...] = ()) -> None:
        """Register a node object exposing node_id, address and on_packet(pkt)"""
        self.topology.add_node(node.node_id, role or getattr(node, "role", "host"), getattr(node, "address", None))
        self.nodes[node.node_id] = node
        self.stats.node(node.node_id)
        for group in groups:
            self.topology.join_group(group, node.node_id)
        if hasattr(node, "attach"):
            node.attach(self)

    def start(self) -> None:
        """Let every node schedule its initial events (registration order)"""
        if self._started:
            return
        self._started = True
        for node in list(self.nodes.values()):
            if hasattr(node, "start"):
                node.start()

    def rng(self, name: str) -> np.random.Generator:
        stream = self._streams.get(name)
        if stream is None:
            stream = self._streams[name] = rng_stream(name, self.seed)
        return stream

    # ---- scheduling ----------------------------------------------------

    def event_set(self, owner: str) -> TimeEventSet:
        events = self._event_sets.get(owner)
        if events is None:
            events = self._event_sets[owner] = TimeEventSet()
        return events

    def schedule(self, owner: str, expiry: int, callback: Callable[[TimeEvent], None], *,
                 kind: str = "event", detail: str = "", payload: Any = None) -> TimeEvent:
        if expiry < self.now:
            raise SchedulingError(f"{kind} for {owner} at {expiry} is before the current time {self.now}")
        event = TimeEvent(int(expiry), next(self._seq), owner, callback, payload, kind, detail)
        events = self.event_set(owner)
        events.insert(event)
        if events.head() is event:
            self._rearm(owner)
        return event

    def schedule_in(self, owner: str, delay: int, callback: Callable[[TimeEvent], None], **kwargs) -> TimeEvent:
        return self.schedule(owner, self.now + delay, callback, **kwargs)

    def cancel(self, event: Optional[TimeEvent]) -> bool:
        if event is None:
            return False
        events = self._event_sets.get(event.owner)
        if events is None:
            return False
        was_head = events.head() is event
        removed = events.remove(event)
        if removed and was_head:
            self._rearm(event.owner)
        return removed

    def _rearm(self, owner: str) -> None:
        """Point the owner's single wakeup at its current head"""
        events = self._event_sets.get(owner)
        head = events.head() if events is not None else None
        current = self._node_wakeup.get(owner)
        if current is not None and head is not None and current.seq == head.seq:
            return
        if current is not None:
            self._wakeups.remove(current)
            del self._node_wakeup[owner]
        if head is not None:
            wakeup = TimeEvent(head.expiry, head.seq, owner, _noop, kind="wakeup")
            self._wakeups.insert(wakeup)
            self._node_wakeup[owner] = wakeup

    def pending_wakeup(self, owner: str) -> Optional[int]:
        wakeup = self._node_wakeup.get(owner)
        return wakeup.expiry if wakeup is not None else None

    def pending_wakeups(self, owner: str) -> int:
        return sum(1 for wakeup in self._wakeups if wakeup.owner == owner)

    def assert_single_wakeup(self) -> None:
        for owner, events in self._event_sets.items():
            head = events.head()
            count = self.pending_wakeups(owner)
            if head is None:
                if count:
                    raise SimulationError(f"{owner} has {count} wakeups but no pending events")
                continue
            wakeup = self._node_wakeup.get(owner)
            if count != 1 or wakeup is None or wakeup.expiry != head.expiry:
                raise SimulationError(f"{owner} wakeup out of step with its head at {head.expiry}", head)

    # ---- main loop -----------------------------------------------------

    def run_until(self, t_end: int) -> int:
        """Process events with expiry <= t_end; returns the number processed"""
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) is before the current time {self.now}")
        self.start()
        processed = 0
        while True:
            wakeup = self._wakeups.head()
            if wakeup is None or wakeup.expiry > t_end:
                break
            self._wakeups.pop()
            owner = wakeup.owner
            del self._node_wakeup[owner]
            event = self._event_sets[owner].pop()
            if event.expiry < self.now:
                raise SimulationError(f"clock would move back from {self.now} to {event.expiry}", event)
            self.now = event.expiry
            self._rearm(owner)
            if self.trace is not None:
                self.trace.append(f"{event.expiry}\t{owner}\t{event.kind}\t{event.detail}")
            try:
                event.callback(event)
            except SimulationError:
                raise
            except Exception as exc:
                log_error("kernel", exc, {"kind": event.kind, "detail": event.detail},
                          node=owner, sim_time=event.expiry)
                raise SimulationError(
                    f"{event.kind} event for {owner} at t={event.expiry}ns failed: {exc}", event) from exc
            processed += 1
            if self.check_invariants:
                self.assert_single_wakeup()
        self.events_processed += processed
        if t_end > self.now:
            self.now = t_end
        return processed

    def write_trace(self, path: Union[str, Path]) -> None:
        if self.trace is None:
            raise SimulationError("tracing was not enabled for this kernel")
        Path(path).write_text("".join(line + "\n" for line in self.trace), encoding="utf-8")

    # ---- packets -------------------------------------------------------

    def send(self, pkt: SimPacket) -> List[TimeEvent]:
        """Schedule delivery of pkt; returns one delivery event per receiving copy"""
        if pkt.src not in self.nodes:
            raise SchedulingError(f"unknown sender {pkt.src}")
        if not pkt.wire_bytes:
            pkt = replace(pkt, wire_bytes=message_wire_size(pkt.payload, True))
        if pkt.wire_bytes < MIN_WIRE_BYTES:
            raise SchedulingError(f"packet of {pkt.wire_bytes} bytes is shorter than a DNS header")

        sender = self.stats.node(pkt.src)
        sender.record_tx(pkt.transport, pkt.wire_bytes)

        if pkt.transport is Transport.MULTICAST:
            if pkt.dst not in self.topology.groups:
                sender.dropped_packets += 1
                logger.warning(f"{pkt.src} sent to unknown multicast group {pkt.dst}")
                return []
            receivers = [member for member in self.topology.members(pkt.dst) if member != pkt.src]
        else:
            receivers = [pkt.dst]

        captured = CapturedPacket(self.now, pkt)
        if self.capture is not None:
            self.capture.append(captured)

        deliveries: List[TimeEvent] = []
        for receiver in receivers:
            delay = self.topology.delay(pkt.src, receiver) if receiver in self.nodes else None
            if delay is None:
                sender.dropped_packets += 1
                logger.debug(f"No route from {pkt.src} to {receiver}, packet dropped")
                continue
            deliveries.append(self.schedule(
                receiver, self.now + delay, self._deliver,
                kind="rx", detail=f"{pkt.src}>{receiver} {pkt.describe()} {pkt.wire_bytes}B",
                payload=(pkt, captured),
            ))
        captured.receivers = len(deliveries)
        return deliveries

    def _deliver(self, event: TimeEvent) -> None:
        pkt, captured = event.payload
        self.stats.node(event.owner).record_rx(pkt.transport, pkt.wire_bytes)
        self.delivered_bytes += pkt.wire_bytes
        captured.delivered += 1
        self.nodes[event.owner].on_packet(pkt)

    def multicast_packets(self) -> List[CapturedPacket]:
        if self.capture is None:
            return []
        return [c for c in self.capture if c.packet.transport is Transport.MULTICAST]
