# nodes/base_node.py
import logging
from abc import ABC, abstractmethod
from typing import Any, Callable, List, Optional

import numpy as np

from config import DNS_PORT
from dns_wire import DnsMessage
from sim_kernel import SimKernel, SimPacket, TimeEvent
from traffic_stats import NodeTraffic, Transport

logger = logging.getLogger(__name__)


class ResolverConfigError(ValueError):
    """Node configured with unusable parameters (no root hints, bad zone...)"""


class RequestRefused(RuntimeError):
    """The client cannot accept another in-flight request"""


class QueryFileError(ValueError):
    """Traffic generator query file rejected; line is 1-based"""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.message = message
        self.line = line


class SimNode(ABC):
    """
    An abstract base class for simulated nodes.
    It handles kernel attachment, scheduling on the node's own TimeEventSet,
    named RNG streams and packet sending, leaving protocol behaviour to
    subclasses.
    """
    role = "host"

    def __init__(self, node_id: str, address: Optional[str] = None):
        self.node_id = node_id
        self.address = address
        self.kernel: Optional[SimKernel] = None

    def attach(self, kernel: SimKernel) -> None:
        self.kernel = kernel

    def start(self) -> None:
        """Schedule initial events; called once before the first event runs"""

    @abstractmethod
    def on_packet(self, pkt: SimPacket) -> None:
        """Handle one delivered packet"""

    # ---- kernel helpers ------------------------------------------------

    @property
    def now(self) -> int:
        return self.kernel.now

    @property
    def stats(self) -> NodeTraffic:
        return self.kernel.stats.node(self.node_id)

    def rng(self, name: str) -> np.random.Generator:
        return self.kernel.rng(f"{self.node_id}/{name}")

    def schedule_at(self, expiry: int, callback: Callable[[TimeEvent], None], kind: str,
                    detail: str = "", payload: Any = None) -> TimeEvent:
        return self.kernel.schedule(self.node_id, expiry, callback, kind=kind, detail=detail, payload=payload)

    def schedule_in(self, delay: int, callback: Callable[[TimeEvent], None], kind: str,
                    detail: str = "", payload: Any = None) -> TimeEvent:
        return self.schedule_at(self.now + delay, callback, kind, detail, payload)

    def cancel(self, event: Optional[TimeEvent]) -> bool:
        return self.kernel.cancel(event)

    # ---- sending -------------------------------------------------------

    def send_unicast(self, dst_node: str, msg: DnsMessage, port: int = DNS_PORT) -> List[TimeEvent]:
        return self.kernel.send(SimPacket(self.node_id, dst_node, Transport.UNICAST, msg, port=port))

    def send_to_address(self, address: str, msg: DnsMessage, port: int = DNS_PORT) -> List[TimeEvent]:
        dst_node = self.kernel.topology.node_for_address(address)
        if dst_node is None:
            self.stats.dropped_packets += 1
            logger.debug(f"{self.node_id}: no node at {address}, packet dropped")
            return []
        return self.send_unicast(dst_node, msg, port)

    def send_multicast(self, group: str, msg: DnsMessage, port: int = DNS_PORT) -> List[TimeEvent]:
        return self.kernel.send(SimPacket(self.node_id, group, Transport.MULTICAST, msg, port=port))

    def address_of(self, node_id: str) -> Optional[str]:
        return self.kernel.topology.address_of(node_id)

    def node_at(self, address: str) -> Optional[str]:
        return self.kernel.topology.node_for_address(address)
