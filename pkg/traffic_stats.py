# traffic_stats.py - Per-node traffic counters collected by the simulation kernel
"""
Counters for every simulated node:
  rx: multicast / unicast bytes and packets received (charged on delivery)
  tx: bytes and packets sent, per transport
  protocol: queries, responses, probes, announcements, suppressions, drops

Rows come out in node registration order so CSV output is reproducible.
"""

from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Dict, Iterator, List

from config import AGGREGATE_NODE_ID, CSV_COLUMNS


class Transport(str, Enum):
    UNICAST = "unicast"
    MULTICAST = "multicast"


@dataclass
class NodeTraffic:
    """Counters for one node"""
    node_id: str
    mcast_bytes: int = 0
    ucast_bytes: int = 0
    mcast_packets: int = 0
    ucast_packets: int = 0
    sent_mcast_bytes: int = 0
    sent_ucast_bytes: int = 0
    sent_packets: int = 0
    queries_sent: int = 0
    responses_sent: int = 0
    probes_sent: int = 0
    announcements_sent: int = 0
    private_bundles_sent: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    suppressed_queries: int = 0
    suppressed_responses: int = 0
    dropped_packets: int = 0
    malformed_packets: int = 0
    stale_responses: int = 0

    @property
    def total_bytes(self) -> int:
        return self.mcast_bytes + self.ucast_bytes

    def record_rx(self, transport: Transport, wire_bytes: int) -> None:
        if transport is Transport.MULTICAST:
            self.mcast_bytes += wire_bytes
            self.mcast_packets += 1
        else:
            self.ucast_bytes += wire_bytes
            self.ucast_packets += 1

    def record_tx(self, transport: Transport, wire_bytes: int) -> None:
        if transport is Transport.MULTICAST:
            self.sent_mcast_bytes += wire_bytes
        else:
            self.sent_ucast_bytes += wire_bytes
        self.sent_packets += 1

    def to_dict(self) -> Dict:
        """Convert to a dictionary for logging / CSV export"""
        data = asdict(self)
        data["total_bytes"] = self.total_bytes
        return data

    def to_row(self) -> Dict:
        data = self.to_dict()
        return {column: data[column] for column in CSV_COLUMNS if column in data}


COUNTER_FIELDS = [f.name for f in fields(NodeTraffic) if f.name != "node_id"]


class TrafficStats:
    """Traffic counters for all nodes of one simulation run"""

    def __init__(self):
        self.nodes: Dict[str, NodeTraffic] = {}

    def __iter__(self) -> Iterator[NodeTraffic]:
        return iter(self.nodes.values())

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: str) -> NodeTraffic:
        traffic = self.nodes.get(node_id)
        if traffic is None:
            traffic = self.nodes[node_id] = NodeTraffic(node_id)
        return traffic

    def incr(self, node_id: str, counter: str, amount: int = 1) -> None:
        if counter not in COUNTER_FIELDS:
            raise KeyError(f"unknown traffic counter {counter!r}")
        traffic = self.node(node_id)
        setattr(traffic, counter, getattr(traffic, counter) + amount)

    def aggregate(self) -> NodeTraffic:
        total = NodeTraffic(AGGREGATE_NODE_ID)
        for traffic in self.nodes.values():
            for name in COUNTER_FIELDS:
                setattr(total, name, getattr(total, name) + getattr(traffic, name))
        return total

    def total_received_bytes(self) -> int:
        return sum(traffic.total_bytes for traffic in self.nodes.values())

    def rows(self, include_aggregate: bool = True) -> List[Dict]:
        rows = [traffic.to_row() for traffic in self.nodes.values()]
        if include_aggregate:
            rows.append(self.aggregate().to_row())
        return rows

    def to_dict(self) -> Dict[str, Dict]:
        return {node_id: traffic.to_dict() for node_id, traffic in self.nodes.items()}
