# network_configurator.py - Builds a simulated network from a ScenarioConfig
"""
build_network() turns a validated scenario into a SimKernel with every node
registered:

  - the explicit DNS hierarchy of [dns] (servers with their zones, root
    hints, clients and traffic generators)
  - num_resolvers generated mDNS hosts on one multicast link, with service
    counts and friend degrees drawn from streams keyed by the structure seed
  - the explicit [host ...] sections

Structural draws never touch the kernel's per-run streams, so every sweep
point shares the same hosts, services and pairings.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from config import (
    HOST_ADDRESS_PREFIX, MDNS_GROUP, MDNS_SERVICE_TYPES, PAIRING_ID_BYTES, ms_to_ns,
)
from dns_cache import CachePolicy
from dns_wire import DomainName
from nodes import (
    DNSClient, DNSClientTraffGen, MDNSResolver, PairingData, PrivateMDNSResolver, ServerRole,
    ServiceInstance, SimNode, collect_private_names, load_query_file, make_server,
)
from scenario import HostSpec, ScenarioConfig, ScenarioError
from sim_kernel import SimKernel, Topology, rng_stream
from zone_config import load_zone

logger = logging.getLogger(__name__)


@dataclass
class HostPlan:
    """One mDNS host before it becomes a node"""
    node_id: str
    address: str
    services: List[ServiceInstance] = field(default_factory=list)
    private_count: int = 0
    friends: List[str] = field(default_factory=list)

    @property
    def public_services(self) -> List[ServiceInstance]:
        return self.services[self.private_count:]

    @property
    def private_services(self) -> List[ServiceInstance]:
        return self.services[:self.private_count]


@dataclass
class SimNetwork:
    kernel: SimKernel
    config: ScenarioConfig
    hosts: List[HostPlan] = field(default_factory=list)
    mdns_nodes: Dict[str, MDNSResolver] = field(default_factory=dict)
    dns_nodes: Dict[str, SimNode] = field(default_factory=dict)
    pairings: List[Tuple[str, str]] = field(default_factory=list)

    def private_names(self) -> List[DomainName]:
        return collect_private_names(self.mdns_nodes.values())

    def node(self, node_id: str) -> SimNode:
        return self.kernel.nodes[node_id]


# ============= STRUCTURE =============

def host_address(index: int) -> str:
    return f"{HOST_ADDRESS_PREFIX}.{index // 250}.{index % 250 + 1}"


def private_service_count(ratio: float, services: int) -> int:
    # round first so 0.3 * 10 does not become 4
    return min(services, math.ceil(round(ratio * services, 9)))


def pairing_id(structure_seed: int, a: str, b: str) -> bytes:
    first, second = sorted((a, b))
    digest = hashlib.sha256(f"{structure_seed}:{first}:{second}".encode("utf-8")).digest()
    return digest[:PAIRING_ID_BYTES]


def havel_hakimi(degrees: Sequence[int]) -> List[Tuple[int, int]]:
    """
    Simple graph realizing the degree sequence, as index pairs.
    Nodes that cannot be satisfied keep fewer edges (with a warning).
    """
    remaining = list(degrees)
    edges: List[Tuple[int, int]] = []
    while True:
        order = sorted(range(len(remaining)), key=lambda i: (-remaining[i], i))
        first = order[0] if order else None
        if first is None or remaining[first] == 0:
            break
        wanted = remaining[first]
        remaining[first] = 0
        partners = [i for i in order[1:] if remaining[i] > 0][:wanted]
        if len(partners) < wanted:
            logger.warning(f"Friend graph: index {first} gets {len(partners)} of {wanted} friends")
        for partner in partners:
            remaining[partner] -= 1
            edges.append((min(first, partner), max(first, partner)))
    return edges


def draw_friend_degrees(cfg: ScenarioConfig, count: int) -> List[int]:
    mdns = cfg.mdns
    if count < 2:
        return [0] * count
    rng = rng_stream("configurator/friends", cfg.structure_seed)
    high = min(mdns.max_friends, count - 1)
    low = min(mdns.min_friends, high)
    degrees = [int(rng.integers(low, high + 1)) for _ in range(count)]
    if sum(degrees) % 2:
        index = max(range(count), key=lambda i: (degrees[i], -i))
        degrees[index] -= 1
        logger.warning(f"Friend degrees sum to an odd number, host-{index} gets one friend less")
    return degrees


def plan_generated_hosts(cfg: ScenarioConfig) -> List[HostPlan]:
    mdns = cfg.mdns
    count = mdns.num_resolvers
    rng = rng_stream("configurator/services", cfg.structure_seed)
    service_counts = [int(rng.integers(mdns.min_services, mdns.max_services + 1)) for _ in range(count)]

    hosts: List[HostPlan] = []
    for i in range(count):
        node_id = f"host-{i}"
        address = host_address(i)
        services = [
            ServiceInstance(
                instance=f"{node_id} svc-{j}",
                service_type=MDNS_SERVICE_TYPES[(i + j) % len(MDNS_SERVICE_TYPES)],
                port=8000 + j,
                host_name=node_id,
                host_address=address,
            )
            for j in range(service_counts[i])
        ]
        private = private_service_count(mdns.private_service_ratio, len(services)) \
            if i < mdns.num_private_resolvers else 0
        hosts.append(HostPlan(node_id, address, services, private))

    for a, b in havel_hakimi(draw_friend_degrees(cfg, count)):
        hosts[a].friends.append(hosts[b].node_id)
        hosts[b].friends.append(hosts[a].node_id)
    return hosts


def plan_explicit_host(spec: HostSpec) -> HostPlan:
    services = [
        ServiceInstance(s.instance, s.service_type, s.port, spec.node_id, spec.address, tuple(s.txt))
        for s in spec.services
    ]
    return HostPlan(spec.node_id, spec.address, services, spec.private_services, list(spec.friends))


def _symmetric_pairs(hosts: Sequence[HostPlan]) -> List[Tuple[str, str]]:
    """Friend lists made symmetric, in first-mention order"""
    by_id = {host.node_id: host for host in hosts}
    pairs: List[Tuple[str, str]] = []
    for host in hosts:
        for friend in host.friends:
            pair = tuple(sorted((host.node_id, friend)))
            if pair not in pairs:
                pairs.append(pair)
    for a, b in pairs:
        if b not in by_id[a].friends:
            by_id[a].friends.append(b)
        if a not in by_id[b].friends:
            by_id[b].friends.append(a)
    return pairs


# ============= BUILD =============

def _build_dns(cfg: ScenarioConfig, kernel: SimKernel, queries_override: Optional[str]) -> Dict[str, SimNode]:
    dns = cfg.dns
    addresses = {server.node_id: server.address for server in dns.servers}
    root_hints = [(DomainName.from_text(root.name), addresses[root.node_id]) for root in dns.roots]
    nodes: Dict[str, SimNode] = {}

    for spec in dns.servers:
        zone = load_zone(cfg.resolve_path(spec.zone_file)) if spec.zone_file else None
        policy = None
        if spec.cache_policy is not None or spec.cache_capacity is not None:
            defaults = CachePolicy()
            policy = CachePolicy(kind=spec.cache_policy or defaults.kind,
                                 capacity=spec.cache_capacity or defaults.capacity)
        server = make_server(spec.role, spec.node_id, spec.address, zone=zone, cache_policy=policy,
                             root_hints=root_hints if spec.role is ServerRole.CACHING else ())
        kernel.add_node(server)
        nodes[spec.node_id] = server

    traffgens = {gen.client: gen for gen in dns.traffgens}
    for spec in dns.clients:
        server_address = addresses[spec.server]
        gen = traffgens.get(spec.node_id)
        if gen is None:
            client = DNSClient(spec.node_id, spec.address, server_address)
        else:
            query_path = queries_override or str(cfg.resolve_path(gen.query_file))
            client = DNSClientTraffGen(spec.node_id, spec.address, server_address, load_query_file(query_path),
                                       period=gen.period, jitter=gen.jitter)
        kernel.add_node(client)
        nodes[spec.node_id] = client
    return nodes


def _make_mdns_node(cfg: ScenarioConfig, plan: HostPlan, pairs: Sequence[Tuple[str, str]]) -> MDNSResolver:
    mdns = cfg.mdns
    common = dict(host_name=plan.node_id, services=plan.public_services, params=mdns.params(),
                  one_shot_query=mdns.one_shot_query, one_shot_query_at=mdns.one_shot_query_at)
    if not mdns.privacy_extension:
        if plan.private_count:
            raise ScenarioError(f"host {plan.node_id} has private services but the privacy extension is off")
        return MDNSResolver(plan.node_id, plan.address, **common)
    pairings = [PairingData(friend, pairing_id(cfg.structure_seed, plan.node_id, friend))
                for friend in plan.friends if tuple(sorted((plan.node_id, friend))) in pairs]
    return PrivateMDNSResolver(plan.node_id, plan.address, private_services=plan.private_services,
                               pairings=pairings, **common)


def build_network(cfg: ScenarioConfig, seed: Optional[int] = None, *, trace: bool = False,
                  capture: bool = True, check_invariants: bool = False,
                  queries_override: Optional[str] = None) -> SimNetwork:
    """Instantiate every node of cfg in a fresh kernel seeded with seed (default: the scenario seed)"""
    topology = Topology(default_delay=ms_to_ns(cfg.topology.default_delay_ms)
                        if cfg.topology.default_delay_ms is not None else None)
    topology.add_group(MDNS_GROUP)
    kernel = SimKernel(cfg.experiment.seed if seed is None else seed, topology,
                       trace=trace, capture=capture, check_invariants=check_invariants)
    network = SimNetwork(kernel, cfg)

    network.dns_nodes = _build_dns(cfg, kernel, queries_override)

    hosts = plan_generated_hosts(cfg) + [plan_explicit_host(spec) for spec in cfg.hosts]
    network.hosts = hosts
    network.pairings = _symmetric_pairs(hosts)
    for plan in hosts:
        node = _make_mdns_node(cfg, plan, network.pairings)
        kernel.add_node(node)
        network.mdns_nodes[plan.node_id] = node

    for link in cfg.topology.links:
        for end in (link.a, link.b):
            if end not in kernel.nodes:
                raise ScenarioError(f"link names unknown node {end}")
        topology.add_link(link.a, link.b, ms_to_ns(link.delay_ms))

    private_hosts = sum(1 for plan in hosts if plan.private_count)
    logger.info(f"Built network: {len(network.dns_nodes)} DNS nodes, {len(hosts)} mDNS hosts "
                f"({private_hosts} with private services), {len(network.pairings)} pairings")
    return network
