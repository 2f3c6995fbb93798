# conftest.py - shared pytest fixtures for the simnet test modules
from pathlib import Path

import pytest

from config import MDNS_GROUP, ms_to_ns
from dns_cache import CachePolicy
from dns_wire import DomainName
from nodes import DNSAuthServer, DNSCachingServer, DNSClient, MdnsParams
from sim_kernel import SimKernel, Topology
from zone_config import load_zone

REPO_DIR = Path(__file__).parent
ZONES_DIR = REPO_DIR / "zones"
SCENARIOS_DIR = REPO_DIR / "scenarios"
FIXTURES_DIR = REPO_DIR / "fixtures"
QUERIES_DIR = REPO_DIR / "queries"

ROOT_ADDRESS = "10.0.0.1"
DE_ADDRESS = "10.0.1.1"
UNI_ADDRESS = "134.34.3.3"
UNI2_ADDRESS = "134.34.3.2"
RESOLVER_ADDRESS = "10.0.0.53"
CLIENT_ADDRESS = "10.0.2.10"


def read_hex_fixture(name: str) -> bytes:
    lines = (FIXTURES_DIR / name).read_text(encoding="utf-8").splitlines()
    return bytes.fromhex(" ".join(line for line in lines if not line.lstrip().startswith("#")))


def make_kernel(seed: int = 1, delay_ms: float = 1.0, **kwargs) -> SimKernel:
    topology = Topology(default_delay=ms_to_ns(delay_ms))
    topology.add_group(MDNS_GROUP)
    return SimKernel(seed, topology, **kwargs)


def build_hierarchy(kernel: SimKernel, cache_policy: CachePolicy = CachePolicy()) -> dict:
    """root -> de. -> uni-konstanz.de. plus one caching resolver and one client"""
    nodes = {
        "root-1": DNSAuthServer("root-1", ROOT_ADDRESS, load_zone(ZONES_DIR / "root.zone")),
        "de-1": DNSAuthServer("de-1", DE_ADDRESS, load_zone(ZONES_DIR / "de.zone")),
        "uni-1": DNSAuthServer("uni-1", UNI_ADDRESS, load_zone(ZONES_DIR / "uni-konstanz.de.full.zone")),
        "uni-2": DNSAuthServer("uni-2", UNI2_ADDRESS, load_zone(ZONES_DIR / "uni-konstanz.de.full.zone")),
        "resolver-1": DNSCachingServer("resolver-1", RESOLVER_ADDRESS, cache_policy=cache_policy,
                                       root_hints=[(DomainName.from_text("a.root-servers.net."), ROOT_ADDRESS)]),
        "client-1": DNSClient("client-1", CLIENT_ADDRESS, RESOLVER_ADDRESS),
    }
    for node in nodes.values():
        kernel.add_node(node)
    return nodes


@pytest.fixture
def kernel():
    return make_kernel(check_invariants=True)


@pytest.fixture
def hierarchy(kernel):
    return kernel, build_hierarchy(kernel)


@pytest.fixture
def uni_zone():
    return load_zone(ZONES_DIR / "uni-konstanz.de.zone")


@pytest.fixture
def quiet_params():
    """Default timing without periodic re-announcements inside short runs"""
    return MdnsParams(reannounce_interval=3600.0)
