# nodes/__init__.py
from .base_node import QueryFileError, RequestRefused, ResolverConfigError, SimNode
from .dns_client import DNSClient, DNSClientTraffGen, ResolveOutcome, load_query_file, parse_query_lines
from .dns_server import (
    DNSAuthServer, DNSCachingServer, DNSEchoServer, DNSServerBase, ServerRole,
    auth_handle_query, echo_handle_query, make_server,
)
from .mdns_announcer import ServiceInstance, ServicePhase
from .mdns_resolver import MDNSResolver, MdnsRecordCache
from .mdns_schedulers import MdnsParams, ProbeJob, QueryJob, ResponseJob
from .privacy import PairingData, PrivacyViolation, PrivateMDNSResolver, audit_privacy, collect_private_names

__all__ = [
    "SimNode", "QueryFileError", "RequestRefused", "ResolverConfigError",
    "DNSClient", "DNSClientTraffGen", "ResolveOutcome", "load_query_file", "parse_query_lines",
    "DNSServerBase", "DNSAuthServer", "DNSCachingServer", "DNSEchoServer", "ServerRole",
    "auth_handle_query", "echo_handle_query", "make_server",
    "ServiceInstance", "ServicePhase", "MDNSResolver", "MdnsRecordCache",
    "MdnsParams", "ProbeJob", "QueryJob", "ResponseJob",
    "PairingData", "PrivacyViolation", "PrivateMDNSResolver", "audit_privacy", "collect_private_names",
]
