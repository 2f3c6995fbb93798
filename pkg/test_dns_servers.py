import ipaddress

from config import ms_to_ns, seconds_to_ns
from conftest import CLIENT_ADDRESS, RESOLVER_ADDRESS, build_hierarchy, make_kernel
from dns_cache import CachePolicy
from dns_wire import DnsFlags, DnsMessage, DnsQuestion, DomainName, Rcode, RRType
from nodes import DNSCachingServer, DNSClient, DNSEchoServer, ResolverConfigError, auth_handle_query, echo_handle_query
import pytest


def name(text):
    return DomainName.from_text(text)


def ask(qname, qtype=RRType.A, rd=False):
    return DnsMessage(id=99, flags=DnsFlags(rd=rd), questions=[DnsQuestion(name(qname), qtype)])


# ============= authoritative =============

def test_auth_answer_carries_ns_and_glue(uni_zone):
    response = auth_handle_query(uni_zone, ask("pan.rz.uni-konstanz.de."))
    assert response.flags.aa and response.rcode is Rcode.NOERROR
    assert [str(rr.rdata) for rr in response.answers] == ["134.34.3.3"]
    assert [str(rr.rdata) for rr in response.authorities] == ["pan.rz.uni-konstanz.de.", "uranos.rz.uni-konstanz.de."]
    assert [str(rr.rdata) for rr in response.additionals] == ["134.34.3.3", "134.34.3.2"]


def test_auth_chases_cname_inside_the_zone(uni_zone):
    response = auth_handle_query(uni_zone, ask("www.uni-konstanz.de."))
    assert [rr.rtype for rr in response.answers] == [RRType.CNAME, RRType.A]
    assert str(response.answers[1].rdata) == "134.34.3.30"


def test_auth_any_at_apex(uni_zone):
    response = auth_handle_query(uni_zone, ask("uni-konstanz.de.", RRType.ANY))
    assert sorted(rr.rtype.name for rr in response.answers) == ["A", "MX", "NS", "NS", "SOA"]


def test_auth_negative_answers(uni_zone):
    missing = auth_handle_query(uni_zone, ask("nonexistent.uni-konstanz.de."))
    assert missing.rcode is Rcode.NXDOMAIN and missing.flags.aa
    assert missing.answers == [] and [rr.rtype for rr in missing.authorities] == [RRType.SOA]
    nodata = auth_handle_query(uni_zone, ask("imap.uni-konstanz.de.", RRType.MX))
    assert nodata.rcode is Rcode.NOERROR and nodata.answers == []
    assert [rr.rtype for rr in nodata.authorities] == [RRType.SOA]


def test_auth_error_codes(uni_zone):
    assert auth_handle_query(uni_zone, ask("pan.rz.uni-konstanz.de.", RRType.SRV)).rcode is Rcode.NOTIMP
    assert auth_handle_query(uni_zone, ask("www.example.org.")).rcode is Rcode.SERVFAIL
    empty = DnsMessage(id=5)
    formerr = auth_handle_query(uni_zone, empty)
    assert formerr.rcode is Rcode.FORMERR and formerr.id == 5


def test_auth_referral_below_a_cut(hierarchy):
    _, nodes = hierarchy
    response = auth_handle_query(nodes["de-1"].zone, ask("somehost.uni-konstanz.de."))
    assert not response.flags.aa and response.answers == []
    assert {str(rr.rdata) for rr in response.authorities} == {"pan.rz.uni-konstanz.de.", "uranos.rz.uni-konstanz.de."}
    assert [str(rr.rdata) for rr in response.additionals] == ["134.34.3.3", "134.34.3.2"]


# ============= echo / cca =============

def test_echo_decodes_the_hex_label():
    response = echo_handle_query(ask("86220303.00.echo.example."), CLIENT_ADDRESS)
    (record,) = response.answers
    assert record.rdata == ipaddress.IPv4Address("134.34.3.3")
    assert record.ttl == 604800
    assert echo_handle_query(ask("zz.00.echo.example."), CLIENT_ADDRESS).rcode is Rcode.NXDOMAIN


def test_cca_reports_the_querier_address():
    response = echo_handle_query(ask("probe.cca.echo.example.", RRType.TXT), CLIENT_ADDRESS)
    assert response.answers[0].rdata.as_text() == [CLIENT_ADDRESS]
    assert echo_handle_query(ask("probe.cca.echo.example.", RRType.A), CLIENT_ADDRESS).answers == []


def test_echo_server_node_answers_over_the_network(kernel):
    echo = DNSEchoServer("echo-1", "10.0.5.5")
    client = DNSClient("client-1", CLIENT_ADDRESS, "10.0.5.5")
    kernel.add_node(echo)
    kernel.add_node(client)
    outcomes = []
    client.resolve(name("probe.cca.echo.example."), RRType.TXT, callback=outcomes.append)
    kernel.run_until(seconds_to_ns(1))
    assert outcomes[0].answers[0].rdata.as_text() == [CLIENT_ADDRESS]


# ============= caching resolver =============

def resolve(kernel, client, qname, qtype=RRType.A, until=5):
    outcomes = []
    client.resolve(name(qname), qtype, callback=outcomes.append)
    kernel.run_until(kernel.now + seconds_to_ns(until))
    (outcome,) = outcomes
    return outcome


def test_cold_lookup_walks_the_hierarchy_then_hits_cache(hierarchy):
    kernel, nodes = hierarchy
    resolver, client = nodes["resolver-1"], nodes["client-1"]

    cold = resolve(kernel, client, "somehost.uni-konstanz.de.")
    assert cold.rcode is Rcode.NOERROR
    assert [str(rr.rdata) for rr in cold.answers] == ["134.34.10.20"]
    assert resolver.upstream_queries == 3
    # client->resolver, three upstream round trips, resolver->client at 1 ms each
    assert cold.rtt_ns == ms_to_ns(8)

    warm = resolve(kernel, client, "somehost.uni-konstanz.de.")
    assert [str(rr.rdata) for rr in warm.answers] == ["134.34.10.20"]
    assert resolver.upstream_queries == 3
    assert warm.rtt_ns == ms_to_ns(2)
    assert warm.answers[0].ttl < 86400


def test_cached_delegation_skips_root_and_tld(hierarchy):
    kernel, nodes = hierarchy
    resolve(kernel, nodes["client-1"], "somehost.uni-konstanz.de.")
    resolve(kernel, nodes["client-1"], "imap.uni-konstanz.de.")
    assert nodes["resolver-1"].upstream_queries == 4


def test_cache_counters_only_count_answer_lookups(hierarchy):
    kernel, nodes = hierarchy
    resolver, client = nodes["resolver-1"], nodes["client-1"]

    def counters():
        return resolver.stats.cache_hits, resolver.stats.cache_misses

    # A and CNAME misses for the question; referrals come with glue
    resolve(kernel, client, "somehost.uni-konstanz.de.")
    assert counters() == (0, 2)
    resolve(kernel, client, "somehost.uni-konstanz.de.")
    assert counters() == (1, 2)
    # finding the cached uni-konstanz.de. delegation is not a lookup
    resolve(kernel, client, "imap.uni-konstanz.de.")
    assert counters() == (1, 4)
    assert resolver.upstream_queries == 4


def test_cname_answer_through_the_resolver(hierarchy):
    kernel, nodes = hierarchy
    outcome = resolve(kernel, nodes["client-1"], "www.uni-konstanz.de.")
    assert [rr.rtype for rr in outcome.answers] == [RRType.CNAME, RRType.A]
    assert str(outcome.answers[-1].rdata) == "134.34.3.30"


def test_nxdomain_passes_through(hierarchy):
    kernel, nodes = hierarchy
    outcome = resolve(kernel, nodes["client-1"], "nonexistent.uni-konstanz.de.")
    assert outcome.rcode is Rcode.NXDOMAIN and outcome.answers == []


def test_resolution_is_the_same_with_either_cache_policy():
    answers = []
    for policy in (CachePolicy("ttl", 64), CachePolicy("simple", 64)):
        kernel = make_kernel()
        nodes = build_hierarchy(kernel, policy)
        outcome = resolve(kernel, nodes["client-1"], "pan.rz.uni-konstanz.de.")
        answers.append([str(rr.rdata) for rr in outcome.answers])
    assert answers == [["134.34.3.3"], ["134.34.3.3"]]


def test_unreachable_root_gives_servfail_after_retries(kernel):
    resolver = DNSCachingServer("resolver-1", RESOLVER_ADDRESS, root_hints=[(name("a.root-servers.net."), "10.0.0.1")])
    client = DNSClient("client-1", CLIENT_ADDRESS, RESOLVER_ADDRESS, timeout=10, retries=0)
    kernel.add_node(resolver)
    kernel.add_node(client)
    outcome = resolve(kernel, client, "pan.rz.uni-konstanz.de.", until=10)
    assert outcome.rcode is Rcode.SERVFAIL
    assert resolver.upstream_queries == 3
    assert outcome.rtt_ns == seconds_to_ns(3) + ms_to_ns(2)


def test_non_recursive_query_gets_an_empty_answer(hierarchy):
    kernel, nodes = hierarchy
    client = nodes["client-1"]
    client.send_to_address(RESOLVER_ADDRESS, ask("pan.rz.uni-konstanz.de.", rd=False))
    kernel.run_until(seconds_to_ns(1))
    assert nodes["resolver-1"].upstream_queries == 0
    assert client.stats.stale_responses == 1


def test_caching_server_needs_root_hints():
    with pytest.raises(ResolverConfigError):
        DNSCachingServer("resolver-1", RESOLVER_ADDRESS)
