import pytest

from config import seconds_to_ns
from conftest import CLIENT_ADDRESS, QUERIES_DIR, make_kernel
from dns_wire import DnsFlags, DnsMessage, DnsQuestion, DomainName, Rcode, RRType, make_response
from nodes import DNSClient, DNSClientTraffGen, QueryFileError, ResolverConfigError, load_query_file, parse_query_lines
from sim_kernel import SimPacket
from traffic_stats import Transport

NOWHERE = "10.0.9.9"
PAN = DomainName.from_text("pan.rz.uni-konstanz.de.")


def test_unanswered_query_times_out_after_all_retries(kernel):
    client = DNSClient("client-1", CLIENT_ADDRESS, NOWHERE)
    kernel.add_node(client)
    outcomes = []
    request = client.resolve(PAN, RRType.A, callback=outcomes.append)
    kernel.run_until(seconds_to_ns(10))
    (outcome,) = outcomes
    assert outcome.timed_out and outcome.rcode is None
    assert outcome.rtt_ns == seconds_to_ns(3)
    assert request.attempts == 3
    assert client.stats.queries_sent == 3
    assert client.stats.dropped_packets == 3
    assert client.in_flight == {}


def test_in_flight_ids_are_distinct(kernel):
    client = DNSClient("client-1", CLIENT_ADDRESS, NOWHERE)
    kernel.add_node(client)
    requests = [client.resolve(PAN, RRType.A) for _ in range(300)]
    assert len({request.id for request in requests}) == 300


def test_unmatched_response_is_counted_as_stale(kernel):
    client = DNSClient("client-1", CLIENT_ADDRESS, NOWHERE)
    other = DNSClient("other", "10.0.2.11")
    kernel.add_node(client)
    kernel.add_node(other)
    request = client.resolve(PAN, RRType.A)
    wrong_question = DnsMessage(id=request.id, flags=DnsFlags(rd=True),
                                questions=[DnsQuestion(PAN, RRType.MX)])
    unknown_id = DnsMessage(id=(request.id + 1) % 65536, flags=DnsFlags(rd=True),
                            questions=[DnsQuestion(PAN, RRType.A)])
    for query in (wrong_question, unknown_id):
        kernel.send(SimPacket("other", "client-1", Transport.UNICAST, make_response(query, Rcode.NOERROR)))
    kernel.run_until(seconds_to_ns(0.5))
    assert client.stats.stale_responses == 2
    assert request.id in client.in_flight


def test_client_without_server_is_refused(kernel):
    client = DNSClient("client-1", CLIENT_ADDRESS)
    kernel.add_node(client)
    with pytest.raises(ResolverConfigError):
        client.resolve(PAN, RRType.A)


# ============= query files =============

def test_example_query_file():
    queries = load_query_file(QUERIES_DIR / "example_queries.txt")
    assert [(q.qname.to_text(), q.qtype) for q in queries] == [
        ("somehost.uni-konstanz.de.", RRType.A),
        ("www.uni-konstanz.de.", RRType.A),
        ("pan.rz.uni-konstanz.de.", RRType.A),
        ("uni-konstanz.de.", RRType.MX),
    ]


@pytest.mark.parametrize("text, line", [
    ("www.example. A\nbroken\n", 2),
    ("# header\n\nwww.example. A\nwww.example. BOGUS\n", 4),
    ("www.example. A extra\n", 1),
])
def test_query_file_errors_name_the_line(text, line):
    with pytest.raises(QueryFileError) as excinfo:
        parse_query_lines(text)
    assert excinfo.value.line == line


def test_empty_query_file_is_rejected():
    with pytest.raises(QueryFileError):
        parse_query_lines("# nothing here\n")


# ============= traffic generator =============

def test_traffgen_without_jitter_ticks_on_the_period(kernel):
    queries = parse_query_lines("pan.rz.uni-konstanz.de. A\n")
    gen = DNSClientTraffGen("gen-1", CLIENT_ADDRESS, NOWHERE, queries, period=10.0, jitter=0.0, retries=0)
    kernel.add_node(gen)
    kernel.run_until(seconds_to_ns(35))
    assert gen.tick_times == [seconds_to_ns(10), seconds_to_ns(20), seconds_to_ns(30)]
    assert gen.send_counts == [3]
    assert all(outcome.timed_out for outcome in gen.outcomes)


def test_traffgen_picks_lines_uniformly():
    kernel = make_kernel(seed=11)
    queries = load_query_file(QUERIES_DIR / "example_queries.txt")
    gen = DNSClientTraffGen("gen-1", CLIENT_ADDRESS, NOWHERE, queries, period=1.0, jitter=0.1, retries=0)
    kernel.add_node(gen)
    kernel.run_until(seconds_to_ns(10000))
    total = sum(gen.send_counts)
    assert 9000 <= total <= 11000
    for count in gen.send_counts:
        assert abs(count - total / 4) < 150
    gaps = [b - a for a, b in zip(gen.tick_times, gen.tick_times[1:])]
    assert min(gaps) >= seconds_to_ns(0.9) and max(gaps) <= seconds_to_ns(1.1)


@pytest.mark.parametrize("period, jitter", [(0.0, 0.1), (1.0, 1.0), (1.0, -0.1)])
def test_traffgen_rejects_bad_timing(period, jitter):
    queries = parse_query_lines("pan.rz.uni-konstanz.de. A\n")
    with pytest.raises(ResolverConfigError):
        DNSClientTraffGen("gen-1", CLIENT_ADDRESS, NOWHERE, queries, period=period, jitter=jitter)
