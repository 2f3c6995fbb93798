import ipaddress

import dns.message
import dns.rdatatype
import numpy as np
import pytest

from conftest import read_hex_fixture
from dns_wire import (
    DnsFlags, DnsMessage, DnsQuestion, DomainName, EncodingError, MXData, ParseError, ResourceRecord,
    RRType, SOAData, SRVData, TXTData, encode_name, encode_rdata, message_wire_size, parse_message,
    serialize_message,
)

PAN = DomainName.from_text("pan.rz.uni-konstanz.de.")
URANOS = DomainName.from_text("uranos.rz.uni-konstanz.de.")
ORIGIN = DomainName.from_text("uni-konstanz.de.")


def pan_query():
    return DnsMessage(id=0x1234, flags=DnsFlags(rd=True), questions=[DnsQuestion(PAN, RRType.A)])


def pan_response():
    answer = ResourceRecord(PAN, RRType.A, 86400, ipaddress.IPv4Address("134.34.3.3"))
    return DnsMessage(id=0x1234, flags=DnsFlags(qr=True, aa=True, rd=True),
                      questions=[DnsQuestion(PAN, RRType.A)], answers=[answer])


def test_query_matches_golden_bytes():
    assert serialize_message(pan_query()) == read_hex_fixture("query_pan_a.hex")


def test_response_matches_golden_bytes_and_parses_back():
    wire = read_hex_fixture("response_pan_a.hex")
    assert serialize_message(pan_response(), compress=True) == wire
    assert parse_message(wire) == pan_response()


def test_independent_decoder_reads_our_response():
    decoded = dns.message.from_wire(serialize_message(pan_response()))
    assert decoded.id == 0x1234
    assert decoded.question[0].name.to_text() == "pan.rz.uni-konstanz.de."
    rrset = decoded.answer[0]
    assert rrset.rdtype == dns.rdatatype.A
    assert rrset.ttl == 86400
    assert rrset[0].address == "134.34.3.3"


def test_name_encoding_lengths():
    stream = bytearray(12)
    offsets = {}
    assert encode_name(PAN, stream, offsets) == 24
    assert bytes(stream[12:16]) == b"\x03pan"
    assert encode_name(URANOS, stream, offsets) == 9
    # pointer to "rz.uni-konstanz.de" inside the first name
    assert bytes(stream[-2:]) == bytes([0xC0, 16])


def test_repeated_owner_saves_fifteen_bytes():
    msg = DnsMessage(id=1, flags=DnsFlags(qr=True), answers=[
        ResourceRecord(ORIGIN, RRType.A, 86400, ipaddress.IPv4Address("134.34.240.80")),
        ResourceRecord(ORIGIN, RRType.MX, 86400, MXData(0, DomainName.from_text("imap.uni-konstanz.de."))),
    ])
    plain = serialize_message(msg, compress=False)
    compressed = serialize_message(msg, compress=True)
    # the MX exchange also shrinks by pointing at the owner suffix
    assert len(plain) - len(compressed) == 15 + 15
    two_a = DnsMessage(id=1, flags=DnsFlags(qr=True), answers=[
        ResourceRecord(ORIGIN, RRType.A, 86400, ipaddress.IPv4Address("134.34.240.80")),
        ResourceRecord(ORIGIN, RRType.A, 86400, ipaddress.IPv4Address("134.34.3.3")),
    ])
    assert message_wire_size(two_a, False) - message_wire_size(two_a, True) == 15


def test_a_rdata_bytes():
    record = ResourceRecord(PAN, RRType.A, 86400, ipaddress.IPv4Address("134.34.3.3"))
    assert encode_rdata(record) == bytes([0x86, 0x22, 0x03, 0x03])


def test_srv_target_is_never_compressed():
    target = DomainName.from_text("host-1.local.")
    owner = DomainName.from_text("printer._ipp._tcp.local.")
    msg = DnsMessage(flags=DnsFlags(qr=True), answers=[
        ResourceRecord(target, RRType.A, 120, ipaddress.IPv4Address("10.1.0.1")),
        ResourceRecord(owner, RRType.SRV, 120, SRVData(0, 0, 631, target)),
    ])
    wire = serialize_message(msg)
    assert wire.count(b"\x06host-1\x05local\x00") == 2
    assert parse_message(wire) == msg


def test_soa_serial_is_truncated_on_the_wire():
    soa = SOAData(PAN, DomainName.from_text("hostmaster.uni-konstanz.de."), 20030808000, 172800, 1209600, 3600, 86400)
    msg = DnsMessage(flags=DnsFlags(qr=True), answers=[ResourceRecord(ORIGIN, RRType.SOA, 86400, soa)])
    parsed = parse_message(serialize_message(msg))
    assert parsed.answers[0].rdata.serial == 20030808000 % 2**32


def test_cache_flush_bit_survives_parsing():
    record = ResourceRecord(DomainName.from_text("host-1.local."), RRType.A, 120,
                            ipaddress.IPv4Address("10.1.0.1"), cache_flush=True)
    wire = serialize_message(DnsMessage(flags=DnsFlags(qr=True, aa=True), answers=[record]))
    assert wire[12 + 14 + 2:12 + 14 + 4] == b"\x80\x01"
    assert parse_message(wire).answers[0].cache_flush


@pytest.mark.parametrize("wire, message", [
    (b"\x00\x01\x00", "shorter than the 12-byte header"),
    (read_hex_fixture("query_pan_a.hex")[:-3], "truncated"),
    (bytes(4) + b"\x00\x01" + bytes(6) + b"\xc0\x0c\x00\x01\x00\x01", "pointer"),
])
def test_malformed_wire_is_rejected(wire, message):
    with pytest.raises(ParseError, match=message):
        parse_message(wire)


def test_long_label_is_rejected():
    with pytest.raises(EncodingError):
        DomainName((b"x" * 64,))


def test_any_record_is_rejected():
    with pytest.raises(EncodingError):
        ResourceRecord(PAN, RRType.ANY, 1, ipaddress.IPv4Address("1.2.3.4"))


# ============= seeded property check =============

LABELS = [b"www", b"mail", b"uni-konstanz", b"de", b"rz", b"pan", b"local", b"_http", b"_tcp", b"a"]


def random_name(rng):
    return DomainName(tuple(LABELS[int(i)] for i in rng.integers(0, len(LABELS), int(rng.integers(1, 5)))))


RECORD_TYPES = [RRType.A, RRType.AAAA, RRType.NS, RRType.PTR, RRType.SRV, RRType.CNAME,
                RRType.TXT, RRType.MX, RRType.SOA]
QUESTION_TYPES = RECORD_TYPES + [RRType.ANY]


def random_record(rng):
    rtype = RECORD_TYPES[int(rng.integers(len(RECORD_TYPES)))]
    if rtype is RRType.A:
        rdata = ipaddress.IPv4Address(int(rng.integers(0, 2**32)))
    elif rtype is RRType.AAAA:
        rdata = ipaddress.IPv6Address(bytes(rng.integers(0, 256, 16, dtype=np.uint8)))
    elif rtype in (RRType.NS, RRType.PTR, RRType.CNAME):
        rdata = random_name(rng)
    elif rtype is RRType.SRV:
        rdata = SRVData(int(rng.integers(65536)), int(rng.integers(65536)), int(rng.integers(65536)), random_name(rng))
    elif rtype is RRType.TXT:
        rdata = TXTData(tuple(bytes(rng.integers(0, 256, int(rng.integers(0, 40)), dtype=np.uint8))
                              for _ in range(int(rng.integers(1, 4)))))
    elif rtype is RRType.MX:
        rdata = MXData(int(rng.integers(65536)), random_name(rng))
    else:
        rdata = SOAData(random_name(rng), random_name(rng), *(int(v) for v in rng.integers(0, 2**31, 5)))
    return ResourceRecord(random_name(rng), rtype, int(rng.integers(0, 2**31)), rdata,
                          cache_flush=bool(rng.integers(2)))


def random_message(rng):
    return DnsMessage(
        id=int(rng.integers(65536)),
        flags=DnsFlags(qr=bool(rng.integers(2)), aa=bool(rng.integers(2)), rd=bool(rng.integers(2))),
        questions=[DnsQuestion(random_name(rng), QUESTION_TYPES[int(rng.integers(len(QUESTION_TYPES)))])
                   for _ in range(int(rng.integers(0, 3)))],
        answers=[random_record(rng) for _ in range(int(rng.integers(0, 5)))],
        authorities=[random_record(rng) for _ in range(int(rng.integers(0, 3)))],
        additionals=[random_record(rng) for _ in range(int(rng.integers(0, 3)))],
    )


def test_random_messages_survive_both_codecs():
    rng = np.random.default_rng(20030808)
    for _ in range(10_000):
        msg = random_message(rng)
        compressed = serialize_message(msg, compress=True)
        plain = serialize_message(msg, compress=False)
        assert len(compressed) <= len(plain)
        assert len(compressed) == message_wire_size(msg, True)
        decoded = parse_message(compressed)
        assert decoded == msg
        assert parse_message(plain) == msg
        assert decoded.names() == parse_message(plain).names()
