import ipaddress

import pytest

from dns_wire import DomainName, RRType
from zone_config import ZoneParseError, parse_zone, parse_ttl, render_zone

ORIGIN = DomainName.from_text("uni-konstanz.de.")


def name(text):
    return DomainName.from_text(text)


def test_uni_zone_holds_ten_records(uni_zone):
    records = uni_zone.all_records()
    assert len(records) == 10
    assert all(record.ttl == 86400 for record in records)
    counts = {}
    for record in records:
        counts[record.rtype] = counts.get(record.rtype, 0) + 1
    assert counts == {RRType.SOA: 1, RRType.NS: 2, RRType.MX: 1, RRType.A: 5, RRType.CNAME: 1}


def test_uni_zone_snapshot(uni_zone):
    addresses = {record.owner.to_text(): str(record.rdata)
                 for record in uni_zone.all_records() if record.rtype is RRType.A}
    assert addresses == {
        "uni-konstanz.de.": "134.34.240.80",
        "pan.rz.uni-konstanz.de.": "134.34.3.3",
        "uranos.rz.uni-konstanz.de.": "134.34.3.2",
        "imap.uni-konstanz.de.": "134.34.240.42",
        "proxy-neu.rz.uni-konstanz.de.": "134.34.3.30",
    }
    soa = uni_zone.soa.rdata
    assert soa.mname == name("pan.rz.uni-konstanz.de.")
    assert (soa.serial, soa.refresh, soa.retry, soa.expire) == (20030808000, 172800, 1209600, 3600)
    assert soa.minimum == 86400
    assert uni_zone.default_ttl == 86400
    (mx,) = uni_zone.records[(ORIGIN, RRType.MX)]
    assert mx.rdata.preference == 0
    assert mx.rdata.exchange == name("imap.uni-konstanz.de.")


def test_relative_cname_target_is_origin_qualified(uni_zone):
    result = uni_zone.lookup(name("www.uni-konstanz.de."), RRType.A)
    assert result.records == ()
    assert result.cname.rdata == name("proxy-neu.rz.uni-konstanz.de.")


def test_lookup_results(uni_zone):
    ns = uni_zone.lookup(ORIGIN, RRType.NS)
    assert [str(r.rdata) for r in ns.records] == ["pan.rz.uni-konstanz.de.", "uranos.rz.uni-konstanz.de."]
    missing = uni_zone.lookup(name("nonexistent.uni-konstanz.de."), RRType.A)
    assert missing.nxdomain
    # "rz" only exists because names sit below it
    empty = uni_zone.lookup(name("rz.uni-konstanz.de."), RRType.A)
    assert empty.nodata and not empty.nxdomain
    apex = uni_zone.lookup(ORIGIN, RRType.ANY)
    assert sorted(r.rtype.name for r in apex.records) == ["A", "MX", "NS", "NS", "SOA"]


def test_delegation_and_glue():
    zone = parse_zone(
        "$TTL 3600\n"
        "$ORIGIN de.\n"
        "@ IN SOA ns.nic.de. hostmaster.nic.de. 1 7200 1800 3600000 7200\n"
        "  IN NS ns.nic.de.\n"
        "ns.nic IN A 10.0.1.1\n"
        "uni-konstanz IN NS pan.rz.uni-konstanz.de.\n"
        "pan.rz.uni-konstanz IN A 134.34.3.3\n"
        "sub.uni-konstanz IN NS ns.elsewhere.org.\n"
    )
    cut, ns_records = zone.find_delegation(name("somehost.sub.uni-konstanz.de."))
    assert cut == name("uni-konstanz.de.")
    assert [r.rdata for r in zone.glue_for(ns_records)] == [ipaddress.IPv4Address("134.34.3.3")]
    assert zone.find_delegation(name("ns.nic.de.")) is None


def test_ttl_units_and_explicit_ttls():
    assert parse_ttl("1h") == 3600
    assert parse_ttl("2w") == 1209600
    with pytest.raises(ValueError):
        parse_ttl("1h30m")
    zone = parse_zone("$ORIGIN example.\n$TTL 2h\n@ IN SOA ns hm 1 2 3 4 5\nwww 60 IN A 192.0.2.1\n")
    assert zone.default_ttl == 7200
    assert zone.records[(name("www.example."), RRType.A)][0].ttl == 60


def test_render_then_parse_gives_the_same_zone(uni_zone):
    again = parse_zone(render_zone(uni_zone))
    assert again.origin == uni_zone.origin
    assert again.all_records() == uni_zone.all_records()


@pytest.mark.parametrize("text, line", [
    ("$ORIGIN example.\n@ IN SOA ns hm 1 2 3 4 5\nwww IN A 999.1.1.1\n", 3),
    ("$ORIGIN example.\n$TTL 60\n@ IN SOA ns hm 1 2 3 4 5\nwww IN BOGUS x\n", 4),
    ("$ORIGIN example.\n$TTL 60\n@ IN SOA ns hm ( 1 2 3 4 5\n", 3),
    ("$ORIGIN example.\n$TTL 60\nwww IN A 192.0.2.1\n", 3),
])
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(ZoneParseError) as excinfo:
        parse_zone(text)
    assert excinfo.value.line == line


def test_second_origin_only_moves_the_relative_base():
    zone = parse_zone(
        "$TTL 60\n"
        "$ORIGIN uni-konstanz.de.\n"
        "@ IN SOA pan.rz hostmaster 1 2 3 4 5\n"
        "  IN NS pan.rz\n"
        "$ORIGIN rz.uni-konstanz.de.\n"
        "pan IN A 134.34.3.3\n"
        "imap.uni-konstanz.de. IN A 134.34.240.42\n"
    )
    assert zone.origin == ORIGIN
    assert zone.soa.owner == ORIGIN
    (ns,) = zone.records[(ORIGIN, RRType.NS)]
    assert ns.rdata == name("pan.rz.uni-konstanz.de.")
    assert zone.lookup(name("pan.rz.uni-konstanz.de."), RRType.A).records[0].ttl == 60
    assert zone.lookup(name("imap.uni-konstanz.de."), RRType.A).records


def test_owner_outside_the_zone_is_rejected_after_origin_switch():
    with pytest.raises(ZoneParseError) as excinfo:
        parse_zone(
            "$TTL 60\n"
            "$ORIGIN uni-konstanz.de.\n"
            "@ IN SOA pan.rz hostmaster 1 2 3 4 5\n"
            "$ORIGIN example.org.\n"
            "www IN A 192.0.2.1\n"
        )
    assert excinfo.value.line == 5
