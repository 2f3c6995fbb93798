# zone_config.py - BIND-subset zone file parser and authoritative lookup structure
"""
Parses the zone grammar authoritative servers are configured with:

    $TTL 86400 ; 24 hours
    $ORIGIN uni-konstanz.de.
    @       IN  SOA pan.rz.uni-konstanz.de. hostmaster.uni-konstanz.de. (
                    20030808000 172800 1209600 3600 )
            IN  NS  pan.rz.uni-konstanz.de.
    pan.rz  IN  A   134.34.3.3

Supported: ';' comments, $TTL and $ORIGIN, '@', blank owner (= previous
owner), parenthesised multi-line records, relative names, class IN, types
SOA NS MX A AAAA CNAME PTR SRV TXT. A SOA with four numbers takes its
minimum from the current $TTL.
"""

import ipaddress
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

from dns_wire import (
    DomainName, EncodingError, MXData, ResourceRecord, RRType, SOAData, SRVData, TXTData,
    rdata_to_text,
)

logger = logging.getLogger(__name__)

TIME_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86400, "w": 604800}
ZONE_TYPES = (RRType.SOA, RRType.NS, RRType.MX, RRType.A, RRType.AAAA, RRType.CNAME,
              RRType.PTR, RRType.SRV, RRType.TXT)

RecordKey = Tuple[DomainName, RRType]


class ZoneParseError(ValueError):
    """Zone text rejected; line is 1-based"""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.message = message
        self.line = line


def parse_ttl(token: str) -> int:
    """Seconds, optionally with a BIND unit suffix (1h, 2d, 2w)"""
    token = token.strip().lower()
    if token and token[-1] in TIME_UNITS and token[:-1].isdigit():
        return int(token[:-1]) * TIME_UNITS[token[-1]]
    if token.isdigit():
        return int(token)
    raise ValueError(f"invalid time value {token!r}")


def _is_ttl(token: str) -> bool:
    try:
        parse_ttl(token)
        return True
    except ValueError:
        return False


# ========================================
# Zone model
# ========================================

@dataclass(frozen=True)
class LookupResult:
    records: Tuple[ResourceRecord, ...]
    name_exists: bool
    cname: Optional[ResourceRecord] = None

    @property
    def nxdomain(self) -> bool:
        return not self.name_exists

    @property
    def nodata(self) -> bool:
        return self.name_exists and not self.records and self.cname is None


@dataclass(frozen=True)
class ZoneConfig:
    origin: DomainName
    default_ttl: int
    soa: ResourceRecord
    records: Dict[RecordKey, Tuple[ResourceRecord, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(rrset) for rrset in self.records.values())

    def all_records(self) -> List[ResourceRecord]:
        return [record for rrset in self.records.values() for record in rrset]

    def contains(self, name: DomainName) -> bool:
        return name.is_subdomain_of(self.origin)

    def name_exists(self, qname: DomainName) -> bool:
        """Owner present, or an empty non-terminal above existing owners"""
        return any(owner.is_subdomain_of(qname) for owner, _ in self.records)

    def lookup(self, qname: DomainName, qtype: RRType) -> LookupResult:
        if qtype is RRType.ANY:
            found = tuple(r for (owner, _), rrset in self.records.items() if owner == qname for r in rrset)
            return LookupResult(found, self.name_exists(qname))
        found = self.records.get((qname, qtype), ())
        cname = None
        if not found and qtype is not RRType.CNAME:
            cnames = self.records.get((qname, RRType.CNAME), ())
            cname = cnames[0] if cnames else None
        return LookupResult(tuple(found), self.name_exists(qname), cname)

    def find_delegation(self, qname: DomainName) -> Optional[Tuple[DomainName, Tuple[ResourceRecord, ...]]]:
        """The zone cut closest to the apex that covers qname, with its NS records"""
        delegation = None
        for ancestor in qname.ancestors():
            if ancestor == self.origin or not ancestor.is_subdomain_of(self.origin):
                break
            ns_records = self.records.get((ancestor, RRType.NS))
            if ns_records:
                delegation = (ancestor, ns_records)
        return delegation

    def address_records(self, name: DomainName) -> List[ResourceRecord]:
        return list(self.records.get((name, RRType.A), ())) + list(self.records.get((name, RRType.AAAA), ()))

    def glue_for(self, ns_records) -> List[ResourceRecord]:
        """In-zone A/AAAA records of the NS targets"""
        glue: List[ResourceRecord] = []
        for ns in ns_records:
            for record in self.address_records(ns.rdata):
                if record not in glue:
                    glue.append(record)
        return glue


def lookup(zone: ZoneConfig, qname: DomainName, qtype: RRType) -> LookupResult:
    return zone.lookup(qname, qtype)


# ========================================
# Tokenizer
# ========================================

class _Token(NamedTuple):
    text: Union[str, bytes]
    quoted: bool


@dataclass
class _Entry:
    line: int
    blank_owner: bool
    tokens: List[_Token] = field(default_factory=list)


def _read_quoted(line: str, start: int, lineno: int) -> Tuple[bytes, int]:
    buf = bytearray()
    i = start + 1
    while i < len(line) and line[i] != '"':
        if line[i] == "\\" and i + 1 < len(line):
            digits = line[i + 1:i + 4]
            if len(digits) == 3 and digits.isdigit():
                value = int(digits)
                if value > 255:
                    raise ZoneParseError(f"escape \\{digits} out of range", lineno)
                buf.append(value)
                i += 4
                continue
            buf.extend(line[i + 1].encode("utf-8"))
            i += 2
            continue
        buf.extend(line[i].encode("utf-8"))
        i += 1
    if i >= len(line):
        raise ZoneParseError("unterminated quoted string", lineno)
    return bytes(buf), i + 1


def _tokenize(line: str, lineno: int) -> List[_Token]:
    tokens = []
    i = 0
    while i < len(line):
        char = line[i]
        if char in " \t\r":
            i += 1
        elif char == ";":
            break
        elif char in "()":
            tokens.append(_Token(char, False))
            i += 1
        elif char == '"':
            text, i = _read_quoted(line, i, lineno)
            tokens.append(_Token(text, True))
        else:
            end = i
            while end < len(line) and line[end] not in ' \t\r;()"':
                end += 1
            tokens.append(_Token(line[i:end], False))
            i = end
    return tokens


def _logical_entries(text: str) -> List[_Entry]:
    """Join parenthesised continuation lines into one entry per record or directive"""
    entries: List[_Entry] = []
    current: Optional[_Entry] = None
    in_parens = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = _tokenize(line, lineno)
        if current is None:
            if not tokens:
                continue
            current = _Entry(lineno, blank_owner=line[:1] in (" ", "\t"))
        for token in tokens:
            if not token.quoted and token.text == "(":
                if in_parens:
                    raise ZoneParseError("nested '('", lineno)
                in_parens = True
            elif not token.quoted and token.text == ")":
                if not in_parens:
                    raise ZoneParseError("unbalanced ')'", lineno)
                in_parens = False
            else:
                current.tokens.append(token)
        if not in_parens:
            if current.tokens:
                entries.append(current)
            current = None
    if in_parens:
        raise ZoneParseError("unbalanced '(' never closed", current.line if current else 0)
    return entries


# ========================================
# Parser
# ========================================

class _ZoneBuilder:
    def __init__(self, origin: Optional[DomainName]):
        # origin qualifies relative names and moves with $ORIGIN; zone_origin is the apex
        self.origin = origin
        self.zone_origin = origin
        self.default_ttl: Optional[int] = None
        self.last_owner: Optional[DomainName] = None
        self.records: Dict[RecordKey, List[ResourceRecord]] = {}
        self.soa: Optional[ResourceRecord] = None
        self.soa_line = 0
        self.owner_lines: Dict[DomainName, int] = {}

    def name(self, token: _Token, line: int) -> DomainName:
        if token.quoted:
            raise ZoneParseError("quoted string where a name was expected", line)
        text = token.text
        if text == "@":
            if self.origin is None:
                raise ZoneParseError("'@' used before $ORIGIN", line)
            return self.origin
        if not text.endswith(".") and self.origin is None:
            raise ZoneParseError(f"relative name {text!r} without $ORIGIN", line)
        try:
            return DomainName.from_text(text, self.origin)
        except EncodingError as exc:
            raise ZoneParseError(str(exc), line) from exc

    def directive(self, entry: _Entry) -> None:
        keyword = entry.tokens[0].text.upper()
        args = entry.tokens[1:]
        if len(args) != 1:
            raise ZoneParseError(f"{keyword} takes exactly one argument", entry.line)
        if keyword == "$TTL":
            try:
                self.default_ttl = parse_ttl(args[0].text)
            except ValueError as exc:
                raise ZoneParseError(str(exc), entry.line) from exc
        elif keyword == "$ORIGIN":
            self.origin = self.name(args[0], entry.line)
            if self.zone_origin is None:
                self.zone_origin = self.origin
        else:
            raise ZoneParseError(f"unsupported directive {keyword}", entry.line)

    def record(self, entry: _Entry) -> None:
        tokens = entry.tokens
        line = entry.line
        if entry.blank_owner:
            if self.last_owner is None:
                raise ZoneParseError("blank owner with no previous owner", line)
            owner = self.last_owner
            index = 0
        else:
            owner = self.name(tokens[0], line)
            index = 1

        ttl: Optional[int] = None
        seen_class = False
        while index < len(tokens) and not tokens[index].quoted:
            text = tokens[index].text
            if ttl is None and _is_ttl(text):
                ttl = parse_ttl(text)
            elif not seen_class and text.upper() in ("IN", "CH", "HS", "CS"):
                if text.upper() != "IN":
                    raise ZoneParseError(f"unsupported class {text}", line)
                seen_class = True
            else:
                break
            index += 1
        if index >= len(tokens):
            raise ZoneParseError("missing record type", line)
        type_token = tokens[index]
        try:
            rtype = RRType.from_text(str(type_token.text))
        except ValueError:
            raise ZoneParseError(f"unknown type {type_token.text!r}", line) from None
        if rtype not in ZONE_TYPES:
            raise ZoneParseError(f"type {rtype.name} not allowed in a zone", line)

        if self.zone_origin is None and rtype is RRType.SOA:
            self.zone_origin = owner
        if self.zone_origin is not None and not owner.is_subdomain_of(self.zone_origin):
            raise ZoneParseError(f"owner {owner} outside zone {self.zone_origin}", line)

        rdata = self.rdata(rtype, tokens[index + 1:], line)
        if ttl is None:
            ttl = self.default_ttl
        if ttl is None and rtype is RRType.SOA:
            ttl = rdata.minimum
        if ttl is None and self.soa is not None:
            ttl = self.soa.rdata.minimum
        if ttl is None:
            raise ZoneParseError("record has no TTL and no $TTL is in effect", line)

        try:
            record = ResourceRecord(owner, rtype, ttl, rdata)
        except EncodingError as exc:
            raise ZoneParseError(str(exc), line) from exc
        if rtype is RRType.SOA:
            if self.soa is not None:
                raise ZoneParseError(f"second SOA record (first on line {self.soa_line})", line)
            self.soa = record
            self.soa_line = line
        self.records.setdefault((owner, rtype), []).append(record)
        self.owner_lines.setdefault(owner, line)
        self.last_owner = owner

    def rdata(self, rtype: RRType, fields: List[_Token], line: int):
        def expect(count: Tuple[int, ...]) -> None:
            if len(fields) not in count:
                raise ZoneParseError(f"{rtype.name} needs {' or '.join(map(str, count))} fields, got {len(fields)}", line)

        def number(token: _Token, limit: int = 0xFFFF) -> int:
            try:
                value = parse_ttl(str(token.text))
            except ValueError:
                raise ZoneParseError(f"expected a number, got {token.text!r}", line) from None
            if value > limit:
                raise ZoneParseError(f"value {value} exceeds {limit}", line)
            return value

        if rtype in (RRType.A, RRType.AAAA):
            expect((1,))
            try:
                if rtype is RRType.A:
                    return ipaddress.IPv4Address(str(fields[0].text))
                return ipaddress.IPv6Address(str(fields[0].text))
            except ValueError:
                raise ZoneParseError(f"malformed address {fields[0].text!r}", line) from None
        if rtype in (RRType.NS, RRType.CNAME, RRType.PTR):
            expect((1,))
            return self.name(fields[0], line)
        if rtype is RRType.MX:
            expect((1, 2))
            if len(fields) == 1:
                return MXData(0, self.name(fields[0], line))
            return MXData(number(fields[0]), self.name(fields[1], line))
        if rtype is RRType.SOA:
            expect((6, 7))
            mname = self.name(fields[0], line)
            rname = self.name(fields[1], line)
            serial = number(fields[2], limit=2**64 - 1)
            timers = [number(token, limit=2**32 - 1) for token in fields[3:]]
            if len(timers) == 3:
                if self.default_ttl is None:
                    raise ZoneParseError("SOA without minimum needs a preceding $TTL", line)
                timers.append(self.default_ttl)
            return SOAData(mname, rname, serial, *timers)
        if rtype is RRType.TXT:
            if not fields:
                raise ZoneParseError("TXT needs at least one string", line)
            strings = tuple(t.text if t.quoted else t.text.encode("utf-8") for t in fields)
            try:
                return TXTData(strings)
            except EncodingError as exc:
                raise ZoneParseError(str(exc), line) from exc
        if rtype is RRType.SRV:
            expect((4,))
            return SRVData(number(fields[0]), number(fields[1]), number(fields[2]), self.name(fields[3], line))
        raise ZoneParseError(f"unsupported type {rtype.name}", line)

    def build(self, last_line: int) -> ZoneConfig:
        if self.soa is None:
            raise ZoneParseError("missing SOA record", last_line)
        if self.soa.owner != self.zone_origin:
            raise ZoneParseError(f"SOA owner {self.soa.owner} is not the zone origin {self.zone_origin}", self.soa_line)
        for owner, line in self.owner_lines.items():
            if not owner.is_subdomain_of(self.zone_origin):
                raise ZoneParseError(f"owner {owner} outside zone {self.zone_origin}", line)
        default_ttl = self.default_ttl if self.default_ttl is not None else self.soa.rdata.minimum
        return ZoneConfig(
            origin=self.zone_origin,
            default_ttl=default_ttl,
            soa=self.soa,
            records={key: tuple(rrset) for key, rrset in self.records.items()},
        )


def parse_zone(text: str, origin: Optional[DomainName] = None) -> ZoneConfig:
    if not text.strip():
        raise ZoneParseError("empty zone text", 1)
    builder = _ZoneBuilder(origin)
    for entry in _logical_entries(text):
        first = entry.tokens[0]
        if not entry.blank_owner and not first.quoted and first.text.startswith("$"):
            builder.directive(entry)
        else:
            builder.record(entry)
    zone = builder.build(last_line=len(text.splitlines()))
    logger.debug(f"Parsed zone {zone.origin} with {len(zone)} records")
    return zone


def load_zone(path: Union[str, Path], origin: Optional[DomainName] = None) -> ZoneConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return parse_zone(text, origin)
    except ZoneParseError as exc:
        raise ZoneParseError(f"{path}: {exc.message}", exc.line) from exc


def render_zone(zone: ZoneConfig) -> str:
    """Canonical zone text; parse_zone(render_zone(z)) == z"""
    lines = [f"$ORIGIN {zone.origin.to_text()}", f"$TTL {zone.default_ttl}"]
    for record in zone.all_records():
        owner = record.owner.relative_to(zone.origin)
        lines.append(f"{owner}\t{record.ttl}\tIN\t{record.rtype.name}\t{rdata_to_text(record.rtype, record.rdata)}")
    return "\n".join(lines) + "\n"
