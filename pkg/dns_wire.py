# dns_wire.py - DNS message model with RFC 1035 serializer, parser and name compression
"""
DNS message data model and wire codec.

Architecture:
- DomainName: immutable label tuple, ASCII case-insensitive equality
- ResourceRecord / DnsQuestion / DnsMessage: the four-section DNS packet
- serialize_message / parse_message: bit-exact RFC 1035 layout
- message_wire_size: the byte count charged to simulated links, computed
  through the same writer as serialize_message without building the bytes

Compression:
- owner names are always eligible
- RDATA names are eligible for NS, CNAME, PTR, MX and SOA only
- SRV targets and TXT data are never compressed
- only offsets below 0x4000 are registered as pointer targets
"""

import ipaddress
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum
from itertools import chain
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

HEADER_SIZE = 12
MAX_LABEL_LENGTH = 63
MAX_NAME_LENGTH = 255
MAX_MESSAGE_SIZE = 65535
MAX_TTL = 2**31 - 1
POINTER_LIMIT = 0x4000
CACHE_FLUSH_BIT = 0x8000


class WireError(ValueError):
    """Base class for DNS encoding and parsing errors"""


class EncodingError(WireError):
    """A value cannot be represented on the wire"""


class MessageSizeError(WireError):
    """Serialized message would exceed 65535 bytes"""


class ParseError(WireError):
    """Malformed wire data; offset points at the offending byte"""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class RRType(IntEnum):
    A = 1
    NS = 2
    CNAME = 5
    SOA = 6
    PTR = 12
    MX = 15
    TXT = 16
    AAAA = 28
    SRV = 33
    ANY = 255

    @classmethod
    def from_text(cls, token: str) -> "RRType":
        try:
            return cls[token.upper()]
        except KeyError:
            raise ValueError(f"unknown record type {token!r}") from None


class RRClass(IntEnum):
    IN = 1


class Rcode(IntEnum):
    NOERROR = 0
    FORMERR = 1
    SERVFAIL = 2
    NXDOMAIN = 3
    NOTIMP = 4


NAME_COMPRESSIBLE_TYPES = frozenset({RRType.NS, RRType.CNAME, RRType.PTR, RRType.MX, RRType.SOA})


# ========================================
# Names
# ========================================

@dataclass(frozen=True, eq=False)
class DomainName:
    """Absolute domain name as a tuple of raw label bytes (root = empty tuple)."""
    labels: Tuple[bytes, ...] = ()

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        for label in labels:
            if not isinstance(label, bytes):
                raise EncodingError(f"label {label!r} is not a byte string")
            if not 1 <= len(label) <= MAX_LABEL_LENGTH:
                raise EncodingError(f"label length {len(label)} outside 1..{MAX_LABEL_LENGTH}")
        if self.wire_length > MAX_NAME_LENGTH:
            raise EncodingError(f"name is {self.wire_length} octets on the wire, limit {MAX_NAME_LENGTH}")

    @classmethod
    def from_text(cls, text: str, origin: Optional["DomainName"] = None) -> "DomainName":
        """Parse dotted text; names without a trailing dot are made relative to origin"""
        text = text.strip()
        if text in ("", "."):
            return cls(())
        absolute = text.endswith(".")
        body = text[:-1] if absolute else text
        parts = body.split(".")
        if any(part == "" for part in parts):
            raise EncodingError(f"empty label in {text!r}")
        labels = tuple(part.encode("utf-8") for part in parts)
        if not absolute and origin is not None:
            labels += origin.labels
        return cls(labels)

    @property
    def wire_length(self) -> int:
        return sum(len(label) + 1 for label in self.labels) + 1

    @property
    def key(self) -> Tuple[bytes, ...]:
        return tuple(label.lower() for label in self.labels)

    def __eq__(self, other):
        if not isinstance(other, DomainName):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"DomainName({self.to_text()!r})"

    def __str__(self):
        return self.to_text()

    def to_text(self) -> str:
        if not self.labels:
            return "."
        return ".".join(label.decode("utf-8", "backslashreplace") for label in self.labels) + "."

    def is_root(self) -> bool:
        return not self.labels

    def is_subdomain_of(self, other: "DomainName") -> bool:
        """True when self equals other or lies below it"""
        depth = len(other.labels)
        if depth > len(self.labels):
            return False
        return self.key[len(self.labels) - depth:] == other.key

    def parent(self) -> "DomainName":
        return DomainName(self.labels[1:])

    def child(self, label: Union[str, bytes]) -> "DomainName":
        if isinstance(label, str):
            label = label.encode("utf-8")
        return DomainName((label,) + self.labels)

    def ancestors(self) -> Iterator["DomainName"]:
        """self, its parent, ... down to the root"""
        for i in range(len(self.labels) + 1):
            yield DomainName(self.labels[i:])

    def relative_to(self, origin: "DomainName") -> str:
        """Zone-file form: '@' for the origin, relative text below it, absolute otherwise"""
        if self == origin:
            return "@"
        if self.is_subdomain_of(origin) and not origin.is_root():
            keep = len(self.labels) - len(origin.labels)
            return ".".join(label.decode("utf-8", "backslashreplace") for label in self.labels[:keep])
        return self.to_text()

    def sort_key(self) -> Tuple[bytes, ...]:
        """Canonical DNS order: compare from the rightmost label"""
        return tuple(reversed(self.key))


ROOT = DomainName(())


# ========================================
# RDATA payloads
# ========================================

@dataclass(frozen=True)
class MXData:
    preference: int
    exchange: DomainName


@dataclass(frozen=True)
class SOAData:
    mname: DomainName
    rname: DomainName
    serial: int        # 64-bit in the model, truncated mod 2^32 on the wire
    refresh: int
    retry: int
    expire: int
    minimum: int


@dataclass(frozen=True)
class TXTData:
    strings: Tuple[bytes, ...] = ()

    def __post_init__(self):
        strings = tuple(self.strings)
        object.__setattr__(self, "strings", strings)
        for item in strings:
            if len(item) > 255:
                raise EncodingError(f"TXT string of {len(item)} bytes exceeds 255")

    @classmethod
    def from_strings(cls, *values: str) -> "TXTData":
        return cls(tuple(value.encode("utf-8") for value in values))

    def as_text(self) -> List[str]:
        return [item.decode("utf-8", "replace") for item in self.strings]


@dataclass(frozen=True)
class SRVData:
    priority: int
    weight: int
    port: int
    target: DomainName


Rdata = Union[ipaddress.IPv4Address, ipaddress.IPv6Address, DomainName, MXData, SOAData, TXTData, SRVData]

RDATA_TYPES = {
    RRType.A: ipaddress.IPv4Address,
    RRType.AAAA: ipaddress.IPv6Address,
    RRType.NS: DomainName,
    RRType.CNAME: DomainName,
    RRType.PTR: DomainName,
    RRType.MX: MXData,
    RRType.SOA: SOAData,
    RRType.TXT: TXTData,
    RRType.SRV: SRVData,
}


# ========================================
# Records and messages
# ========================================

@dataclass(frozen=True)
class ResourceRecord:
    owner: DomainName
    rtype: RRType
    ttl: int
    rdata: Rdata
    rclass: RRClass = RRClass.IN
    cache_flush: bool = False   # mDNS unique record marker (top bit of the class)

    def __post_init__(self):
        rtype = RRType(self.rtype)
        object.__setattr__(self, "rtype", rtype)
        if rtype is RRType.ANY:
            raise EncodingError("records cannot carry type ANY")
        expected = RDATA_TYPES[rtype]
        if not isinstance(self.rdata, expected):
            raise EncodingError(f"{rtype.name} record needs {expected.__name__} rdata, got {type(self.rdata).__name__}")
        if self.ttl < 0:
            raise EncodingError(f"negative ttl {self.ttl}")

    def same_data(self, other: "ResourceRecord") -> bool:
        """Same owner, type and rdata; TTL and cache-flush flag ignored"""
        return self.owner == other.owner and self.rtype == other.rtype and self.rdata == other.rdata

    def with_ttl(self, ttl: int) -> "ResourceRecord":
        return replace(self, ttl=ttl)

    def to_text(self) -> str:
        return f"{self.owner.to_text()} {self.ttl} IN {self.rtype.name} {rdata_to_text(self.rtype, self.rdata)}"


@dataclass(frozen=True)
class DnsQuestion:
    qname: DomainName
    qtype: RRType
    qclass: RRClass = RRClass.IN

    def __post_init__(self):
        object.__setattr__(self, "qtype", RRType(self.qtype))

    def matches(self, record: ResourceRecord) -> bool:
        return record.owner == self.qname and (self.qtype is RRType.ANY or record.rtype == self.qtype)


@dataclass(frozen=True)
class DnsFlags:
    qr: bool = False
    opcode: int = 0
    aa: bool = False
    tc: bool = False
    rd: bool = False
    ra: bool = False
    rcode: Rcode = Rcode.NOERROR

    def to_int(self) -> int:
        return ((0x8000 if self.qr else 0)
                | ((self.opcode & 0xF) << 11)
                | (0x0400 if self.aa else 0)
                | (0x0200 if self.tc else 0)
                | (0x0100 if self.rd else 0)
                | (0x0080 if self.ra else 0)
                | (int(self.rcode) & 0xF))


@dataclass
class DnsMessage:
    id: int = 0
    flags: DnsFlags = field(default_factory=DnsFlags)
    questions: List[DnsQuestion] = field(default_factory=list)
    answers: List[ResourceRecord] = field(default_factory=list)
    authorities: List[ResourceRecord] = field(default_factory=list)
    additionals: List[ResourceRecord] = field(default_factory=list)

    @property
    def is_response(self) -> bool:
        return self.flags.qr

    @property
    def rcode(self) -> Rcode:
        return self.flags.rcode

    def records(self) -> Iterator[ResourceRecord]:
        return chain(self.answers, self.authorities, self.additionals)

    def names(self) -> List[DomainName]:
        """Every domain name carried by the message, including RDATA names"""
        found = [q.qname for q in self.questions]
        for record in self.records():
            found.append(record.owner)
            found.extend(_rdata_names(record))
        return found


def make_response(query: DnsMessage, rcode: Rcode = Rcode.NOERROR, *, aa: bool = False, ra: bool = False,
                  answers: Sequence[ResourceRecord] = (), authorities: Sequence[ResourceRecord] = (),
                  additionals: Sequence[ResourceRecord] = ()) -> DnsMessage:
    """Response echoing the query id, opcode, RD bit and question section"""
    flags = DnsFlags(qr=True, opcode=query.flags.opcode, aa=aa, rd=query.flags.rd, ra=ra, rcode=rcode)
    return DnsMessage(
        id=query.id,
        flags=flags,
        questions=list(query.questions),
        answers=list(answers),
        authorities=list(authorities),
        additionals=list(additionals),
    )


def _rdata_names(record: ResourceRecord) -> List[DomainName]:
    rdata = record.rdata
    if isinstance(rdata, DomainName):
        return [rdata]
    if isinstance(rdata, MXData):
        return [rdata.exchange]
    if isinstance(rdata, SOAData):
        return [rdata.mname, rdata.rname]
    if isinstance(rdata, SRVData):
        return [rdata.target]
    return []


# ========================================
# Text form
# ========================================

def _quote_txt(item: bytes) -> str:
    out = []
    for byte in item:
        char = chr(byte)
        if char in '"\\':
            out.append("\\" + char)
        elif 0x20 <= byte < 0x7F:
            out.append(char)
        else:
            out.append(f"\\{byte:03d}")
    return '"' + "".join(out) + '"'


def rdata_to_text(rtype: RRType, rdata: Rdata) -> str:
    if rtype in (RRType.A, RRType.AAAA):
        return str(rdata)
    if isinstance(rdata, DomainName):
        return rdata.to_text()
    if isinstance(rdata, MXData):
        return f"{rdata.preference} {rdata.exchange.to_text()}"
    if isinstance(rdata, SOAData):
        return (f"{rdata.mname.to_text()} {rdata.rname.to_text()} {rdata.serial} "
                f"{rdata.refresh} {rdata.retry} {rdata.expire} {rdata.minimum}")
    if isinstance(rdata, TXTData):
        return " ".join(_quote_txt(item) for item in rdata.strings)
    if isinstance(rdata, SRVData):
        return f"{rdata.priority} {rdata.weight} {rdata.port} {rdata.target.to_text()}"
    raise EncodingError(f"no text form for {rtype.name}")


# ========================================
# Serializer
# ========================================

class _ByteCounter:
    """Byte sink that only counts what would be written"""

    def __init__(self):
        self._length = 0

    def __len__(self):
        return self._length

    def extend(self, data: bytes) -> None:
        self._length += len(data)

    def append(self, _byte: int) -> None:
        self._length += 1


ByteSink = Union[bytearray, _ByteCounter]


def encode_name(name: DomainName, stream: ByteSink, offsets: Dict[Tuple[bytes, ...], int],
                allow_compression: bool = True) -> int:
    """
    Append name to stream, returning the number of bytes written.

    offsets maps already-emitted label suffixes to their stream offsets; every
    suffix this call emits below 0x4000 is registered there. With
    allow_compression the first known suffix is replaced by a pointer.
    """
    if name.wire_length > MAX_NAME_LENGTH:
        raise EncodingError(f"name {name} exceeds {MAX_NAME_LENGTH} octets")
    start = len(stream)
    labels = name.labels
    for i, label in enumerate(labels):
        suffix = labels[i:]
        if allow_compression:
            pointer = offsets.get(suffix)
            if pointer is not None:
                stream.extend(struct.pack("!H", 0xC000 | pointer))
                return len(stream) - start
        position = len(stream)
        if position < POINTER_LIMIT and suffix not in offsets:
            offsets[suffix] = position
        stream.append(len(label))
        stream.extend(label)
    stream.append(0)
    return len(stream) - start


def _write_rdata(record: ResourceRecord, stream: ByteSink, offsets: Dict[Tuple[bytes, ...], int],
                 compress: bool) -> None:
    rdata = record.rdata
    compress = compress and record.rtype in NAME_COMPRESSIBLE_TYPES
    if record.rtype in (RRType.A, RRType.AAAA):
        stream.extend(rdata.packed)
    elif isinstance(rdata, DomainName):
        encode_name(rdata, stream, offsets, compress)
    elif isinstance(rdata, MXData):
        stream.extend(struct.pack("!H", rdata.preference))
        encode_name(rdata.exchange, stream, offsets, compress)
    elif isinstance(rdata, SOAData):
        encode_name(rdata.mname, stream, offsets, compress)
        encode_name(rdata.rname, stream, offsets, compress)
        stream.extend(struct.pack("!IIIII", rdata.serial % 2**32, rdata.refresh, rdata.retry,
                                  rdata.expire, rdata.minimum))
    elif isinstance(rdata, TXTData):
        for item in rdata.strings:
            stream.append(len(item))
            stream.extend(item)
    elif isinstance(rdata, SRVData):
        stream.extend(struct.pack("!HHH", rdata.priority, rdata.weight, rdata.port))
        encode_name(rdata.target, stream, offsets, False)


def _write_record(record: ResourceRecord, stream: ByteSink, offsets: Dict[Tuple[bytes, ...], int],
                  compress: bool) -> None:
    if record.ttl > MAX_TTL:
        raise EncodingError(f"ttl {record.ttl} exceeds {MAX_TTL}")
    encode_name(record.owner, stream, offsets, compress)
    rclass = int(record.rclass) | (CACHE_FLUSH_BIT if record.cache_flush else 0)
    stream.extend(struct.pack("!HHI", record.rtype, rclass, record.ttl))
    length_at = len(stream)
    stream.extend(b"\x00\x00")
    _write_rdata(record, stream, offsets, compress)
    rdlength = len(stream) - length_at - 2
    if rdlength > 0xFFFF:
        raise MessageSizeError(f"RDATA of {rdlength} bytes for {record.owner}")
    if isinstance(stream, bytearray):
        stream[length_at:length_at + 2] = struct.pack("!H", rdlength)


def _write_message(msg: DnsMessage, stream: ByteSink, compress: bool) -> None:
    sections = (msg.questions, msg.answers, msg.authorities, msg.additionals)
    if any(len(section) > 0xFFFF for section in sections):
        raise MessageSizeError("section count exceeds 65535")
    try:
        stream.extend(struct.pack("!HHHHHH", msg.id, msg.flags.to_int(), *(len(s) for s in sections)))
        offsets: Dict[Tuple[bytes, ...], int] = {}
        for question in msg.questions:
            encode_name(question.qname, stream, offsets, compress)
            stream.extend(struct.pack("!HH", question.qtype, question.qclass))
        for record in msg.records():
            _write_record(record, stream, offsets, compress)
    except struct.error as exc:
        raise EncodingError(str(exc)) from exc
    if len(stream) > MAX_MESSAGE_SIZE:
        raise MessageSizeError(f"message of {len(stream)} bytes exceeds {MAX_MESSAGE_SIZE}")


def serialize_message(msg: DnsMessage, compress: bool = True) -> bytes:
    stream = bytearray()
    _write_message(msg, stream, compress)
    return bytes(stream)


def message_wire_size(msg: DnsMessage, compress: bool = True) -> int:
    counter = _ByteCounter()
    _write_message(msg, counter, compress)
    return len(counter)


def encode_rdata(record: ResourceRecord) -> bytes:
    """Uncompressed RDATA bytes of a single record"""
    stream = bytearray()
    try:
        _write_rdata(record, stream, {}, False)
    except struct.error as exc:
        raise EncodingError(str(exc)) from exc
    return bytes(stream)


# ========================================
# Parser
# ========================================

class _WireReader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise ParseError("truncated message", self.pos)
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def name(self) -> DomainName:
        data = self.data
        labels: List[bytes] = []
        pos = self.pos
        floor: Optional[int] = None
        jumped = False
        wire_length = 1
        while True:
            if pos >= len(data):
                raise ParseError("truncated name", pos)
            length = data[pos]
            kind = length & 0xC0
            if kind == 0xC0:
                if pos + 1 >= len(data):
                    raise ParseError("truncated compression pointer", pos)
                target = ((length & 0x3F) << 8) | data[pos + 1]
                limit = pos if floor is None else floor
                if target >= limit:
                    raise ParseError("compression pointer loop or forward reference", pos)
                floor = target
                if not jumped:
                    self.pos = pos + 2
                    jumped = True
                pos = target
                continue
            if kind:
                raise ParseError("label length exceeds 63", pos)
            if length == 0:
                if not jumped:
                    self.pos = pos + 1
                break
            end = pos + 1 + length
            if end > len(data):
                raise ParseError("truncated label", pos)
            wire_length += length + 1
            if wire_length > MAX_NAME_LENGTH:
                raise ParseError(f"name exceeds {MAX_NAME_LENGTH} octets", pos)
            labels.append(bytes(data[pos + 1:end]))
            pos = end
        return DomainName(tuple(labels))

    def rrtype(self, offset: int) -> RRType:
        (code,) = self.unpack("!H")
        try:
            return RRType(code)
        except ValueError:
            raise ParseError(f"unknown record type {code}", offset) from None

    def question(self) -> DnsQuestion:
        qname = self.name()
        type_at = self.pos
        qtype = self.rrtype(type_at)
        (qclass,) = self.unpack("!H")
        if qclass & 0x7FFF != RRClass.IN:
            raise ParseError(f"unsupported class {qclass}", type_at + 2)
        return DnsQuestion(qname, qtype)

    def record(self) -> ResourceRecord:
        owner = self.name()
        type_at = self.pos
        rtype = self.rrtype(type_at)
        if rtype is RRType.ANY:
            raise ParseError("record of type ANY", type_at)
        rclass, ttl, rdlength = self.unpack("!HIH")
        if rclass & 0x7FFF != RRClass.IN:
            raise ParseError(f"unsupported class {rclass}", type_at + 2)
        if ttl > MAX_TTL:
            raise ParseError(f"ttl {ttl} exceeds {MAX_TTL}", type_at + 4)
        start = self.pos
        end = start + rdlength
        if end > len(self.data):
            raise ParseError("truncated RDATA", start)
        try:
            rdata = self._rdata(rtype, end)
        except EncodingError as exc:
            raise ParseError(str(exc), start) from exc
        if self.pos != end:
            raise ParseError(f"RDATA length mismatch for {rtype.name}", start)
        return ResourceRecord(owner, rtype, ttl, rdata, cache_flush=bool(rclass & CACHE_FLUSH_BIT))

    def _rdata(self, rtype: RRType, end: int) -> Rdata:
        if rtype is RRType.A:
            return ipaddress.IPv4Address(self.take(4))
        if rtype is RRType.AAAA:
            return ipaddress.IPv6Address(self.take(16))
        if rtype in (RRType.NS, RRType.CNAME, RRType.PTR):
            return self.name()
        if rtype is RRType.MX:
            (preference,) = self.unpack("!H")
            return MXData(preference, self.name())
        if rtype is RRType.SOA:
            mname = self.name()
            rname = self.name()
            return SOAData(mname, rname, *self.unpack("!IIIII"))
        if rtype is RRType.TXT:
            strings = []
            while self.pos < end:
                (length,) = self.unpack("!B")
                strings.append(self.take(length))
            return TXTData(tuple(strings))
        if rtype is RRType.SRV:
            priority, weight, port = self.unpack("!HHH")
            return SRVData(priority, weight, port, self.name())
        raise ParseError(f"unsupported record type {rtype.name}", self.pos)


def parse_message(wire: bytes) -> DnsMessage:
    if len(wire) < HEADER_SIZE:
        raise ParseError("message shorter than the 12-byte header", len(wire))
    reader = _WireReader(bytes(wire))
    msg_id, bits, qdcount, ancount, nscount, arcount = reader.unpack("!HHHHHH")
    try:
        rcode = Rcode(bits & 0xF)
    except ValueError:
        raise ParseError(f"unsupported rcode {bits & 0xF}", 3) from None
    flags = DnsFlags(
        qr=bool(bits & 0x8000),
        opcode=(bits >> 11) & 0xF,
        aa=bool(bits & 0x0400),
        tc=bool(bits & 0x0200),
        rd=bool(bits & 0x0100),
        ra=bool(bits & 0x0080),
        rcode=rcode,
    )
    questions = [reader.question() for _ in range(qdcount)]
    answers = [reader.record() for _ in range(ancount)]
    authorities = [reader.record() for _ in range(nscount)]
    additionals = [reader.record() for _ in range(arcount)]
    return DnsMessage(msg_id, flags, questions, answers, authorities, additionals)
