# scenario.py - Scenario files: INI-style parsing plus validated pydantic models
"""
Scenario file grammar:

    # full-line comments start with '#' or ';'
    [experiment]
    seed = 1
    duration = 300

    [topology]
    default_delay_ms = 1
    link = client-1 resolver-1 2.5          # repeatable

    [mdns]
    num_resolvers = 10
    num_private_resolvers = 10
    min_friends = 1
    max_friends = 3
    min_services = 3
    max_services = 6
    private_service_ratio = 0.5
    probe_interval = 0.25                   # any mDNS timing parameter

    [dns]
    server = root-1 auth 10.0.0.1 zones/root.zone
    server = resolver-1 caching 10.0.0.53 ttl 512
    root = a.root-servers.net. root-1
    client = client-1 10.0.1.10 resolver-1
    traffgen = client-1 queries/example_queries.txt 10 0.1

    [host printer-1]
    address = 10.2.0.1
    service = "Office Printer" _ipp._tcp 631 rp=queue1
    private_services = 1
    friends = laptop-1 phone-1

Keys may repeat only where marked repeatable. Values are validated by the
pydantic models below; paths are resolved against the scenario's directory.
"""

import logging
import shlex
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import EXPERIMENT_DEFAULTS, TRAFFGEN_DEFAULTS
from nodes.dns_server import ServerRole
from nodes.mdns_schedulers import MdnsParams

logger = logging.getLogger(__name__)

SECTIONS = ("experiment", "topology", "mdns", "dns")
REPEATABLE_KEYS = {
    "topology": ("link",),
    "dns": ("server", "root", "client", "traffgen"),
    "host": ("service",),
}
TIMING_KEYS = tuple(MdnsParams.__dataclass_fields__)


class ScenarioError(ValueError):
    """Scenario file or scenario values rejected; line is 1-based, 0 when unknown"""

    def __init__(self, message: str, line: int = 0, source: Optional[str] = None):
        where = f"{source}:" if source else ""
        where += f"{line}: " if line else (" " if source else "")
        super().__init__(f"{where}{message}")
        self.message = message
        self.line = line
        self.source = source


class UnknownParameterError(ValueError):
    """A sweep or override names a key no scenario section has"""


# ============= PYDANTIC SCHEMAS =============

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ExperimentSection(_Section):
    seed: int = EXPERIMENT_DEFAULTS["seed"]
    duration: float = Field(default=EXPERIMENT_DEFAULTS["duration"], ge=0)
    structure_seed: Optional[int] = None


class LinkSpec(_Section):
    a: str
    b: str
    delay_ms: float = Field(ge=0)


class TopologySection(_Section):
    default_delay_ms: Optional[float] = Field(default=EXPERIMENT_DEFAULTS["default_delay_ms"], ge=0)
    links: List[LinkSpec] = Field(default_factory=list)


class MdnsSection(_Section):
    num_resolvers: int = Field(default=0, ge=0)
    num_private_resolvers: int = Field(default=0, ge=0)
    min_friends: int = Field(default=0, ge=0)
    max_friends: int = Field(default=0, ge=0)
    min_services: int = Field(default=1, ge=0)
    max_services: int = Field(default=1, ge=0)
    private_service_ratio: float = Field(default=0.0, ge=0.0, le=1.0)
    privacy_extension: bool = True
    one_shot_query: Optional[str] = None
    one_shot_query_at: Optional[float] = Field(default=None, ge=0)
    timing: Dict[str, float] = Field(default_factory=dict)

    @field_validator("timing")
    @classmethod
    def check_timing(cls, v):
        MdnsParams.from_overrides(v)
        return v

    @model_validator(mode="after")
    def check_ranges(self):
        if self.num_private_resolvers > self.num_resolvers:
            raise ValueError(f"num_private_resolvers ({self.num_private_resolvers}) exceeds "
                             f"num_resolvers ({self.num_resolvers})")
        if self.min_friends > self.max_friends:
            raise ValueError(f"min_friends ({self.min_friends}) exceeds max_friends ({self.max_friends})")
        if self.min_services > self.max_services:
            raise ValueError(f"min_services ({self.min_services}) exceeds max_services ({self.max_services})")
        if (self.one_shot_query is None) != (self.one_shot_query_at is None):
            raise ValueError("one_shot_query and one_shot_query_at must be given together")
        return self

    def params(self) -> MdnsParams:
        return MdnsParams.from_overrides(self.timing)


class ServerSpec(_Section):
    node_id: str
    role: ServerRole
    address: str
    zone_file: Optional[str] = None
    cache_policy: Optional[str] = None
    cache_capacity: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_role(self):
        if self.role is ServerRole.AUTH and not self.zone_file:
            raise ValueError(f"auth server {self.node_id} needs a zone file")
        if self.cache_policy is not None and self.cache_policy not in ("ttl", "simple"):
            raise ValueError(f"unknown cache policy {self.cache_policy!r}")
        return self


class RootHintSpec(_Section):
    name: str
    node_id: str


class ClientSpec(_Section):
    node_id: str
    address: str
    server: str


class TraffGenSpec(_Section):
    client: str
    query_file: str
    period: float = Field(default=TRAFFGEN_DEFAULTS["period"], gt=0)
    jitter: float = Field(default=TRAFFGEN_DEFAULTS["jitter"], ge=0, lt=1)


class DnsSection(_Section):
    servers: List[ServerSpec] = Field(default_factory=list)
    roots: List[RootHintSpec] = Field(default_factory=list)
    clients: List[ClientSpec] = Field(default_factory=list)
    traffgens: List[TraffGenSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_references(self):
        server_ids = [s.node_id for s in self.servers]
        for root in self.roots:
            if root.node_id not in server_ids:
                raise ValueError(f"root hint {root.name} names unknown server {root.node_id}")
        for client in self.clients:
            if client.server not in server_ids:
                raise ValueError(f"client {client.node_id} uses unknown server {client.server}")
        client_ids = [c.node_id for c in self.clients]
        for gen in self.traffgens:
            if gen.client not in client_ids:
                raise ValueError(f"traffgen names unknown client {gen.client}")
        if any(s.role is ServerRole.CACHING for s in self.servers) and not self.roots:
            raise ValueError("caching servers need at least one root hint")
        return self


class ServiceSpec(_Section):
    instance: str
    service_type: str
    port: int = Field(ge=0, le=65535)
    txt: List[str] = Field(default_factory=list)


class HostSpec(_Section):
    node_id: str
    address: str
    services: List[ServiceSpec] = Field(default_factory=list)
    private_services: int = Field(default=0, ge=0)
    friends: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_private(self):
        if self.private_services > len(self.services):
            raise ValueError(f"host {self.node_id} marks {self.private_services} of "
                             f"{len(self.services)} services private")
        if self.node_id in self.friends:
            raise ValueError(f"host {self.node_id} lists itself as a friend")
        return self


class ScenarioConfig(_Section):
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    topology: TopologySection = Field(default_factory=TopologySection)
    mdns: MdnsSection = Field(default_factory=MdnsSection)
    dns: DnsSection = Field(default_factory=DnsSection)
    hosts: List[HostSpec] = Field(default_factory=list)
    base_dir: Optional[str] = None

    @model_validator(mode="after")
    def check_hosts(self):
        host_ids = [h.node_id for h in self.hosts]
        generated = [f"host-{i}" for i in range(self.mdns.num_resolvers)]
        known = host_ids + generated
        for host in self.hosts:
            for friend in host.friends:
                if friend not in known:
                    raise ValueError(f"host {host.node_id} lists unknown friend {friend}")
        return self

    @property
    def structure_seed(self) -> int:
        seed = self.experiment.structure_seed
        return self.experiment.seed if seed is None else seed

    def resolve_path(self, path: str) -> Path:
        candidate = Path(path)
        if candidate.is_absolute() or self.base_dir is None:
            return candidate
        return Path(self.base_dir) / candidate

    def with_overrides(self, overrides: Dict[str, Any]) -> "ScenarioConfig":
        """Copy with 'section.key' or bare-key overrides applied and re-validated"""
        data = self.model_dump()
        for dotted, value in overrides.items():
            section, key = _locate_parameter(dotted, data)
            if section == "mdns" and key in TIMING_KEYS:
                data["mdns"]["timing"][key] = value
            else:
                data[section][key] = value
        try:
            return ScenarioConfig.model_validate(data)
        except ValidationError as exc:
            raise ScenarioError(_describe_validation(exc)) from exc


def _locate_parameter(dotted: str, data: Dict[str, Any]) -> Tuple[str, str]:
    if "." in dotted:
        section, key = dotted.split(".", 1)
        if section in SECTIONS and (key in data[section] or (section == "mdns" and key in TIMING_KEYS)):
            return section, key
        raise UnknownParameterError(f"unknown scenario parameter {dotted!r}")
    for section in ("experiment", "mdns", "topology"):
        if dotted in data[section] and not isinstance(data[section][dotted], (list, dict)):
            return section, dotted
    if dotted in TIMING_KEYS:
        return "mdns", dotted
    raise UnknownParameterError(f"unknown scenario parameter {dotted!r}")


def is_known_parameter(name: str) -> bool:
    try:
        _locate_parameter(name, ScenarioConfig().model_dump())
        return True
    except UnknownParameterError:
        return False


def _describe_validation(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        location = ".".join(str(item) for item in error["loc"])
        parts.append(f"{location}: {error['msg']}" if location else error["msg"])
    return "; ".join(parts)


# ============= INI PARSING =============

Entry = Tuple[str, str, int]     # key, value, line


def _split_sections(text: str, source: Optional[str]) -> List[Tuple[str, Optional[str], int, List[Entry]]]:
    sections: List[Tuple[str, Optional[str], int, List[Entry]]] = []
    current: Optional[List[Entry]] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"unterminated section header {line!r}", lineno, source)
            header = line[1:-1].split()
            if not header:
                raise ScenarioError("empty section header", lineno, source)
            name = header[0].lower()
            if name == "host":
                if len(header) != 2:
                    raise ScenarioError("expected [host <node-id>]", lineno, source)
                argument = header[1]
            elif name in SECTIONS and len(header) == 1:
                argument = None
            else:
                raise ScenarioError(f"unknown section [{line[1:-1]}]", lineno, source)
            current = []
            sections.append((name, argument, lineno, current))
            continue
        if current is None:
            raise ScenarioError("key outside of any section", lineno, source)
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ScenarioError(f"expected 'key = value', got {line!r}", lineno, source)
        current.append((key.strip().lower(), value.strip(), lineno))
    return sections


def _tokens(value: str, line: int, source: Optional[str]) -> List[str]:
    try:
        return shlex.split(value, comments=True)
    except ValueError as exc:
        raise ScenarioError(f"cannot split {value!r}: {exc}", line, source) from exc


def _server(tokens: List[str]) -> Dict[str, Any]:
    if len(tokens) < 3:
        raise ValueError("expected '<node-id> <auth|caching|echo> <address> [zone-file] [ttl|simple <capacity>]'")
    spec: Dict[str, Any] = {"node_id": tokens[0], "role": tokens[1], "address": tokens[2]}
    rest = tokens[3:]
    if rest and rest[0] not in ("ttl", "simple"):
        spec["zone_file"] = rest.pop(0)
    if rest:
        spec["cache_policy"] = rest.pop(0)
        if rest:
            spec["cache_capacity"] = rest.pop(0)
    if rest:
        raise ValueError(f"unexpected trailing tokens {rest}")
    return spec


def _service(tokens: List[str]) -> Dict[str, Any]:
    if len(tokens) < 3:
        raise ValueError("expected '<instance> <type> <port> [k=v ...]'")
    return {"instance": tokens[0], "service_type": tokens[1], "port": tokens[2], "txt": tokens[3:]}


def parse_scenario_text(text: str, source: Optional[str] = None, base_dir: Optional[str] = None) -> ScenarioConfig:
    data: Dict[str, Any] = {"experiment": {}, "topology": {"links": []}, "mdns": {"timing": {}},
                            "dns": {"servers": [], "roots": [], "clients": [], "traffgens": []},
                            "hosts": [], "base_dir": base_dir}
    seen_sections: List[str] = []

    for name, argument, header_line, entries in _split_sections(text, source):
        if name != "host":
            if name in seen_sections:
                raise ScenarioError(f"duplicate section [{name}]", header_line, source)
            seen_sections.append(name)
            section = data[name]
        else:
            if any(h["node_id"] == argument for h in data["hosts"]):
                raise ScenarioError(f"duplicate host {argument}", header_line, source)
            section = {"node_id": argument, "services": []}
            data["hosts"].append(section)

        seen_keys: List[str] = []
        for key, value, line in entries:
            if key in seen_keys and key not in REPEATABLE_KEYS.get(name, ()):
                raise ScenarioError(f"duplicate key {key!r}", line, source)
            seen_keys.append(key)
            try:
                _apply_entry(name, section, key, value, line, source)
            except ScenarioError:
                raise
            except ValueError as exc:
                raise ScenarioError(str(exc), line, source) from exc

    try:
        config = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_describe_validation(exc), 0, source) from exc
    logger.debug(f"Loaded scenario {source or '<text>'}: {config.mdns.num_resolvers} generated hosts, "
                 f"{len(config.hosts)} explicit hosts, {len(config.dns.servers)} DNS servers")
    return config


def _apply_entry(name: str, section: Dict[str, Any], key: str, value: str, line: int,
                 source: Optional[str]) -> None:
    if name == "topology" and key == "link":
        tokens = _tokens(value, line, source)
        if len(tokens) != 3:
            raise ValueError("expected 'link = <a> <b> <delay-ms>'")
        section["links"].append({"a": tokens[0], "b": tokens[1], "delay_ms": tokens[2]})
    elif name == "dns":
        tokens = _tokens(value, line, source)
        if key == "server":
            section["servers"].append(_server(tokens))
        elif key == "root":
            if len(tokens) != 2:
                raise ValueError("expected 'root = <name> <node-id>'")
            section["roots"].append({"name": tokens[0], "node_id": tokens[1]})
        elif key == "client":
            if len(tokens) != 3:
                raise ValueError("expected 'client = <node-id> <address> <server-node-id>'")
            section["clients"].append({"node_id": tokens[0], "address": tokens[1], "server": tokens[2]})
        elif key == "traffgen":
            if not 2 <= len(tokens) <= 4:
                raise ValueError("expected 'traffgen = <client-id> <query-file> [period] [jitter]'")
            spec = dict(zip(("client", "query_file", "period", "jitter"), tokens))
            section["traffgens"].append(spec)
        else:
            raise ValueError(f"unknown key {key!r} in [dns]")
    elif name == "host":
        if key == "service":
            section["services"].append(_service(_tokens(value, line, source)))
        elif key == "friends":
            section["friends"] = _tokens(value.replace(",", " "), line, source)
        elif key in ("address", "private_services"):
            section[key] = value
        else:
            raise ValueError(f"unknown key {key!r} in [host]")
    elif name == "mdns" and key in TIMING_KEYS:
        section["timing"][key] = value
    else:
        section[key] = value


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", 0, str(path)) from exc
    return parse_scenario_text(text, source=str(path), base_dir=str(path.parent))
