# config.py - simnet defaults for the DNS / mDNS network simulator
# Scenario files override most of these; the values here are what a scenario
# gets when it leaves a key out.

# ========================================
# TIME
# ========================================
NS_PER_SECOND = 1_000_000_000
NS_PER_MS = 1_000_000

# ========================================
# DNS
# ========================================
DNS_PORT = 53
DNS_QUERY_TIMEOUT_SECONDS = 1.0   # per upstream / client query attempt
DNS_QUERY_RETRIES = 2             # retries after the first attempt, then SERVFAIL / timeout
CNAME_CHASE_LIMIT = 8             # terminates CNAME loops
ECHO_RECORD_TTL = 604800          # echo answers are meant to stay in downstream caches (1 week)
ECHO_MARKER_LABEL = b"00"
CCA_MARKER_LABEL = b"cca"

# Query types an authoritative server answers; everything else gets NOTIMP
AUTH_SUPPORTED_QTYPES = ("A", "AAAA", "NS", "MX", "CNAME", "ANY")

CACHE_DEFAULTS = {
    "policy": "ttl",        # "ttl" evicts the earliest expiry, "simple" evicts at random
    "capacity": 1024,
}

TRAFFGEN_DEFAULTS = {
    "period": 10.0,         # seconds between generated queries
    "jitter": 0.1,          # next tick at period * (1 +/- jitter)
}

# ========================================
# mDNS / DNS-SD
# ========================================
MDNS_PORT = 5353
MDNS_GROUP = "mdns"                  # multicast group id on the simulated link
MDNS_GROUP_ADDRESS = "224.0.0.251"
MDNS_DOMAIN = "local"

MDNS_TIMING = {
    "probe_count": 3,
    "probe_interval": 0.250,            # seconds between probe rounds
    "probe_initial_delay_max": 0.250,   # first probe waits uniform 0..this
    "probe_window": 0.250,              # max time a non-immediate probe sits in the scheduler
    "announce_count": 2,
    "announce_interval": 1.0,
    "reannounce_interval": 60.0,
    "response_delay_min": 0.020,
    "response_delay_max": 0.120,
    "query_delay_min": 0.020,
    "query_delay_max": 0.120,
    "duplicate_question_window": 1.0,
    "known_answer_threshold": 0.5,      # fraction of the original TTL still remaining
    "max_renames": 16,
    "host_ttl": 120,                    # A and SRV (records naming the host)
    "service_ttl": 4500,                # PTR and TXT
}

# Service types handed out by the network configurator, cycled per host
MDNS_SERVICE_TYPES = [
    "_http._tcp",
    "_ipp._tcp",
    "_ssh._tcp",
    "_smb._tcp",
]

# ========================================
# PRIVACY EXTENSION
# ========================================
PRIVATE_CHANNEL_PORT = 5354
META_SERVICE_TYPE = "_privacy._udp"
PAIRING_ID_BYTES = 8

# ========================================
# EXPERIMENTS
# ========================================
EXPERIMENT_DEFAULTS = {
    "seed": 1,
    "duration": 300.0,          # simulated seconds
    "default_delay_ms": 1.0,    # shared-link delay when no explicit link is declared
}

HOST_ADDRESS_PREFIX = "10.1"    # generated mDNS hosts get 10.1.x.y

CSV_COLUMNS = [
    "param_value", "node_id",
    "mcast_bytes", "ucast_bytes", "total_bytes",
    "mcast_packets", "ucast_packets",
    "queries_sent", "responses_sent", "probes_sent", "announcements_sent",
    "cache_hits", "cache_misses",
    "suppressed_queries", "suppressed_responses",
    "dropped_packets",
]
AGGREGATE_NODE_ID = "ALL"

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCENARIO = 2
EXIT_RUNTIME = 3

# ========================================
# LOGGING
# ========================================
LOGGING_CONFIG = {
    "log_dir": "logs",
    "log_level": "INFO",
    "max_log_size_mb": 20,      # JSON log rotation size
    "backup_count": 3,
    "console_format": "%(levelname)s - %(message)s",
}


def seconds_to_ns(seconds: float) -> int:
    """Convert simulated seconds to integer nanoseconds"""
    return int(round(seconds * NS_PER_SECOND))


def ms_to_ns(milliseconds: float) -> int:
    """Convert simulated milliseconds to integer nanoseconds"""
    return int(round(milliseconds * NS_PER_MS))
