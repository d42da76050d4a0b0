"""
Packet records and bidirectional flow assembly.

Packets are grouped by canonical 5-tuple into sessions. The forward
direction of a session is whoever sent its first packet. TCP sessions close
once both sides have sent FIN, or on RST; every session closes after
``idle_timeout`` seconds of silence or at the end of the stream.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17
# ARP is not an IP protocol; its ethertype is used as an out-of-band tag.
PROTO_ARP = 0x0806

PROTO_NAMES = {
    PROTO_ICMP: "ICMP",
    PROTO_TCP: "TCP",
    PROTO_UDP: "UDP",
    PROTO_ARP: "ARP",
}
_NAME_TO_PROTO = {name.lower(): num for num, name in PROTO_NAMES.items()}
PORTLESS_PROTOCOLS = frozenset({PROTO_ICMP, PROTO_ARP})

FIN, SYN, RST, PSH, ACK, URG, ECE, CWR = (1 << i for i in range(8))

PACKET_COLUMNS = (
    "ts", "src_ip", "dst_ip", "src_port", "dst_port", "proto", "ip_len",
    "payload_len", "ttl", "tcp_flags", "tcp_window", "tcp_seq", "tcp_ack",
)

DEFAULT_IDLE_TIMEOUT = 64.0
# Capture-file jitter below this is reordered silently; anything larger is rejected.
TS_REGRESSION_TOLERANCE_US = 1_000


class MalformedRecordError(ValueError):
    """A packet record failed validation. ``index`` is its 0-based position."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"record {index}: {reason}")
        self.index = index
        self.reason = reason


class PacketFileError(ValueError):
    """A packet file could not be parsed. ``line`` is 1-based, header included."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


@dataclass(frozen=True)
class PacketRecord:
    ts: float
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    proto: int
    ip_len: int
    payload_len: int
    ttl: int
    tcp_flags: int = 0
    tcp_window: int = 0
    tcp_seq: int = 0
    tcp_ack: int = 0

    @property
    def ts_us(self) -> int:
        # Integer microseconds keep time differences exact under translation.
        return round(self.ts * 1_000_000)

    @property
    def src(self) -> tuple[str, int]:
        return (self.src_ip, self.src_port)

    @property
    def dst(self) -> tuple[str, int]:
        return (self.dst_ip, self.dst_port)

    def has_flags(self, mask: int) -> bool:
        return self.tcp_flags & mask == mask

    def flipped(self) -> PacketRecord:
        """Same packet with source and destination exchanged."""
        return PacketRecord(
            self.ts, self.dst_ip, self.src_ip, self.dst_port, self.src_port,
            self.proto, self.ip_len, self.payload_len, self.ttl,
            self.tcp_flags, self.tcp_window, self.tcp_seq, self.tcp_ack,
        )

    def shifted(self, seconds: float) -> PacketRecord:
        return PacketRecord(
            self.ts + seconds, self.src_ip, self.dst_ip, self.src_port,
            self.dst_port, self.proto, self.ip_len, self.payload_len, self.ttl,
            self.tcp_flags, self.tcp_window, self.tcp_seq, self.tcp_ack,
        )

    def problems(self) -> list[str]:
        """Return a list of invariant violations (empty when valid)."""
        out = []
        if not self.ts >= 0:
            out.append(f"ts must be >= 0, got {self.ts}")
        if self.ip_len < 0 or self.payload_len < 0:
            out.append("negative length")
        elif self.payload_len > self.ip_len:
            out.append(f"payload_len {self.payload_len} exceeds ip_len {self.ip_len}")
        if not 0 <= self.ttl <= 255:
            out.append(f"ttl {self.ttl} outside 0..255")
        for name in ("src_port", "dst_port"):
            port = getattr(self, name)
            if not 0 <= port <= 65535:
                out.append(f"{name} {port} outside 0..65535")
        if self.proto in PORTLESS_PROTOCOLS:
            if self.src_port or self.dst_port:
                out.append(f"portless protocol {self.proto} with nonzero ports")
        elif self.src_port == 0 or self.dst_port == 0:
            out.append(f"protocol {self.proto} requires nonzero ports")
        if not 0 <= self.tcp_flags <= 0xFF:
            out.append(f"tcp_flags {self.tcp_flags} outside 8-bit range")
        if self.proto != PROTO_TCP and (
            self.tcp_flags or self.tcp_window or self.tcp_seq or self.tcp_ack
        ):
            out.append("TCP header fields set on a non-TCP packet")
        for name in ("tcp_seq", "tcp_ack"):
            if not 0 <= getattr(self, name) < 2**32:
                out.append(f"{name} outside 32-bit range")
        if self.tcp_window < 0:
            out.append("negative tcp_window")
        return out


@dataclass(frozen=True, order=True)
class FlowKey:
    """Canonical 5-tuple: the smaller ``(ip, port)`` endpoint comes first."""

    a_ip: str
    a_port: int
    b_ip: str
    b_port: int
    proto: int

    @classmethod
    def of(cls, pkt: PacketRecord) -> FlowKey:
        lo, hi = sorted((pkt.src, pkt.dst))
        return cls(lo[0], lo[1], hi[0], hi[1], pkt.proto)


@dataclass(frozen=True)
class FlowSession:
    key: FlowKey
    initiator: tuple[str, int]
    fwd_packets: tuple[PacketRecord, ...]
    bwd_packets: tuple[PacketRecord, ...]
    state: str = "closed"
    close_reason: str | None = None

    @property
    def packets(self) -> list[PacketRecord]:
        """All packets in time order (forward first on equal timestamps)."""
        return sorted(self.fwd_packets + self.bwd_packets, key=lambda p: p.ts_us)

    @property
    def first_ts(self) -> float:
        return min(p.ts_us for p in self.fwd_packets + self.bwd_packets) / 1e6

    @property
    def last_ts(self) -> float:
        return max(p.ts_us for p in self.fwd_packets + self.bwd_packets) / 1e6

    @property
    def n_packets(self) -> int:
        return len(self.fwd_packets) + len(self.bwd_packets)

    def swapped(self) -> FlowSession:
        """Session with the direction labels exchanged (no validation)."""
        responder = (self.key.b_ip, self.key.b_port)
        if responder == self.initiator:
            responder = (self.key.a_ip, self.key.a_port)
        return FlowSession(self.key, responder, self.bwd_packets,
                           self.fwd_packets, self.state, self.close_reason)


@dataclass
class FilterPolicy:
    drop_protocols: frozenset[int] = frozenset({PROTO_ARP})
    ts_tolerance_us: int = TS_REGRESSION_TOLERANCE_US


@dataclass
class FilterReport:
    kept: int = 0
    dropped: Counter = field(default_factory=Counter)


def filter_packets(
    stream: Iterable[PacketRecord],
    policy: FilterPolicy | None = None,
    report: FilterReport | None = None,
) -> list[PacketRecord]:
    """Drop packets whose protocol is in ``policy.drop_protocols``.

    Records are validated as they pass. A record with a negative length or a
    timestamp more than the tolerance behind the latest one seen raises
    :class:`MalformedRecordError`. Per-protocol drop counts (keyed by
    protocol name) accumulate in ``report`` when one is given.
    """
    policy = policy or FilterPolicy()
    report = report if report is not None else FilterReport()
    kept = []
    latest_us = None
    for i, pkt in enumerate(stream):
        if pkt.ip_len < 0 or pkt.payload_len < 0:
            raise MalformedRecordError(i, "negative length")
        ts_us = pkt.ts_us
        if latest_us is not None and latest_us - ts_us > policy.ts_tolerance_us:
            raise MalformedRecordError(
                i, f"timestamp regresses {(latest_us - ts_us) / 1e3:.3f} ms")
        latest_us = ts_us if latest_us is None else max(latest_us, ts_us)
        if pkt.proto in policy.drop_protocols:
            report.dropped[PROTO_NAMES.get(pkt.proto, str(pkt.proto))] += 1
            continue
        kept.append(pkt)
    report.kept += len(kept)
    return kept


class _OpenSession:
    __slots__ = ("key", "initiator", "fwd", "bwd", "last_us", "fin_fwd", "fin_bwd")

    def __init__(self, key: FlowKey, first: PacketRecord):
        self.key = key
        self.initiator = first.src
        self.fwd: list[PacketRecord] = []
        self.bwd: list[PacketRecord] = []
        self.last_us = first.ts_us
        self.fin_fwd = False
        self.fin_bwd = False

    def add(self, pkt: PacketRecord) -> None:
        forward = pkt.src == self.initiator
        (self.fwd if forward else self.bwd).append(pkt)
        self.last_us = max(self.last_us, pkt.ts_us)
        if pkt.proto == PROTO_TCP and pkt.tcp_flags & FIN:
            if forward:
                self.fin_fwd = True
            else:
                self.fin_bwd = True

    def close(self, reason: str) -> FlowSession:
        return FlowSession(self.key, self.initiator, tuple(self.fwd),
                           tuple(self.bwd), "closed", reason)


def assemble(
    stream: Iterable[PacketRecord],
    idle_timeout: float = DEFAULT_IDLE_TIMEOUT,
) -> list[FlowSession]:
    """Group packets into bidirectional sessions.

    The stream is stably sorted by timestamp first, which absorbs small
    capture jitter. Sessions are returned in order of their first packet.
    """
    if idle_timeout < 0:
        raise ValueError("idle_timeout must be >= 0")
    timeout_us = round(idle_timeout * 1_000_000)
    ordered = sorted(stream, key=lambda p: p.ts_us)

    open_sessions: dict[FlowKey, tuple[int, _OpenSession]] = {}
    done: list[tuple[int, FlowSession]] = []
    created = 0
    for pkt in ordered:
        key = FlowKey.of(pkt)
        entry = open_sessions.get(key)
        if entry is not None and pkt.ts_us - entry[1].last_us > timeout_us:
            done.append((entry[0], entry[1].close("idle-timeout")))
            entry = None
        if entry is None:
            entry = (created, _OpenSession(key, pkt))
            created += 1
            open_sessions[key] = entry
        order, sess = entry
        sess.add(pkt)
        if pkt.proto == PROTO_TCP:
            reason = None
            if pkt.tcp_flags & RST:
                reason = "rst"
            elif sess.fin_fwd and sess.fin_bwd:
                reason = "fin"
            if reason:
                done.append((order, sess.close(reason)))
                del open_sessions[key]
    for order, sess in open_sessions.values():
        done.append((order, sess.close("stream-end")))
    done.sort(key=lambda item: item[0])
    return [s for _, s in done]


def _parse_proto(raw: str) -> int:
    raw = raw.strip()
    if raw.lower() in _NAME_TO_PROTO:
        return _NAME_TO_PROTO[raw.lower()]
    return int(raw)


_INT_FIELDS = PACKET_COLUMNS[3:]


def _record_from_mapping(row: dict, line: int) -> PacketRecord:
    missing = [c for c in PACKET_COLUMNS if c not in row or row[c] is None]
    if missing:
        raise PacketFileError(line, f"missing column(s): {', '.join(missing)}")
    try:
        values = {
            "ts": float(row["ts"]),
            "src_ip": str(row["src_ip"]).strip(),
            "dst_ip": str(row["dst_ip"]).strip(),
        }
        for name in _INT_FIELDS:
            raw = row[name]
            if name == "proto" and isinstance(raw, str):
                values[name] = _parse_proto(raw)
            elif isinstance(raw, str):
                values[name] = int(raw.strip() or 0)
            elif isinstance(raw, bool) or not float(raw).is_integer():
                raise ValueError(f"{name}={raw!r} is not an integer")
            else:
                values[name] = int(raw)
    except (TypeError, ValueError) as exc:
        raise PacketFileError(line, f"unparsable field: {exc}") from None
    pkt = PacketRecord(**values)
    problems = pkt.problems()
    if problems:
        raise PacketFileError(line, "; ".join(problems))
    return pkt


def read_packet_csv(path: str | Path) -> list[PacketRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in PACKET_COLUMNS if c not in header]
        if missing:
            raise PacketFileError(1, f"missing column(s): {', '.join(missing)}")
        return [_record_from_mapping(row, i) for i, row in enumerate(reader, start=2)]


def read_packet_jsonl(path: str | Path) -> list[PacketRecord]:
    records = []
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PacketFileError(i, f"invalid JSON: {exc.msg}") from None
            if not isinstance(row, dict):
                raise PacketFileError(i, "expected a JSON object")
            records.append(_record_from_mapping(row, i))
    return records


def read_packets(path: str | Path) -> list[PacketRecord]:
    """Dispatch on file suffix: ``.jsonl``/``.json`` or CSV otherwise."""
    if Path(path).suffix.lower() in (".jsonl", ".json", ".ndjson"):
        return read_packet_jsonl(path)
    return read_packet_csv(path)


def write_packet_csv(packets: Sequence[PacketRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PACKET_COLUMNS)
        for p in packets:
            writer.writerow([repr(p.ts)] + [getattr(p, c) for c in PACKET_COLUMNS[1:]])
