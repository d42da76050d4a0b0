from __future__ import annotations

import numpy as np
import pytest

from flowdrift.flows import ACK, PROTO_TCP, PROTO_UDP, SYN, FlowKey, FlowSession, PacketRecord

A = ("10.0.0.1", 40000)
B = ("10.0.0.2", 80)


def pkt(ts, src=A, dst=B, proto=PROTO_TCP, ip_len=60, payload=0, ttl=64, flags=0,
        window=0, seq=0, ack=0):
    if proto != PROTO_TCP:
        flags = window = seq = ack = 0
    return PacketRecord(ts, src[0], dst[0], src[1], dst[1], proto, ip_len, payload, ttl,
                        flags, window, seq, ack)


def session(packets) -> FlowSession:
    first = packets[0]
    fwd = tuple(p for p in packets if p.src == first.src)
    bwd = tuple(p for p in packets if p.src != first.src)
    return FlowSession(FlowKey.of(first), first.src, fwd, bwd, "closed", "stream-end")


@pytest.fixture
def handshake_flow() -> FlowSession:
    return session([
        pkt(0.000, A, B, flags=SYN, ip_len=60, ttl=64, window=64240),
        pkt(0.010, B, A, flags=SYN | ACK, ip_len=60, ttl=128, window=65535),
        pkt(0.020, A, B, flags=ACK, ip_len=152, payload=100, ttl=64, window=64240),
    ])


@pytest.fixture
def udp_single() -> FlowSession:
    return session([pkt(5.0, A, B, proto=PROTO_UDP, ip_len=60, ttl=64)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
