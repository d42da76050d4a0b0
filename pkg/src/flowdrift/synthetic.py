"""
Seeded synthetic data: a two-population drift pair and random packet traces.

The drift pair mimics the two-base-station setup without external data.
Both populations share the benign cluster. In the offline population the
malicious cluster sits along the first feature axis; in the incoming
population it moves into the region the offline boundary calls benign and
separates along the second axis instead. A model fitted offline is thus
near chance on incoming traffic until it is updated, and updating it moves
the boundary away from the offline malicious cluster.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import BENIGN, N_FEATURES, SampleSet
from .flows import ACK, FIN, PROTO_ICMP, PROTO_TCP, PROTO_UDP, PSH, RST, SYN, PacketRecord


@dataclass
class DriftSpec:
    n_offline: int = 10_000
    n_incoming: int = 10_000
    separation: float = 2.0
    incoming_shift: float = 3.0
    malicious_fraction: float = 0.5
    noise: float = 1.0
    seed: int = 7


def _population(rng, n, mal_mean, spec, origin, attack, id_offset) -> SampleSet:
    y = (rng.random(n) < spec.malicious_fraction).astype(np.int64)
    X = rng.normal(0.0, spec.noise, size=(n, N_FEATURES))
    benign_mean = np.zeros(N_FEATURES)
    benign_mean[0] = -spec.separation
    X += np.where(y[:, None] == 1, mal_mean, benign_mean)
    attack_type = np.where(y == 1, attack, BENIGN).astype(object)
    return SampleSet(X, y, attack_type, [origin] * n, np.arange(n) + id_offset)


def drift_pair(spec: DriftSpec | None = None) -> tuple[SampleSet, SampleSet]:
    """Return (offline, incoming) sample sets with a shifted class boundary."""
    spec = spec or DriftSpec()
    rng = np.random.default_rng(spec.seed)
    old = np.zeros(N_FEATURES)
    old[0] = spec.separation
    new = np.zeros(N_FEATURES)
    new[0] = -spec.separation
    new[1] = spec.incoming_shift
    offline = _population(rng, spec.n_offline, old, spec, "BS2", "UDPFlood", 0)
    incoming = _population(rng, spec.n_incoming, new, spec, "BS1", "HTTPFlood",
                           spec.n_offline)
    return offline, incoming


def bayes_predict_offline(X: np.ndarray, spec: DriftSpec | None = None) -> np.ndarray:
    """Optimal classifier for the offline population (equal priors)."""
    return (np.asarray(X)[:, 0] > 0).astype(np.int64)


def bayes_predict_incoming(X: np.ndarray, spec: DriftSpec | None = None) -> np.ndarray:
    """Optimal classifier for the incoming population (equal priors)."""
    spec = spec or DriftSpec()
    X = np.asarray(X)
    return (X[:, 1] > spec.incoming_shift / 2).astype(np.int64)


_HOSTS = ("10.0.0.1", "10.0.0.2", "10.0.0.3", "192.168.1.5", "172.16.0.9")


def random_trace(rng: np.random.Generator, n_packets: int | None = None,
                 n_conversations: int | None = None, start: float = 1_000.0) -> list[PacketRecord]:
    """A random time-ordered packet trace over a few TCP/UDP/ICMP conversations.

    Timestamps are whole microseconds; TCP packets carry arbitrary flag
    combinations (including SYN, FIN and RST) so termination paths get
    exercised.
    """
    if n_conversations is None:
        n_conversations = int(rng.integers(1, 5))
    if n_packets is None:
        n_packets = int(rng.integers(1, 30))
    convs = []
    for _ in range(n_conversations):
        proto = int(rng.choice([PROTO_TCP, PROTO_TCP, PROTO_UDP, PROTO_ICMP]))
        a, b = rng.choice(len(_HOSTS), size=2, replace=False)
        if proto == PROTO_ICMP:
            pa = pb = 0
        else:
            pa, pb = (int(p) for p in rng.integers(1, 65536, size=2))
        convs.append((proto, _HOSTS[a], pa, _HOSTS[b], pb))
    t_us = int(start * 1_000_000)
    out = []
    for _ in range(n_packets):
        proto, ip1, p1, ip2, p2 = convs[int(rng.integers(len(convs)))]
        if rng.random() < 0.5:
            ip1, p1, ip2, p2 = ip2, p2, ip1, p1
        # mostly short gaps, occasionally long enough to trip the idle timeout
        gap = int(rng.integers(0, 5_000)) if rng.random() < 0.9 else int(rng.integers(0, 200_000_000))
        t_us += gap
        payload = int(rng.integers(0, 1400)) if rng.random() < 0.6 else 0
        header = 40 if proto == PROTO_TCP else 28
        ttl = int(rng.integers(1, 256))
        if proto == PROTO_TCP:
            flags = int(rng.choice([SYN, SYN | ACK, ACK, ACK | PSH, FIN | ACK, RST, ACK, ACK]))
            window = int(rng.integers(0, 65536))
            seq = int(rng.integers(0, 2**32))
            if rng.random() < 0.3:
                seq = int(rng.integers(0, 3000))
            ack = int(rng.integers(0, 2**32))
        else:
            flags = window = seq = ack = 0
        out.append(PacketRecord(t_us / 1e6, ip1, ip2, p1, p2, proto, payload + header,
                                payload, ttl, flags, window, seq, ack))
    return out
