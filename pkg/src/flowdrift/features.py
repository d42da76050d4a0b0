"""
The 28 protocol-agnostic flow features, sample sets, and feature CSV I/O.

Feature order (f01..f28)::

    f01 duration (s)                 f13-f15 payload bytes total/fwd/bwd
    f02-f03 mean TTL fwd/bwd         f16-f18 TCP retransmission rate total/fwd/bwd
    f04-f06 packets total/fwd/bwd    f19-f20 mean TCP window fwd/bwd
    f07-f09 IP bytes total/fwd/bwd   f21 SYN -> SYN+ACK (s)
    f10 mean inter-arrival (s)       f22 SYN -> initiator ACK (s)
    f11-f12 mean IP length fwd/bwd   f23 handshake ACK -> first payload (s)
    f24-f26 packets/s total/fwd/bwd  f27-f28 IP bytes/s fwd/bwd

Ratios with a zero denominator are 0; the presence mask marks them absent.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .flows import ACK, PROTO_TCP, SYN, FlowSession, PacketRecord

N_FEATURES = 28
FEATURE_NAMES = tuple(f"f{i:02d}" for i in range(1, N_FEATURES + 1))
CSV_COLUMNS = FEATURE_NAMES + ("label", "attack_type", "origin")
BENIGN = "Benign"

FEATURE_DESCRIPTIONS = {
    "f01": "Flow duration",
    "f02": "Mean TTL, forward",
    "f03": "Mean TTL, backward",
    "f04": "Packets, total",
    "f05": "Packets, forward",
    "f06": "Packets, backward",
    "f07": "IP bytes, total",
    "f08": "IP bytes, forward",
    "f09": "IP bytes, backward",
    "f10": "Mean inter-arrival time",
    "f11": "Mean packet size, forward",
    "f12": "Mean packet size, backward",
    "f13": "Payload bytes, total",
    "f14": "Payload bytes, forward",
    "f15": "Payload bytes, backward",
    "f16": "Retransmission rate, total",
    "f17": "Retransmission rate, forward",
    "f18": "Retransmission rate, backward",
    "f19": "Mean TCP window, forward",
    "f20": "Mean TCP window, backward",
    "f21": "TCP round-trip time",
    "f22": "SYN to ACK time",
    "f23": "ACK to first data time",
    "f24": "Packet rate, total",
    "f25": "Packet rate, forward",
    "f26": "Packet rate, backward",
    "f27": "Byte rate, forward",
    "f28": "Byte rate, backward",
}

# Index pairs exchanged when the direction labels of a flow are swapped.
DIRECTIONAL_PAIRS = (
    (1, 2), (4, 5), (7, 8), (10, 11), (13, 14), (16, 17), (18, 19), (24, 25), (26, 27),
)


class FeatureVector(NamedTuple):
    f01: float
    f02: float
    f03: float
    f04: float
    f05: float
    f06: float
    f07: float
    f08: float
    f09: float
    f10: float
    f11: float
    f12: float
    f13: float
    f14: float
    f15: float
    f16: float
    f17: float
    f18: float
    f19: float
    f20: float
    f21: float
    f22: float
    f23: float
    f24: float
    f25: float
    f26: float
    f27: float
    f28: float


@dataclass(frozen=True)
class LabeledSample:
    features: FeatureVector
    label: int
    attack_type: str
    origin: str = ""

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if (self.label == 0) != (self.attack_type == BENIGN):
            raise ValueError(
                f"label {self.label} inconsistent with attack_type {self.attack_type!r}")


class FeatureSchemaError(ValueError):
    def __init__(self, column: str, reason: str = "missing column"):
        super().__init__(f"{reason}: {column}")
        self.column = column


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def _retransmissions(packets: Sequence[PacketRecord]) -> tuple[int, int]:
    """Count (retransmitted, data) packets in one direction.

    A data packet is a retransmission when its sequence range ends at or
    before the highest sequence end already seen (32-bit serial arithmetic).
    """
    data = retx = 0
    highest = None
    for p in packets:
        if p.payload_len <= 0:
            continue
        data += 1
        end = (p.tcp_seq + p.payload_len) % 2**32
        if highest is None:
            highest = end
            continue
        diff = (end - highest) % 2**32
        if diff == 0 or diff >= 2**31:
            retx += 1
        else:
            highest = end
    return retx, data


def _handshake_times(packets: Sequence[PacketRecord]) -> tuple[int, int, int] | None:
    """Return (t_syn, t_synack, t_ack) in microseconds, or None.

    Works on timestamps alone so the result does not depend on which side
    the caller labels forward.
    """
    syns = [p for p in packets if p.tcp_flags & SYN and not p.tcp_flags & ACK]
    if not syns:
        return None
    t_syn = min(p.ts_us for p in syns)
    # On simultaneous SYNs the smaller endpoint is taken as the opener.
    opener = min(p.src for p in syns if p.ts_us == t_syn)
    synacks = [p.ts_us for p in packets
               if p.has_flags(SYN | ACK) and p.src != opener and p.ts_us >= t_syn]
    if not synacks:
        return None
    t_synack = min(synacks)
    acks = [p.ts_us for p in packets
            if p.src == opener and p.tcp_flags & ACK and not p.tcp_flags & SYN
            and p.ts_us >= t_synack]
    if not acks:
        return (t_syn, t_synack, -1)
    return (t_syn, t_synack, min(acks))


def extract_with_mask(flow: FlowSession) -> tuple[FeatureVector, tuple[bool, ...]]:
    """Compute the feature vector of ``flow`` and its presence mask."""
    fwd, bwd = flow.fwd_packets, flow.bwd_packets
    both = fwd + bwd
    n_f, n_b = len(fwd), len(bwd)
    n = n_f + n_b
    present = [True] * N_FEATURES

    t_us = [p.ts_us for p in both]
    dur_us = max(t_us) - min(t_us) if both else 0
    dur = dur_us / 1e6

    bytes_f = sum(p.ip_len for p in fwd)
    bytes_b = sum(p.ip_len for p in bwd)
    pay_f = sum(p.payload_len for p in fwd)
    pay_b = sum(p.payload_len for p in bwd)

    ttl_f = _mean([p.ttl for p in fwd])
    ttl_b = _mean([p.ttl for p in bwd])
    size_f = _mean([p.ip_len for p in fwd])
    size_b = _mean([p.ip_len for p in bwd])
    iat = dur_us / (n - 1) / 1e6 if n > 1 else 0.0
    present[1], present[10] = n_f > 0, n_f > 0
    present[2], present[11] = n_b > 0, n_b > 0
    present[9] = n > 1

    is_tcp = flow.key.proto == PROTO_TCP
    if is_tcp:
        rf, df = _retransmissions(fwd)
        rb, db = _retransmissions(bwd)
        loss = (_ratio(rf + rb, df + db), _ratio(rf, df), _ratio(rb, db))
        present[15:18] = [df + db > 0, df > 0, db > 0]
        win_f = _mean([p.tcp_window for p in fwd])
        win_b = _mean([p.tcp_window for p in bwd])
        present[18:20] = [n_f > 0, n_b > 0]
        hs = _handshake_times(both)
    else:
        loss = (0.0, 0.0, 0.0)
        win_f = win_b = 0.0
        present[15:20] = [False] * 5
        hs = None

    rtt = syn_ack = ack_data = 0.0
    present[20:23] = [False] * 3
    if hs is not None:
        t_syn, t_synack, t_ack = hs
        rtt = (t_synack - t_syn) / 1e6
        present[20] = True
        if t_ack >= 0:
            syn_ack = (t_ack - t_syn) / 1e6
            present[21] = True
            # The completing ACK itself counts when it carries data.
            data_ts = [p.ts_us for p in both if p.payload_len > 0 and p.ts_us >= t_ack]
            if data_ts:
                ack_data = (min(data_ts) - t_ack) / 1e6
                present[22] = True

    present[23:28] = [dur > 0] * 5
    values = FeatureVector(
        dur, ttl_f, ttl_b,
        float(n), float(n_f), float(n_b),
        float(bytes_f + bytes_b), float(bytes_f), float(bytes_b),
        iat, size_f, size_b,
        float(pay_f + pay_b), float(pay_f), float(pay_b),
        *loss,
        win_f, win_b,
        rtt, syn_ack, ack_data,
        _ratio(n, dur), _ratio(n_f, dur), _ratio(n_b, dur),
        _ratio(bytes_f, dur), _ratio(bytes_b, dur),
    )
    return values, tuple(present)


def extract(flow: FlowSession) -> FeatureVector:
    return extract_with_mask(flow)[0]


Labeler = Callable[[FlowSession], "tuple[int, str] | None"]


class IpLabeler:
    """Label flows by endpoint address.

    A flow touching any address in ``attackers`` gets that address's attack
    type; everything else is benign. ``strict`` makes unknown addresses a
    labeling failure instead (useful when the benign hosts are enumerated in
    ``benign``).
    """

    def __init__(self, attackers: dict[str, str], benign: Iterable[str] = (),
                 strict: bool = False):
        self.attackers = dict(attackers)
        self.benign = set(benign)
        self.strict = strict

    def __call__(self, flow: FlowSession) -> tuple[int, str] | None:
        for ip in (flow.key.a_ip, flow.key.b_ip):
            if ip in self.attackers:
                return 1, self.attackers[ip]
        if self.strict and not ({flow.key.a_ip, flow.key.b_ip} & self.benign):
            return None
        return 0, BENIGN


def extract_batch(
    flows: Iterable[FlowSession],
    labeler: Labeler,
    origin: str = "",
) -> tuple[list[LabeledSample], int]:
    """Label and featurize flows in order.

    Returns the samples and the number of flows dropped because the labeler
    returned None or raised ``LookupError``.
    """
    samples = []
    dropped = 0
    for flow in flows:
        try:
            assigned = labeler(flow)
        except LookupError:
            assigned = None
        if assigned is None:
            dropped += 1
            continue
        label, attack_type = assigned
        samples.append(LabeledSample(extract(flow), int(label), attack_type, origin))
    return samples, dropped


class SampleSet:
    """Columnar store of labeled samples.

    Behaves as a sequence of :class:`LabeledSample`, but keeps the features
    as an ``(n, 28)`` float array so million-row datasets stay cheap. ``ids``
    are stable identity tags used for leakage checks.
    """

    def __init__(self, X, y, attack_type=None, origin=None, ids=None, present=None):
        self.X = np.ascontiguousarray(X, dtype=np.float64).reshape(-1, N_FEATURES)
        n = len(self.X)
        self.y = np.asarray(y, dtype=np.int64).reshape(n)
        if attack_type is None:
            attack_type = np.where(self.y == 1, "Malicious", BENIGN)
        self.attack_type = np.asarray(attack_type, dtype=object).reshape(n)
        if origin is None:
            origin = [""] * n
        self.origin = np.asarray(origin, dtype=object).reshape(n)
        self.ids = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        self.present = None if present is None else np.asarray(present, dtype=bool).reshape(n, N_FEATURES)

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample], masks=None) -> SampleSet:
        samples = list(samples)
        X = np.array([s.features for s in samples], dtype=np.float64).reshape(-1, N_FEATURES)
        return cls(X, [s.label for s in samples], [s.attack_type for s in samples],
                   [s.origin for s in samples], present=masks)

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return LabeledSample(FeatureVector(*map(float, self.X[idx])), int(self.y[idx]),
                                 str(self.attack_type[idx]), str(self.origin[idx]))
        return self.subset(idx)

    def __iter__(self) -> Iterator[LabeledSample]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, idx) -> SampleSet:
        idx = np.arange(len(self))[idx] if isinstance(idx, slice) else np.asarray(idx)
        return SampleSet(self.X[idx], self.y[idx], self.attack_type[idx], self.origin[idx],
                         self.ids[idx], None if self.present is None else self.present[idx])

    def with_features(self, X) -> SampleSet:
        return SampleSet(X, self.y, self.attack_type, self.origin, self.ids, self.present)

    def where_origin(self, origin: str) -> SampleSet:
        return self.subset(np.flatnonzero(self.origin == origin))

    @staticmethod
    def concat(parts: Sequence[SampleSet]) -> SampleSet:
        masks = [p.present for p in parts]
        present = None if any(m is None for m in masks) else np.concatenate(masks)
        return SampleSet(np.concatenate([p.X for p in parts]),
                         np.concatenate([p.y for p in parts]),
                         np.concatenate([p.attack_type for p in parts]),
                         np.concatenate([p.origin for p in parts]),
                         np.concatenate([p.ids for p in parts]), present)


def _as_sample_set(samples) -> SampleSet:
    return samples if isinstance(samples, SampleSet) else SampleSet.from_samples(samples)


def write_feature_csv(samples, path: str | Path) -> None:
    data = _as_sample_set(samples)
    df = pd.DataFrame(data.X, columns=list(FEATURE_NAMES))
    df["label"] = data.y
    df["attack_type"] = data.attack_type
    df["origin"] = data.origin
    # %.17g round-trips every double exactly.
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_column_mapping(path: str | Path) -> dict[str, str]:
    """Parse ``external_name=fNN`` lines (``#`` comments allowed).

    Targets may also be ``label``, ``attack_type`` or ``origin``.
    """
    mapping = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected external_name=target")
        ext, target = (part.strip() for part in line.rsplit("=", 1))
        if target not in CSV_COLUMNS:
            raise ValueError(f"{path}:{lineno}: unknown target {target!r}")
        mapping[ext] = target
    return mapping


def _binary_labels(col: pd.Series) -> np.ndarray:
    if pd.api.types.is_numeric_dtype(col):
        return col.astype(int).to_numpy()
    text = col.astype(str).str.strip().str.lower()
    out = np.where(text.isin(["benign", "normal", "0"]), 0, 1)
    return out


def read_feature_csv(
    path: str | Path,
    mapping: dict[str, str] | None = None,
    origin: str | None = None,
) -> SampleSet:
    """Load a feature CSV, optionally renaming third-party columns first.

    ``origin`` fills the origin column when the file lacks one, or overrides
    it when given explicitly.
    """
    df = pd.read_csv(path, low_memory=False, float_precision="round_trip")
    if mapping:
        missing = [ext for ext in mapping if ext not in df.columns]
        if missing:
            raise FeatureSchemaError(missing[0])
        df = df.rename(columns=mapping)
    for name in FEATURE_NAMES:
        if name not in df.columns:
            raise FeatureSchemaError(name)
    if "label" not in df.columns:
        raise FeatureSchemaError("label")
    try:
        X = df[list(FEATURE_NAMES)].apply(pd.to_numeric, errors="raise").fillna(0.0)
    except (ValueError, TypeError) as exc:
        raise FeatureSchemaError(str(exc), "non-numeric feature value") from None
    y = _binary_labels(df["label"])
    if "attack_type" in df.columns:
        attack = df["attack_type"].fillna("").astype(str).str.strip().to_numpy(dtype=object)
        attack[(y == 0)] = BENIGN
        attack[(y == 1) & (attack == BENIGN)] = "Malicious"
        attack[(y == 1) & (attack == "")] = "Malicious"
    else:
        attack = None
    if origin is not None:
        origins = [origin] * len(df)
    elif "origin" in df.columns:
        origins = df["origin"].fillna("").astype(str).to_numpy(dtype=object)
    else:
        origins = None
    return SampleSet(X.to_numpy(dtype=np.float64), y, attack, origins)


def attack_type_counts(samples) -> Counter:
    data = _as_sample_set(samples)
    return Counter(zip(data.origin.tolist(), data.attack_type.tolist()))
