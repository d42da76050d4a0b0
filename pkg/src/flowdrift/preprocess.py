"""Min-max scaling, seeded train/test splits, batching, and class weights."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .features import N_FEATURES, SampleSet, _as_sample_set

DEFAULT_BATCH_SIZE = 10_000
DEFAULT_TRAIN_FRACTION = 0.9


class NotFittedError(RuntimeError):
    pass


@dataclass
class MinMaxScaler:
    min_: np.ndarray | None = None
    max_: np.ndarray | None = None
    clip: bool = True

    @property
    def fitted(self) -> bool:
        return self.min_ is not None

    def transform(self, X: np.ndarray, present: np.ndarray | None = None) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError("scaler has not been fitted")
        X = np.asarray(X, dtype=np.float64)
        span = self.max_ - self.min_
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (X - self.min_) / safe, 0.0)
        if self.clip:
            out = np.clip(out, 0.0, 1.0)
        if present is not None:
            out = np.where(present, out, 0.0)
        return out

    def to_dict(self) -> dict:
        return {"min": self.min_.tolist(), "max": self.max_.tolist(), "clip": self.clip}

    @classmethod
    def from_dict(cls, doc: dict) -> MinMaxScaler:
        lo = np.asarray(doc["min"], dtype=np.float64)
        hi = np.asarray(doc["max"], dtype=np.float64)
        if lo.shape != (N_FEATURES,) or hi.shape != (N_FEATURES,):
            raise ValueError(f"scaler arrays must have length {N_FEATURES}")
        return cls(lo, hi, bool(doc.get("clip", True)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> MinMaxScaler:
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_minmax(train, clip: bool = True) -> MinMaxScaler:
    """Learn per-feature min and max from ``train`` only.

    When the set carries a presence mask, absent entries are ignored; a
    feature absent everywhere gets min = max = 0.
    """
    data = _as_sample_set(train)
    if len(data) == 0:
        raise ValueError("cannot fit a scaler on an empty set")
    X = data.X
    if data.present is None:
        lo, hi = X.min(axis=0), X.max(axis=0)
    else:
        lo = np.where(data.present, X, np.inf).min(axis=0)
        hi = np.where(data.present, X, -np.inf).max(axis=0)
        empty = ~data.present.any(axis=0)
        lo[empty] = hi[empty] = 0.0
    return MinMaxScaler(lo.astype(np.float64), hi.astype(np.float64), clip)


def transform(scaler: MinMaxScaler, samples) -> SampleSet:
    data = _as_sample_set(samples)
    return data.with_features(scaler.transform(data.X, data.present))


@dataclass
class SplitPlan:
    train_fraction: float = DEFAULT_TRAIN_FRACTION
    seed: int = 42
    shuffle: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")

    def train_size(self, n: int) -> int:
        # floor() in integer arithmetic; the fraction is resolved to 1e-9
        return round(self.train_fraction * 10**9) * n // 10**9

    def to_dict(self) -> dict:
        return asdict(self)


def split_indices(n: int, plan: SplitPlan) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ValueError(f"need at least 2 samples to split, got {n}")
    order = np.arange(n)
    if plan.shuffle:
        order = np.random.default_rng(plan.seed).permutation(n)
    cut = plan.train_size(n)
    return order[:cut], order[cut:]


def split(samples, plan: SplitPlan | None = None) -> tuple[SampleSet, SampleSet]:
    """Cut ``samples`` into (train, test) with ``floor(fraction * N)`` in train."""
    plan = plan or SplitPlan()
    data = _as_sample_set(samples)
    train_idx, test_idx = split_indices(len(data), plan)
    return data.subset(train_idx), data.subset(test_idx)


@dataclass
class BatchStream:
    """Ordered, non-overlapping batches over a sample set."""

    samples: SampleSet
    batch_size: int = DEFAULT_BATCH_SIZE

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def __len__(self) -> int:
        return -(-len(self.samples) // self.batch_size)

    def bounds(self) -> list[tuple[int, int]]:
        n, b = len(self.samples), self.batch_size
        return [(i, min(i + b, n)) for i in range(0, n, b)]

    def __iter__(self) -> Iterator[SampleSet]:
        for lo, hi in self.bounds():
            yield self.samples.subset(slice(lo, hi))


def batches(samples, batch_size: int = DEFAULT_BATCH_SIZE) -> BatchStream:
    return BatchStream(_as_sample_set(samples), batch_size)


def n_batches(n: int, batch_size: int) -> int:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    return -(-n // batch_size)


@dataclass
class ClassWeights:
    weights: dict[int, float] = field(default_factory=lambda: {0: 1.0, 1: 1.0})

    def __post_init__(self):
        if any(not w > 0 for w in self.weights.values()):
            raise ValueError("class weights must be > 0")

    def __getitem__(self, label: int) -> float:
        return self.weights[int(label)]

    def per_sample(self, y: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(y) == 1, self.weights[1], self.weights[0]).astype(np.float64)

    @property
    def uniform(self) -> bool:
        return self.weights[0] == 1.0 and self.weights[1] == 1.0


def class_weights(samples, override: dict[int, float] | None = None) -> ClassWeights:
    """Inverse-frequency weights ``N / (2 * N_c)``, or ``override`` unchanged."""
    if override is not None:
        return ClassWeights({int(k): float(v) for k, v in override.items()})
    y = samples.y if isinstance(samples, SampleSet) else np.asarray(
        [getattr(s, "label", s) for s in samples])
    n = len(y)
    counts = {c: int(np.sum(y == c)) for c in (0, 1)}
    if not all(counts.values()):
        raise ValueError("inverse-frequency class weights need both classes present")
    return ClassWeights({c: n / (2 * counts[c]) for c in (0, 1)})


def oversample_minority(samples, seed: int = 0) -> SampleSet:
    """Duplicate minority-class samples (with replacement) up to parity."""
    data = _as_sample_set(samples)
    pos = np.flatnonzero(data.y == 1)
    neg = np.flatnonzero(data.y == 0)
    if len(pos) == 0 or len(neg) == 0 or len(pos) == len(neg):
        return data
    small, large = (pos, neg) if len(pos) < len(neg) else (neg, pos)
    rng = np.random.default_rng(seed)
    extra = rng.choice(small, size=len(large) - len(small), replace=True)
    idx = rng.permutation(np.concatenate([np.arange(len(data)), extra]))
    return data.subset(idx)


def save_split_plan(plan: SplitPlan, path: str | Path, sizes: Sequence[int] = ()) -> None:
    doc = plan.to_dict()
    if sizes:
        doc["sizes"] = list(sizes)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
