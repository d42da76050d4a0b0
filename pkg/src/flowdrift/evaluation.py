"""Detection metrics, AUROC, forgetting rate, and per-batch forgetting curves."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

BASELINE = -1
OFFLINE_TEST = "offline"
INCOMING_TEST = "incoming"

CURVE_COLUMNS = ("batch_index", "offline_acc", "incoming_acc", "forgetting",
                 "f1", "precision", "recall", "auroc")


class UndefinedMetricError(ValueError):
    """Raised when a metric has no value for the given input (e.g. AUROC on one class)."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(preds, labels) -> ConfusionCounts:
    preds = np.asarray(preds).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if len(preds) != len(labels):
        raise ValueError(f"length mismatch: {len(preds)} predictions, {len(labels)} labels")
    if len(preds) == 0:
        raise ValueError("cannot evaluate zero samples")
    p = preds == 1
    t = labels == 1
    return ConfusionCounts(
        tp=int(np.sum(p & t)), tn=int(np.sum(~p & ~t)),
        fp=int(np.sum(p & ~t)), fn=int(np.sum(~p & t)),
    )


def accuracy(c: ConfusionCounts) -> float:
    return (c.tp + c.tn) / c.total if c.total else 0.0


def precision(c: ConfusionCounts) -> float:
    den = c.tp + c.fp
    return c.tp / den if den else 0.0


def recall(c: ConfusionCounts) -> float:
    den = c.tp + c.fn
    return c.tp / den if den else 0.0


def f1(c: ConfusionCounts) -> float:
    # 2PR/(P+R) in count form; one correctly rounded division
    den = 2 * c.tp + c.fp + c.fn
    return 2 * c.tp / den if den else 0.0


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midranks for tied scores."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if len(scores) != len(labels):
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes present")
    if np.isnan(scores).any():
        raise ValueError("NaN score")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # Midrank of each tie group: average of its 1-based positions.
    starts = np.flatnonzero(np.r_[True, sorted_scores[1:] != sorted_scores[:-1]])
    ends = np.r_[starts[1:], len(scores)]
    group_rank = (starts + 1 + ends) / 2.0
    ranks = np.empty(len(scores))
    ranks[order] = np.repeat(group_rank, ends - starts)
    r_pos = ranks[pos].sum()
    return float((r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def forgetting_rate(acc_before: float, acc_after_n: float) -> float:
    """Relative accuracy loss on the old test set; negative means improvement."""
    if acc_before == 0:
        raise ValueError("forgetting rate is undefined when the baseline accuracy is 0")
    return (acc_before - acc_after_n) / acc_before


@dataclass
class EvalSnapshot:
    model_id: str
    test_set_id: str
    counts: ConfusionCounts
    accuracy: float
    precision: float
    recall: float
    f1: float
    auroc: float | None
    batch_index: int = BASELINE
    wall_seconds: float = 0.0

    def to_dict(self, timing: bool = False) -> dict:
        doc = asdict(self)
        if not timing:
            doc.pop("wall_seconds")
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> EvalSnapshot:
        doc = dict(doc)
        doc["counts"] = ConfusionCounts(**doc["counts"])
        return cls(**doc)


def metrics_from(preds, scores, labels, model_id="", test_set_id="",
                 batch_index=BASELINE) -> EvalSnapshot:
    c = confusion(preds, labels)
    try:
        auc = auroc(scores, labels)
    except UndefinedMetricError:
        auc = None
    return EvalSnapshot(model_id, test_set_id, c, accuracy(c), precision(c),
                        recall(c), f1(c), auc, batch_index)


def snapshot(model, test_set, model_id: str = "", test_set_id: str = "",
             batch_index: int = BASELINE) -> EvalSnapshot:
    """Evaluate ``model`` on a SampleSet (or an ``(X, y)`` pair)."""
    X, y = (test_set.X, test_set.y) if hasattr(test_set, "X") else test_set
    start = time.perf_counter()
    snap = metrics_from(model.predict_batch(X), model.scores(X), y,
                        model_id, test_set_id, batch_index)
    snap.wall_seconds = time.perf_counter() - start
    return snap


@dataclass
class ForgettingCurve:
    model_id: str
    baseline: float
    batch_index: list[int] = field(default_factory=list)
    offline_acc: list[float] = field(default_factory=list)
    incoming_acc: list[float] = field(default_factory=list)
    forgetting: list[float] = field(default_factory=list)
    f1: list[float] = field(default_factory=list)
    precision: list[float] = field(default_factory=list)
    recall: list[float] = field(default_factory=list)
    auroc: list[float | None] = field(default_factory=list)
    incoming_baseline: float | None = None

    def __len__(self) -> int:
        return len(self.batch_index)

    def by_accuracy(self) -> list[int]:
        """Positions ordered by ascending incoming accuracy (stable)."""
        return sorted(range(len(self)), key=lambda i: self.incoming_acc[i])

    def accuracy_ordered(self) -> dict[str, list]:
        order = self.by_accuracy()
        return {
            "batch_index": [self.batch_index[i] for i in order],
            "incoming_acc": [self.incoming_acc[i] for i in order],
            "forgetting": [self.forgetting[i] for i in order],
        }

    def rows(self) -> list[tuple]:
        return list(zip(self.batch_index, self.offline_acc, self.incoming_acc, self.forgetting,
                        self.f1, self.precision, self.recall, self.auroc))

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["accuracy_ordered"] = self.accuracy_ordered()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> ForgettingCurve:
        doc = {k: v for k, v in doc.items() if k != "accuracy_ordered"}
        return cls(**doc)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for row in self.rows():
            writer.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def read_csv(cls, path: str | Path, model_id: str = "", baseline: float | None = None
                 ) -> ForgettingCurve:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        curve = cls(model_id, float("nan") if baseline is None else baseline)
        for r in rows:
            curve.batch_index.append(int(r["batch_index"]))
            for name in CURVE_COLUMNS[1:]:
                raw = r[name]
                getattr(curve, name).append(None if raw == "" else float(raw))
        return curve


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def build_curve(snapshots: Sequence[EvalSnapshot], offline_id: str = OFFLINE_TEST,
                incoming_id: str = INCOMING_TEST) -> ForgettingCurve:
    """Assemble a curve from one model's snapshots on the two test sets.

    A baseline (``batch_index == -1``) snapshot on the offline test set is
    required; per-batch entries need snapshots on both sets.
    """
    ids = {s.model_id for s in snapshots}
    if len(ids) > 1:
        raise ValueError(f"snapshots mix models: {sorted(ids)}")
    offline = {s.batch_index: s for s in snapshots if s.test_set_id == offline_id}
    incoming = {s.batch_index: s for s in snapshots if s.test_set_id == incoming_id}
    if BASELINE not in offline:
        raise ValueError("missing baseline snapshot on the offline test set")
    base = offline[BASELINE].accuracy
    curve = ForgettingCurve(next(iter(ids)), base)
    if BASELINE in incoming:
        curve.incoming_baseline = incoming[BASELINE].accuracy
    for n in sorted(k for k in offline if k != BASELINE):
        if n not in incoming:
            raise ValueError(f"batch {n} has no incoming-test snapshot")
        off, inc = offline[n], incoming[n]
        curve.batch_index.append(n)
        curve.offline_acc.append(off.accuracy)
        curve.incoming_acc.append(inc.accuracy)
        curve.forgetting.append(forgetting_rate(base, off.accuracy))
        curve.f1.append(inc.f1)
        curve.precision.append(inc.precision)
        curve.recall.append(inc.recall)
        curve.auroc.append(inc.auroc)
    return curve


def snapshots_to_json(snaps: Sequence[EvalSnapshot]) -> str:
    return json.dumps([s.to_dict() for s in snaps], indent=2, sort_keys=True) + "\n"
