"""
Two-population drift protocol: offline training, per-batch incremental
updates with dual evaluation, early stopping, the LwF comparison, dataset
statistics, and report emission.
"""

from __future__ import annotations

import json
import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .evaluation import (
    BASELINE, INCOMING_TEST, OFFLINE_TEST, EvalSnapshot, ForgettingCurve,
    build_curve, forgetting_rate, snapshot,
)
from .features import BENIGN, SampleSet, read_column_mapping, read_feature_csv
from .models import (
    DEFAULT_HIDDEN, DEFAULT_L2, DEFAULT_LINEAR_EPOCHS, DEFAULT_MLP_EPOCHS, KINDS,
    LwfConfig, LwfMlp, MlpModel, TrainReport, load_checkpoint, make_model,
    save_checkpoint,
)
from .preprocess import (
    ClassWeights, MinMaxScaler, SplitPlan, batches, class_weights, fit_minmax,
    save_split_plan, split, transform,
)

log = logging.getLogger(__name__)

# Attack types of the 5G-NIDD flow data, in the order its statistics table uses.
KNOWN_TRAFFIC_TYPES = (
    BENIGN, "UDPFlood", "HTTPFlood", "SlowrateDoS", "TCPConnectScan",
    "SYNScan", "UDPScan", "SYNFlood", "ICMPFlood",
)


class LeakageError(AssertionError):
    pass


# config

@dataclass
class ExperimentConfig:
    offline_data: str = ""
    incoming_data: str = ""
    mapping: str = ""
    output_dir: str = "runs/latest"
    batch_size: int = 10_000
    train_fraction: float = 0.9
    seed: int = 42
    model: str = "perceptron"
    eta: float | None = None
    l2: float = DEFAULT_L2
    epochs: int | None = None
    hidden: str = ",".join(map(str, DEFAULT_HIDDEN))
    eval_every: int = 1
    class_weight: str = "none"
    clip_normalize: bool = True
    shuffle_incremental: bool = False
    early_stop_enabled: bool = False
    early_stop_max_forgetting: float = 0.25
    early_stop_patience: int = 3
    lwf_enabled: bool = True
    lwf_lambda: float = 1.0
    lwf_temperature: float = 2.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if not 0 <= self.early_stop_max_forgetting <= 1:
            raise ValueError("early_stop.max_forgetting must lie in [0, 1]")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop.patience must be >= 1")
        if self.class_weight not in ("none", "balanced"):
            raise ValueError("class_weight must be 'none' or 'balanced'")
        if self.offline_data and self.offline_data == self.incoming_data:
            raise ValueError("offline_data and incoming_data must be distinct")
        SplitPlan(self.train_fraction, self.seed)
        LwfConfig(self.lwf_lambda, self.lwf_temperature)
        for kind in self.model_kinds:
            if kind not in KINDS:
                raise ValueError(f"unknown model {kind!r}; choose from {', '.join(KINDS)}")

    @property
    def model_kinds(self) -> list[str]:
        return [k.strip() for k in self.model.split(",") if k.strip()]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(int(h) for h in str(self.hidden).split(","))

    def epochs_for(self, kind: str) -> int:
        if self.epochs is not None:
            return self.epochs
        return DEFAULT_MLP_EPOCHS if kind == "mlp" else DEFAULT_LINEAR_EPOCHS

    def echo(self) -> dict:
        """Config as flat key/value pairs, minus where outputs are written."""
        doc = {}
        for f in fields(self):
            if f.name == "output_dir":
                continue
            doc[ATTR_TO_KEY.get(f.name, f.name)] = getattr(self, f.name)
        return doc


# Flat config keys -> dataclass attributes, for the dotted names.
KEY_TO_ATTR = {
    "lwf.lambda": "lwf_lambda",
    "lwf.temperature": "lwf_temperature",
    "lwf.enabled": "lwf_enabled",
    "early_stop.enabled": "early_stop_enabled",
    "early_stop.max_forgetting": "early_stop_max_forgetting",
    "early_stop.patience": "early_stop_patience",
}
ATTR_TO_KEY = {v: k for k, v in KEY_TO_ATTR.items()}
CONFIG_KEYS = tuple(ATTR_TO_KEY.get(f.name, f.name) for f in fields(ExperimentConfig))

_BOOL_ATTRS = {f.name for f in fields(ExperimentConfig) if f.type == "bool"}
_INT_ATTRS = {"batch_size", "seed", "eval_every", "early_stop_patience", "epochs"}
_FLOAT_ATTRS = {"train_fraction", "eta", "l2", "early_stop_max_forgetting",
                "lwf_lambda", "lwf_temperature"}


def _coerce(attr: str, raw: Any):
    if raw is None or not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if attr in _BOOL_ATTRS:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{ATTR_TO_KEY.get(attr, attr)}: expected a boolean, got {raw!r}")
    if attr in _INT_ATTRS:
        return None if raw.lower() in ("", "none", "default") else int(raw)
    if attr in _FLOAT_ATTRS:
        return None if raw.lower() in ("", "none", "default") else float(raw)
    return raw


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def make_config(values: dict[str, Any] | None = None, **overrides) -> ExperimentConfig:
    """Build a config from flat keys (dotted or attribute names)."""
    merged = dict(values or {})
    merged.update(overrides)
    kwargs = {}
    for key, raw in merged.items():
        if raw is None:
            continue
        attr = KEY_TO_ATTR.get(key, key)
        if attr not in {f.name for f in fields(ExperimentConfig)}:
            raise ValueError(f"unknown config key {key!r}")
        kwargs[attr] = _coerce(attr, raw)
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    return make_config(values, **overrides)


# dataset statistics

@dataclass
class DatasetStats:
    counts: dict[tuple[str, str], int] = field(default_factory=dict)
    benign: int = 0
    malicious: int = 0

    def count(self, origin: str, attack_type: str) -> int:
        return self.counts.get((origin, attack_type), 0)

    @property
    def origins(self) -> list[str]:
        return sorted({o for o, _ in self.counts})

    def table(self, origins=None) -> str:
        origins = list(origins or self.origins or ["BS1", "BS2"])
        types = list(KNOWN_TRAFFIC_TYPES)
        types += sorted({t for _, t in self.counts} - set(types))
        width = max(len(t) for t in types) + 2
        lines = ["Traffic type".ljust(width) + "".join(o.rjust(12) for o in origins)
                 + "   Class"]
        for t in types:
            row = t.ljust(width) + "".join(str(self.count(o, t)).rjust(12) for o in origins)
            lines.append(row + ("   Benign" if t == BENIGN else "   Malicious"))
        lines.append(f"Benign total: {self.benign}   Malicious total: {self.malicious}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "counts": [{"origin": o, "attack_type": t, "flows": n}
                       for (o, t), n in sorted(self.counts.items())],
            "benign": self.benign,
            "malicious": self.malicious,
        }


def dataset_stats(samples: SampleSet) -> DatasetStats:
    counts = Counter(zip(samples.origin.tolist(), samples.attack_type.tolist()))
    n_mal = int(np.sum(samples.y == 1))
    return DatasetStats(dict(counts), len(samples) - n_mal, n_mal)


# data preparation

@dataclass
class PreparedData:
    offline_train: SampleSet
    offline_test: SampleSet
    incoming_train: SampleSet
    incoming_test: SampleSet
    scaler: MinMaxScaler
    weights: ClassWeights
    sizes: dict[str, dict[str, int]]
    test_ids: np.ndarray = field(repr=False, default=None)

    def guard(self, batch: SampleSet) -> None:
        """Refuse to train on any sample that belongs to a test set."""
        if np.isin(batch.ids, self.test_ids).any():
            raise LeakageError("a test-set sample reached a training call")


def load_sources(cfg: ExperimentConfig) -> tuple[SampleSet, SampleSet]:
    if not cfg.offline_data or not cfg.incoming_data:
        raise ValueError("offline_data and incoming_data must both be set")
    mapping = read_column_mapping(cfg.mapping) if cfg.mapping else None
    return (read_feature_csv(cfg.offline_data, mapping),
            read_feature_csv(cfg.incoming_data, mapping))


def prepare(cfg: ExperimentConfig, offline: SampleSet, incoming: SampleSet) -> PreparedData:
    """Split both sources, fit the scaler on offline-train only, normalize all four parts."""
    # Give every sample a run-unique identity tag for the leakage guard.
    offline = SampleSet(offline.X, offline.y, offline.attack_type, offline.origin,
                        np.arange(len(offline)), offline.present)
    incoming = SampleSet(incoming.X, incoming.y, incoming.attack_type, incoming.origin,
                         np.arange(len(incoming)) + len(offline), incoming.present)
    plan = SplitPlan(cfg.train_fraction, cfg.seed)
    off_tr, off_te = split(offline, plan)
    inc_tr, inc_te = split(incoming, SplitPlan(cfg.train_fraction, cfg.seed + 1))
    if min(len(off_tr), len(off_te), len(inc_tr), len(inc_te)) == 0:
        raise ValueError("a split came out empty")
    if cfg.shuffle_incremental:
        order = np.random.default_rng([cfg.seed, 0x1CE]).permutation(len(inc_tr))
        inc_tr = inc_tr.subset(order)
    scaler = fit_minmax(off_tr, clip=cfg.clip_normalize)
    parts = [transform(scaler, s) for s in (off_tr, off_te, inc_tr, inc_te)]
    weights = class_weights(off_tr) if cfg.class_weight == "balanced" else ClassWeights()
    sizes = {
        "offline": {"total": len(offline), "train": len(off_tr), "test": len(off_te)},
        "incoming": {"total": len(incoming), "train": len(inc_tr), "test": len(inc_te)},
    }
    test_ids = np.concatenate([off_te.ids, inc_te.ids])
    if np.isin(np.concatenate([off_tr.ids, inc_tr.ids]), test_ids).any():
        raise LeakageError("train and test splits overlap")
    return PreparedData(*parts, scaler, weights, sizes, test_ids)


# phases

@dataclass
class OfflineResult:
    model_id: str
    model: Any
    train: TrainReport
    offline_test: EvalSnapshot
    incoming_test: EvalSnapshot
    checkpoint: str | None = None


@dataclass
class IncrementalResult:
    model_id: str
    model: Any
    snapshots: list[EvalSnapshot]
    curve: ForgettingCurve
    batches_run: int
    stopped_early: bool
    samples_seen: list[int]
    batch_seconds: list[float]
    checkpoints: list[str]


def _checkpoint_path(out_dir: Path | None, name: str) -> Path | None:
    if out_dir is None:
        return None
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    return ckpt_dir / f"{name}.json"


def run_offline_phase(cfg: ExperimentConfig, data: PreparedData, kind: str,
                      out_dir: Path | None = None) -> OfflineResult:
    if not data.scaler.fitted:
        raise ValueError("scaler must be fitted before training")
    if len(data.offline_train) == 0:
        raise ValueError("empty offline training split")
    model = make_model(kind, eta=cfg.eta, l2=cfg.l2, seed=cfg.seed, hidden=cfg.hidden_sizes)
    data.guard(data.offline_train)
    report = model.fit_offline(data.offline_train.X, data.offline_train.y,
                               cfg.epochs_for(kind), data.weights)
    snaps = [snapshot(model, s, kind, sid, BASELINE) for s, sid in
             ((data.offline_test, OFFLINE_TEST), (data.incoming_test, INCOMING_TEST))]
    path = _checkpoint_path(out_dir, f"{kind}_offline")
    if path is not None:
        save_checkpoint(model, path)
    return OfflineResult(kind, model, report, *snaps,
                         None if path is None else str(path.relative_to(out_dir)))


def run_incremental_phase(cfg: ExperimentConfig, data: PreparedData, model, model_id: str,
                          baseline: list[EvalSnapshot], out_dir: Path | None = None,
                          start_batch: int | None = None) -> IncrementalResult:
    """Update ``model`` batch by batch, evaluating both test sets every k batches.

    ``baseline`` holds the pre-update snapshots (``batch_index == -1``).
    When resuming, batches up to ``start_batch`` (default: the model's
    recorded batch index) are skipped.
    """
    if model.n_features != data.incoming_train.X.shape[1]:
        raise ValueError("model feature count does not match the data")
    start = model.batch_index if start_batch is None else start_batch
    snaps = [EvalSnapshot(**{**asdict(s), "model_id": model_id, "counts": s.counts})
             for s in baseline]
    base_acc = next(s.accuracy for s in snaps if s.test_set_id == OFFLINE_TEST)
    stream = batches(data.incoming_train, cfg.batch_size)
    total = len(stream)
    over = 0
    stopped = False
    seen = []
    times = []
    ckpts = []
    touched = 0
    for n, batch in enumerate(stream, start=1):
        if n <= start:
            touched += len(batch)
            continue
        data.guard(batch)
        t0 = time.perf_counter()
        touched += model.partial_fit(batch.X, batch.y, data.weights)
        times.append(time.perf_counter() - t0)
        model.batch_index = n
        seen.append(touched)
        if n % cfg.eval_every and n != total:
            continue
        off = snapshot(model, data.offline_test, model_id, OFFLINE_TEST, n)
        inc = snapshot(model, data.incoming_test, model_id, INCOMING_TEST, n)
        snaps += [off, inc]
        path = _checkpoint_path(out_dir, f"{model_id}_batch_{n:04d}")
        if path is not None:
            save_checkpoint(model, path)
            ckpts.append(str(path.relative_to(out_dir)))
        if cfg.early_stop_enabled:
            over = over + 1 if forgetting_rate(base_acc, off.accuracy) > cfg.early_stop_max_forgetting else 0
            if over >= cfg.early_stop_patience:
                log.info("%s: early stop after batch %d", model_id, n)
                stopped = True
                break
    curve = build_curve(snaps)
    return IncrementalResult(model_id, model, snaps, curve, len(times), stopped, seen, times, ckpts)


def run_lwf_phase(cfg: ExperimentConfig, data: PreparedData, offline: OfflineResult,
                  out_dir: Path | None = None) -> tuple[IncrementalResult, IncrementalResult]:
    """Incremental phase twice from the same offline MLP: plain, then with LwF."""
    if not isinstance(offline.model, MlpModel):
        raise ValueError("the LwF comparison needs an offline MLP as teacher")
    baseline = [offline.offline_test, offline.incoming_test]
    plain = run_incremental_phase(cfg, data, offline.model.copy(), "mlp", baseline, out_dir,
                                  start_batch=0)
    wrapped = LwfMlp(offline.model.copy(), LwfConfig(cfg.lwf_lambda, cfg.lwf_temperature),
                     teacher=offline.model)
    lwf = run_incremental_phase(cfg, data, wrapped, "mlp_lwf", baseline, out_dir, start_batch=0)
    return plain, lwf


def distill_sweep(cfg: ExperimentConfig, data: PreparedData, offline: OfflineResult,
                  lambdas) -> list[tuple[float, float, float]]:
    """(lambda, final forgetting, final incoming accuracy) for each distillation weight."""
    out = []
    baseline = [offline.offline_test, offline.incoming_test]
    for lam in lambdas:
        wrapped = LwfMlp(offline.model.copy(), LwfConfig(lam, cfg.lwf_temperature),
                         teacher=offline.model)
        res = run_incremental_phase(cfg, data, wrapped, f"mlp_lwf_{lam:g}", baseline,
                                    start_batch=0)
        out.append((lam, res.curve.forgetting[-1], res.curve.incoming_acc[-1]))
    return out


# report

@dataclass
class ExperimentReport:
    config: dict
    dataset: dict
    models: dict[str, dict]
    lwf: dict | None
    timings: dict[str, dict]
    checkpoints: list[str]

    def to_json(self) -> str:
        doc = {"config": self.config, "dataset": self.dataset, "models": self.models,
               "lwf": self.lwf, "checkpoints": self.checkpoints}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_files(cls, run_dir: str | Path) -> ExperimentReport:
        run_dir = Path(run_dir)
        doc = json.loads((run_dir / "report.json").read_text())
        tpath = run_dir / "timings.json"
        timings = json.loads(tpath.read_text()) if tpath.exists() else {}
        return cls(doc["config"], doc["dataset"], doc["models"], doc["lwf"], timings,
                   doc["checkpoints"])

    def curve(self, model_id: str) -> ForgettingCurve:
        return ForgettingCurve.from_dict(self.models[model_id]["curve"])


def _model_entry(off: OfflineResult, inc: IncrementalResult) -> dict:
    last = inc.curve.batch_index[-1] if len(inc.curve) else None
    after_inc = after_off = None
    for s in inc.snapshots:
        if s.batch_index == last and last is not None:
            if s.test_set_id == INCOMING_TEST:
                after_inc = s.to_dict()
            else:
                after_off = s.to_dict()
    train = off.train.to_dict()
    train.pop("wall_seconds")
    return {
        "kind": inc.model.kind,
        "train": train,
        "offline_phase": {"offline_test": off.offline_test.to_dict(),
                          "incoming_test": off.incoming_test.to_dict()},
        "incremental": {
            "before": off.incoming_test.to_dict(),
            "after": after_inc,
            "offline_after": after_off,
            "batches_run": inc.batches_run,
            "stopped_early": inc.stopped_early,
            "samples_seen": inc.samples_seen,
            "final_forgetting": inc.curve.forgetting[-1] if len(inc.curve) else None,
        },
        "curve": inc.curve.to_dict(),
        "checkpoints": ([off.checkpoint] if off.checkpoint else []) + inc.checkpoints,
    }


def _timing_entry(off: OfflineResult, inc: IncrementalResult) -> dict:
    bt = inc.batch_seconds
    return {"offline_seconds": off.train.wall_seconds,
            "mean_batch_seconds": float(np.mean(bt)) if bt else 0.0,
            "batch_seconds": bt}


def run_protocol(cfg: ExperimentConfig, offline: SampleSet | None = None,
                 incoming: SampleSet | None = None, write: bool = True) -> ExperimentReport:
    """Run every configured model through the offline and incremental phases."""
    if offline is None or incoming is None:
        offline, incoming = load_sources(cfg)
    out_dir = Path(cfg.output_dir) if write else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    data = prepare(cfg, offline, incoming)
    if out_dir is not None:
        data.scaler.save(out_dir / "scaler.json")
        save_split_plan(SplitPlan(cfg.train_fraction, cfg.seed), out_dir / "split.json",
                        [data.sizes["offline"]["train"], data.sizes["offline"]["test"],
                         data.sizes["incoming"]["train"], data.sizes["incoming"]["test"]])
    models, timings, ckpts = {}, {}, []
    lwf_doc = None
    for kind in cfg.model_kinds:
        log.info("offline phase: %s", kind)
        off = run_offline_phase(cfg, data, kind, out_dir)
        if kind == "mlp" and cfg.lwf_enabled:
            plain, lwf = run_lwf_phase(cfg, data, off, out_dir)
            runs = [plain, lwf]
            lwf_doc = {
                "plain": "mlp", "lwf": "mlp_lwf",
                "distill_weight": cfg.lwf_lambda, "temperature": cfg.lwf_temperature,
            }
        else:
            runs = [run_incremental_phase(cfg, data, off.model, kind,
                                          [off.offline_test, off.incoming_test], out_dir)]
        for res in runs:
            models[res.model_id] = _model_entry(off, res)
            timings[res.model_id] = _timing_entry(off, res)
            ckpts += models[res.model_id]["checkpoints"]
    dataset = {"sizes": data.sizes,
               "offline_stats": dataset_stats(offline).to_dict(),
               "incoming_stats": dataset_stats(incoming).to_dict()}
    report = ExperimentReport(cfg.echo(), dataset, models, lwf_doc, timings,
                              sorted(set(ckpts)))
    if out_dir is not None:
        emit_reports(report, out_dir)
    return report


def _pct(v) -> str:
    return "n/a" if v is None else f"{100 * v:.2f}"


def _metric_row(label: str, snap: dict) -> str:
    vals = [snap["accuracy"], snap["f1"], snap["precision"], snap["recall"], snap["auroc"]]
    return f"{label:<34}" + "".join(f"{_pct(v):>10}" for v in vals)


def render_tables(report: ExperimentReport) -> str:
    head = f"{'':<34}" + "".join(f"{h:>10}" for h in
                                 ("Accuracy", "F1", "Precision", "Recall", "AUROC"))
    out = ["Offline models before incremental learning (%)", head]
    for mid, m in sorted(report.models.items()):
        if mid.endswith("_lwf"):
            continue
        out.append(_metric_row(f"{mid} / offline test", m["offline_phase"]["offline_test"]))
        out.append(_metric_row(f"{mid} / incoming test", m["offline_phase"]["incoming_test"]))
    out += ["", "Incoming test before and after incremental learning (%)", head]
    for mid, m in sorted(report.models.items()):
        inc = m["incremental"]
        out.append(_metric_row(f"{mid} / before", inc["before"]))
        if inc["after"] is not None:
            out.append(_metric_row(f"{mid} / after (batch {m['curve']['batch_index'][-1]})",
                                   inc["after"]))
        out.append(f"{mid + ' / forgetting rate':<34}{_pct(inc['final_forgetting']):>10}")
    if report.timings:
        out += ["", "Time cost", f"{'':<34}{'Offline (ms)':>14}{'Mean per batch (ms)':>22}"]
        for mid, t in sorted(report.timings.items()):
            out.append(f"{mid:<34}{1000 * t['offline_seconds']:>14.2f}"
                       f"{1000 * t['mean_batch_seconds']:>22.2f}")
    if report.lwf:
        plain = report.models[report.lwf["plain"]]
        lwf = report.models[report.lwf["lwf"]]
        out += ["", f"MLP with and without LwF (lambda={report.lwf['distill_weight']:g}, "
                    f"T={report.lwf['temperature']:g}) accuracy (%)",
                f"{'':<46}{'without LwF':>14}{'with LwF':>14}"]

        def acc(m, *path):
            node = m
            for p in path:
                node = node[p] if node is not None else None
            return None if node is None else node["accuracy"]

        rows = [
            ("Offline test before IL", ("offline_phase", "offline_test")),
            ("Offline test after IL", ("incremental", "offline_after")),
            ("Incoming test before IL", ("incremental", "before")),
            ("Incoming test after IL", ("incremental", "after")),
        ]
        for label, path in rows:
            out.append(f"{label:<46}{_pct(acc(plain, *path)):>14}{_pct(acc(lwf, *path)):>14}")
        out.append(f"{'Forgetting rate':<46}"
                   f"{_pct(plain['incremental']['final_forgetting']):>14}"
                   f"{_pct(lwf['incremental']['final_forgetting']):>14}")
    return "\n".join(out) + "\n"


def emit_reports(report: ExperimentReport, out_dir: str | Path) -> list[Path]:
    """Write report.json, timings.json, tables.txt and one curve CSV per model."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write reports to {out_dir}: {exc}") from exc
    written = []

    def put(name: str, text: str) -> None:
        path = out_dir / name
        path.write_text(text)
        written.append(path)

    put("report.json", report.to_json())
    put("timings.json", json.dumps(report.timings, indent=2, sort_keys=True) + "\n")
    put("tables.txt", render_tables(report))
    for mid in sorted(report.models):
        put(f"curve_{mid}.csv", report.curve(mid).to_csv())
    return written


def resume_incremental(cfg: ExperimentConfig, data: PreparedData, checkpoint: str | Path,
                       baseline_checkpoint: str | Path, model_id: str | None = None,
                       out_dir: Path | None = None) -> IncrementalResult:
    """Continue an incremental run from a saved batch checkpoint."""
    model = load_checkpoint(checkpoint)
    base = load_checkpoint(baseline_checkpoint)
    expected = "mlp" if model.kind == "mlp_lwf" else model.kind
    if base.kind != expected:
        raise ValueError(f"baseline kind {base.kind!r} does not match {model.kind!r}")
    mid = model_id or model.kind
    baseline = [snapshot(base, data.offline_test, mid, OFFLINE_TEST, BASELINE),
                snapshot(base, data.incoming_test, mid, INCOMING_TEST, BASELINE)]
    return run_incremental_phase(cfg, data, model, mid, baseline, out_dir)
