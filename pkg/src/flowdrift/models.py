"""
Incrementally trainable binary classifiers.

Linear family (perceptron, logistic regression, hinge-loss SVM) trained by
per-sample SGD, a two-hidden-layer ReLU MLP trained by per-sample backprop,
and a Learning-without-Forgetting wrapper around the MLP. All updates are
strictly sequential so a fixed seed gives a bit-identical trajectory.
"""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import N_FEATURES

LINEAR_KINDS = ("perceptron", "logistic", "svm")
KINDS = LINEAR_KINDS + ("mlp",)

DEFAULT_ETA = 0.01
DEFAULT_L2 = 1e-4
DEFAULT_LINEAR_EPOCHS = 5
DEFAULT_MLP_ETA = 0.005
DEFAULT_MLP_EPOCHS = 10
DEFAULT_HIDDEN = (64, 64)


class CheckpointError(ValueError):
    pass


@dataclass
class TrainReport:
    samples_seen: int
    epochs: int
    wall_seconds: float
    final_loss: float

    def to_dict(self) -> dict:
        return {"samples_seen": self.samples_seen, "epochs": self.epochs,
                "wall_seconds": self.wall_seconds, "final_loss": self.final_loss}


def sigmoid(z):
    # Split by sign so neither branch overflows.
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def _sigmoid_scalar(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def softmax(z, temperature: float = 1.0):
    z = np.asarray(z, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_inputs(X, y=None, n_features=N_FEATURES):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature value")
    if y is not None:
        y = np.asarray(y).reshape(-1)
        if len(y) != len(X):
            raise ValueError("X and y lengths differ")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
    return X, y


def _sample_weights(weights, y) -> np.ndarray:
    """Accept None, a scalar, a per-sample array, or a ClassWeights-like object."""
    n = len(y)
    if weights is None:
        return np.ones(n)
    if hasattr(weights, "per_sample"):
        return weights.per_sample(y)
    w = np.asarray(weights, dtype=np.float64)
    return np.full(n, float(w)) if w.ndim == 0 else w.reshape(n)


class LinearModel:
    """Linear classifier ``f(x) = w.x + b`` with kind-specific SGD updates."""

    def __init__(self, kind: str = "perceptron", n_features: int = N_FEATURES,
                 eta: float = DEFAULT_ETA, l2: float = DEFAULT_L2, seed: int = 42):
        if kind not in LINEAR_KINDS:
            raise ValueError(f"unknown linear kind {kind!r}")
        if not eta > 0:
            raise ValueError("eta must be > 0")
        if l2 < 0:
            raise ValueError("l2 must be >= 0")
        self.kind = kind
        self.n_features = n_features
        self.eta = float(eta)
        self.l2 = float(l2) if kind == "svm" else 0.0
        self.seed = int(seed)
        self.w = np.zeros(n_features)
        self.b = 0.0
        self.samples_seen = 0
        self.batch_index = 0

    # scoring

    def decision(self, X) -> np.ndarray:
        X, _ = _check_inputs(X, n_features=self.n_features)
        return X @ self.w + self.b

    def score(self, x) -> float:
        """Raw margin ``w.x + b`` of one sample."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise ValueError(f"expected {self.n_features} features, got shape {x.shape}")
        return float(x @ self.w + self.b)

    def proba(self, x) -> float:
        return _sigmoid_scalar(self.score(x))

    def predict(self, x) -> int:
        return int(self.predict_batch(np.asarray(x).reshape(1, -1))[0])

    def scores(self, X) -> np.ndarray:
        return self.decision(X)

    def predict_batch(self, X) -> np.ndarray:
        z = self.decision(X)
        if self.kind == "logistic":
            return (sigmoid(z) >= 0.5).astype(np.int64)
        return (z > 0).astype(np.int64)

    # training

    def sgd_update(self, x, y: int, weight: float = 1.0) -> None:
        x, _ = _check_inputs(x, [y], self.n_features)
        self._run(x, np.array([y]), np.array([float(weight)]))

    def _run(self, X: np.ndarray, y: np.ndarray, sw: np.ndarray) -> None:
        w, b, eta = self.w, self.b, self.eta
        kind = self.kind
        decay = 1.0 - eta * self.l2
        for x, label, weight in zip(X, y.tolist(), sw.tolist()):
            if kind == "logistic":
                g = eta * weight * (label - _sigmoid_scalar(float(x @ w) + b))
                w += g * x
                b += g
                continue
            s = 1.0 if label == 1 else -1.0
            if kind == "perceptron":
                if s * (float(x @ w) + b) <= 0.0:
                    step = eta * weight * s
                    w += step * x
                    b += step
            else:
                if decay != 1.0:
                    w *= decay
                if s * (float(x @ w) + b) < 1.0:
                    step = eta * weight * s
                    w += step * x
                    b += step
        if not (np.isfinite(w).all() and math.isfinite(b)):
            raise FloatingPointError("non-finite parameters after update")
        self.b = b
        self.samples_seen += len(y)

    def partial_fit(self, X, y, weights=None) -> int:
        """One ordered pass over the batch. Returns the number of samples used."""
        if len(y) == 0:
            return 0
        X, y = _check_inputs(X, y, self.n_features)
        self._run(X, y, _sample_weights(weights, y))
        return len(y)

    def fit_offline(self, X, y, epochs: int = DEFAULT_LINEAR_EPOCHS, weights=None) -> TrainReport:
        return _fit_offline(self, X, y, epochs, weights)

    def loss(self, X, y) -> float:
        X, y = _check_inputs(X, y, self.n_features)
        z = X @ self.w + self.b
        s = 2.0 * y - 1.0
        if self.kind == "logistic":
            return float(np.mean(np.logaddexp(0.0, -s * z)))
        if self.kind == "perceptron":
            return float(np.mean(np.maximum(0.0, -s * z)))
        return float(np.mean(np.maximum(0.0, 1.0 - s * z)) + 0.5 * self.l2 * self.w @ self.w)

    # persistence

    def hyperparameters(self) -> dict:
        return {"eta": self.eta, "l2": self.l2, "n_features": self.n_features}

    def params(self) -> list[float]:
        return self.w.tolist() + [self.b]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "hyperparameters": self.hyperparameters(),
            "seed": self.seed,
            "params": self.params(),
            "provenance": {"samples_seen": self.samples_seen, "batch_index": self.batch_index},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> LinearModel:
        hp = doc["hyperparameters"]
        m = cls(doc["kind"], hp["n_features"], hp["eta"], hp["l2"], doc["seed"])
        params = np.asarray(doc["params"], dtype=np.float64)
        if params.shape != (m.n_features + 1,):
            raise CheckpointError("parameter vector length does not match n_features")
        m.w = params[:-1].copy()
        m.b = float(params[-1])
        prov = doc.get("provenance", {})
        m.samples_seen = int(prov.get("samples_seen", 0))
        m.batch_index = int(prov.get("batch_index", 0))
        return m

    def copy(self) -> LinearModel:
        return copy.deepcopy(self)


class MlpModel:
    """ReLU network ``n_features -> h1 -> h2 -> 2`` with a softmax output."""

    kind = "mlp"

    def __init__(self, n_features: int = N_FEATURES, hidden=DEFAULT_HIDDEN,
                 eta: float = DEFAULT_MLP_ETA, seed: int = 42, init: str = "xavier"):
        if not eta > 0:
            raise ValueError("eta must be > 0")
        self.n_features = n_features
        self.hidden = tuple(int(h) for h in hidden)
        self.eta = float(eta)
        self.seed = int(seed)
        self.sizes = (n_features, *self.hidden, 2)
        rng = np.random.default_rng(self.seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if init == "zeros":
                W = np.zeros((fan_in, fan_out))
            else:
                limit = math.sqrt(6.0 / (fan_in + fan_out))
                W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.weights.append(W)
            self.biases.append(np.zeros(fan_out))
        self.samples_seen = 0
        self.batch_index = 0

    @classmethod
    def zeros(cls, n_features: int = N_FEATURES, hidden=DEFAULT_HIDDEN, **kw) -> MlpModel:
        return cls(n_features, hidden, init="zeros", **kw)

    def forward(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Return (logits, probabilities); works on one sample or a batch."""
        h = np.asarray(X, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
        if not np.isfinite(h).all():
            raise FloatingPointError("non-finite activations")
        return h, softmax(h)

    def scores(self, X) -> np.ndarray:
        X, _ = _check_inputs(X, n_features=self.n_features)
        return self.forward(X)[1][:, 1]

    def score(self, x) -> float:
        """Softmax probability of the malicious class."""
        return float(self.scores(np.asarray(x).reshape(1, -1))[0])

    def predict_batch(self, X) -> np.ndarray:
        X, _ = _check_inputs(X, n_features=self.n_features)
        # argmax; ties go to class 0
        logits = self.forward(X)[0]
        return (logits[:, 1] > logits[:, 0]).astype(np.int64)

    def predict(self, x) -> int:
        return int(self.predict_batch(np.asarray(x).reshape(1, -1))[0])

    # gradients

    def _forward_cache(self, x: np.ndarray):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        if not np.isfinite(h).all():
            raise FloatingPointError("non-finite activations")
        return acts

    def _backward(self, acts, dz: np.ndarray):
        gW = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        delta = dz
        for i in range(len(self.weights) - 1, -1, -1):
            gW[i] = np.outer(acts[i], delta)
            gb[i] = delta
            if i:
                delta = (self.weights[i] @ delta) * (acts[i] > 0)
        return gW, gb

    def gradients(self, x, y: int, weight: float = 1.0):
        """Weighted cross-entropy loss and its gradients for one sample."""
        acts = self._forward_cache(np.asarray(x, dtype=np.float64))
        p = softmax(acts[-1])
        loss = -weight * math.log(max(p[y], 1e-300))
        dz = p.copy()
        dz[y] -= 1.0
        gW, gb = self._backward(acts, weight * dz)
        return loss, gW, gb

    def apply_step(self, gW, gb, eta: float | None = None) -> None:
        eta = self.eta if eta is None else eta
        for W, b, dW, db in zip(self.weights, self.biases, gW, gb):
            W -= eta * dW
            b -= eta * db

    def backprop_update(self, x, y: int, weight: float = 1.0) -> float:
        loss, gW, gb = self.gradients(x, int(y), weight)
        self.apply_step(gW, gb)
        self.samples_seen += 1
        return loss

    def partial_fit(self, X, y, weights=None) -> int:
        if len(y) == 0:
            return 0
        X, y = _check_inputs(X, y, self.n_features)
        sw = _sample_weights(weights, y)
        for x, label, w in zip(X, y.tolist(), sw.tolist()):
            self.backprop_update(x, label, w)
        return len(y)

    def fit_offline(self, X, y, epochs: int = DEFAULT_MLP_EPOCHS, weights=None) -> TrainReport:
        return _fit_offline(self, X, y, epochs, weights)

    def loss(self, X, y) -> float:
        X, y = _check_inputs(X, y, self.n_features)
        logits = self.forward(X)[0]
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-np.mean(logp[np.arange(len(y)), y]))

    # persistence

    def hyperparameters(self) -> dict:
        return {"eta": self.eta, "hidden": list(self.hidden), "n_features": self.n_features}

    def params(self) -> list[float]:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts += [W.ravel(), b]
        return np.concatenate(parts).tolist()

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        expected = sum(W.size + b.size for W, b in zip(self.weights, self.biases))
        if flat.shape != (expected,):
            raise CheckpointError(f"expected {expected} parameters, got {flat.size}")
        pos = 0
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos:pos + W.size].reshape(W.shape).copy()
            pos += W.size
            self.biases[i] = flat[pos:pos + b.size].copy()
            pos += b.size

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "hyperparameters": self.hyperparameters(),
            "seed": self.seed,
            "params": self.params(),
            "provenance": {"samples_seen": self.samples_seen, "batch_index": self.batch_index},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> MlpModel:
        hp = doc["hyperparameters"]
        m = cls.zeros(hp["n_features"], hp["hidden"], eta=hp["eta"], seed=doc["seed"])
        m.set_params(doc["params"])
        prov = doc.get("provenance", {})
        m.samples_seen = int(prov.get("samples_seen", 0))
        m.batch_index = int(prov.get("batch_index", 0))
        return m

    def copy(self) -> MlpModel:
        return copy.deepcopy(self)

    def frozen(self) -> MlpModel:
        """Deep copy whose parameter arrays are read-only."""
        twin = self.copy()
        for arr in twin.weights + twin.biases:
            arr.flags.writeable = False
        return twin


@dataclass
class LwfConfig:
    distill_weight: float = 1.0
    temperature: float = 2.0

    def __post_init__(self):
        if self.distill_weight < 0:
            raise ValueError("distill_weight must be >= 0")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def lwf_loss(student: MlpModel, teacher_logits, x, y: int, cfg: LwfConfig,
             weight: float = 1.0):
    """Cross-entropy plus ``lambda * T^2 * KL(teacher_T || student_T)``.

    Returns (loss, weight gradients, bias gradients). The class weight
    scales the cross-entropy term only.
    """
    if not cfg.temperature > 0:
        raise ValueError("temperature must be > 0")
    acts = student._forward_cache(np.asarray(x, dtype=np.float64))
    z_s = acts[-1]
    p = softmax(z_s)
    ce = -weight * math.log(max(p[y], 1e-300))
    dz = p.copy()
    dz[y] -= 1.0
    dz *= weight
    loss = ce
    if cfg.distill_weight:
        T = cfg.temperature
        p_t = softmax(teacher_logits, T)
        p_s = softmax(z_s, T)
        loss += cfg.distill_weight * T * T * kl_divergence(p_t, p_s)
        # d/dz of T^2 KL(p_t || softmax(z/T)) is T (p_s - p_t)
        dz = dz + cfg.distill_weight * T * (p_s - p_t)
    gW, gb = student._backward(acts, dz)
    return loss, gW, gb


class LwfMlp:
    """MLP updated incrementally with a distillation pull toward a frozen teacher."""

    kind = "mlp_lwf"

    def __init__(self, student: MlpModel, cfg: LwfConfig | None = None,
                 teacher: MlpModel | None = None):
        self.student = student
        self.cfg = cfg or LwfConfig()
        self.teacher = (teacher if teacher is not None else student).frozen()

    @property
    def n_features(self) -> int:
        return self.student.n_features

    @property
    def samples_seen(self) -> int:
        return self.student.samples_seen

    @property
    def batch_index(self) -> int:
        return self.student.batch_index

    @batch_index.setter
    def batch_index(self, value: int) -> None:
        self.student.batch_index = value

    def scores(self, X):
        return self.student.scores(X)

    def score(self, x):
        return self.student.score(x)

    def predict_batch(self, X):
        return self.student.predict_batch(X)

    def predict(self, x):
        return self.student.predict(x)

    def partial_fit(self, X, y, weights=None) -> int:
        if len(y) == 0:
            return 0
        X, y = _check_inputs(X, y, self.n_features)
        sw = _sample_weights(weights, y)
        teacher_logits = self.teacher.forward(X)[0]
        s = self.student
        for x, zt, label, w in zip(X, teacher_logits, y.tolist(), sw.tolist()):
            _, gW, gb = lwf_loss(s, zt, x, label, self.cfg, w)
            s.apply_step(gW, gb)
            s.samples_seen += 1
        return len(y)

    def params(self) -> list[float]:
        return self.student.params()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "hyperparameters": {"distill_weight": self.cfg.distill_weight,
                                "temperature": self.cfg.temperature},
            "seed": self.student.seed,
            "student": self.student.to_dict(),
            "teacher": self.teacher.to_dict(),
            "provenance": {"samples_seen": self.samples_seen, "batch_index": self.batch_index},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> LwfMlp:
        hp = doc["hyperparameters"]
        return cls(MlpModel.from_dict(doc["student"]),
                   LwfConfig(hp["distill_weight"], hp["temperature"]),
                   MlpModel.from_dict(doc["teacher"]))

    def copy(self) -> LwfMlp:
        return LwfMlp(self.student.copy(), LwfConfig(self.cfg.distill_weight, self.cfg.temperature),
                      self.teacher)


def _fit_offline(model, X, y, epochs, weights) -> TrainReport:
    """``epochs`` full passes, each in a freshly seeded shuffled order."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    X, y = _check_inputs(X, y, model.n_features)
    if len(y) == 0:
        raise ValueError("cannot train on an empty set")
    sw = _sample_weights(weights, y)
    rng = np.random.default_rng([model.seed, 0x0FF1])
    start = time.perf_counter()
    for _ in range(epochs):
        order = rng.permutation(len(y))
        model.partial_fit(X[order], y[order], sw[order])
    wall = time.perf_counter() - start
    return TrainReport(len(y) * epochs, epochs, wall, model.loss(X, y))


def make_model(kind: str, n_features: int = N_FEATURES, eta: float | None = None,
               l2: float = DEFAULT_L2, seed: int = 42, hidden=DEFAULT_HIDDEN):
    if kind == "mlp":
        return MlpModel(n_features, hidden, DEFAULT_MLP_ETA if eta is None else eta, seed)
    return LinearModel(kind, n_features, DEFAULT_ETA if eta is None else eta, l2, seed)


def model_from_dict(doc: dict):
    kind = doc.get("kind")
    if kind in LINEAR_KINDS:
        return LinearModel.from_dict(doc)
    if kind == "mlp":
        return MlpModel.from_dict(doc)
    if kind == "mlp_lwf":
        return LwfMlp.from_dict(doc)
    raise CheckpointError(f"unknown model kind {kind!r}")


def save_checkpoint(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()) + "\n")


def load_checkpoint(path: str | Path, kind: str | None = None,
                    n_features: int = N_FEATURES):
    """Load a model checkpoint, checking kind and feature count when asked."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc.msg})") from None
    model = model_from_dict(doc)
    if kind is not None and model.kind != kind:
        raise CheckpointError(f"{path}: checkpoint kind {model.kind!r}, expected {kind!r}")
    if model.n_features != n_features:
        raise CheckpointError(
            f"{path}: checkpoint has {model.n_features} features, expected {n_features}")
    return model
