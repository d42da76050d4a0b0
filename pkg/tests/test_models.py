import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowdrift.models import (
    CheckpointError, LinearModel, LwfConfig, LwfMlp, MlpModel, kl_divergence, load_checkpoint,
    lwf_loss, save_checkpoint, softmax,
)


def onehot(i, n=28):
    x = np.zeros(n)
    x[i] = 1.0
    return x


# independent numeric helpers (no model code involved)

def ref_loss(weights, biases, x, y):
    h = x
    for i, (W, b) in enumerate(zip(weights, biases)):
        h = h @ W + b
        if i < len(weights) - 1:
            h = np.where(h > 0, h, 0.0)
    m = max(h)
    return -(h[y] - m - math.log(sum(math.exp(v - m) for v in h)))


def finite_diff(model, x, y, eps=1e-5):
    grads = []
    for group in (model.weights, model.biases):
        gs = []
        for arr in group:
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + eps
                up = ref_loss(model.weights, model.biases, x, y)
                arr[idx] = orig - eps
                down = ref_loss(model.weights, model.biases, x, y)
                arr[idx] = orig
                g[idx] = (up - down) / (2 * eps)
            gs.append(g)
        grads.append(gs)
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        den = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / den)))
    return worst


class TestLinearScore:
    def test_zero_model(self):
        m = LinearModel("perceptron")
        assert m.score(np.random.default_rng(0).random(28)) == 0

    def test_weighted(self):
        m = LinearModel("svm")
        m.w[0], m.b = 1.0, -0.5
        assert m.score(onehot(0)) == 0.5

    def test_logistic_probability_at_zero(self):
        assert LinearModel("logistic").proba(np.zeros(28)) == 0.5

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            LinearModel("perceptron").score(np.zeros(27))


class TestPredict:
    @pytest.mark.parametrize("kind", ["perceptron", "svm"])
    def test_margin_thresholds(self, kind):
        m = LinearModel(kind)
        assert m.predict(np.zeros(28)) == 0  # tie is benign
        m.b = 0.3
        assert m.predict(np.zeros(28)) == 1
        m.b = -0.3
        assert m.predict(np.zeros(28)) == 0

    def test_logistic_threshold(self):
        m = LinearModel("logistic")
        assert m.predict(np.zeros(28)) == 1  # sigma(0) = 0.5 >= 0.5
        m.b = -0.1
        assert m.predict(np.zeros(28)) == 0
        m.b = 0.1
        assert m.predict(np.zeros(28)) == 1


class TestSgdUpdate:
    def test_perceptron_correct_margin_no_change(self):
        m = LinearModel("perceptron")
        m.w[0], m.b = 2.0, 0.0
        m.sgd_update(onehot(0), 1)
        assert m.w[0] == 2.0 and m.b == 0.0 and not m.w[1:].any()

    def test_logistic_hand_step(self):
        m = LinearModel("logistic", n_features=2, eta=0.1)
        m.sgd_update(np.array([1.0, 1.0]), 1)
        np.testing.assert_allclose(m.w, [0.05, 0.05], rtol=1e-15)
        assert m.b == pytest.approx(0.05, rel=1e-15)

    def test_svm_hinge_active(self):
        m = LinearModel("svm", n_features=2, eta=0.1, l2=0.0)
        m.w[:] = [0.5, 0.0]
        x = np.array([1.0, 2.0])
        m.sgd_update(x, 1)  # margin 0.5 < 1
        np.testing.assert_allclose(m.w, [0.5 + 0.1, 0.2])
        assert m.b == pytest.approx(0.1)

    def test_svm_decay_without_hinge(self):
        m = LinearModel("svm", n_features=2, eta=0.1, l2=0.5)
        m.w[:] = [4.0, 0.0]
        m.sgd_update(np.array([1.0, 0.0]), 1)  # margin after decay 3.8 >= 1
        np.testing.assert_allclose(m.w, [4.0 * 0.95, 0.0])
        assert m.b == 0.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            LinearModel("logistic").sgd_update(np.full(28, np.nan), 1)

    def test_logistic_gradient_matches_finite_difference(self, rng):
        m = LinearModel("logistic", n_features=5, eta=1.0)
        m.w[:] = rng.normal(size=5)
        m.b = 0.3
        x, y = rng.normal(size=5), 1

        def loss(w, b):
            z = x @ w + b
            return math.log1p(math.exp(-z)) if y == 1 else math.log1p(math.exp(z))

        eps = 1e-6
        num = []
        for i in range(5):
            d = np.zeros(5)
            d[i] = eps
            num.append((loss(m.w + d, m.b) - loss(m.w - d, m.b)) / (2 * eps))
        num.append((loss(m.w, m.b + eps) - loss(m.w, m.b - eps)) / (2 * eps))
        before = np.r_[m.w, m.b]
        m.sgd_update(x, y)  # eta=1: the step equals the negative gradient
        step = np.r_[m.w, m.b] - before
        np.testing.assert_allclose(-step, num, rtol=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_perceptron_skips_positive_margin(seed):
    rng = np.random.default_rng(seed)
    m = LinearModel("perceptron")
    m.w[:] = rng.normal(size=28)
    m.b = float(rng.normal())
    x = rng.random(28)
    y = int(m.score(x) > 0)
    if m.score(x) == 0:
        return
    before = m.params()
    m.sgd_update(x, y)
    assert m.params() == before


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_svm_no_update_outside_margin(seed):
    rng = np.random.default_rng(seed)
    m = LinearModel("svm", l2=0.0)
    m.w[:] = rng.normal(size=28)
    X = rng.random((30, 28))
    z = X @ m.w
    y = (z > 0).astype(int)
    keep = np.abs(z) >= 1
    before = m.params()
    m.partial_fit(X[keep], y[keep])
    assert m.params() == before


@pytest.mark.parametrize("kind,l2", [("perceptron", 0.0), ("logistic", 0.0), ("svm", 0.0)])
def test_class_weight_equals_scaled_eta(kind, l2, rng):
    x = rng.random(28)
    a = LinearModel(kind, eta=0.01, l2=l2)
    b = LinearModel(kind, eta=0.01 * 3.0, l2=l2)
    a.w[:] = b.w[:] = rng.normal(size=28) * 0.01
    a.sgd_update(x, 1, weight=3.0)
    b.sgd_update(x, 1)
    assert a.params() == b.params()


class TestTraining:
    def test_perceptron_separable(self, rng):
        X = rng.random((200, 28))
        y = (X[:, 0] > X[:, 1]).astype(int)
        m = LinearModel("perceptron", eta=0.1)
        m.fit_offline(X, y, epochs=100)
        assert (m.predict_batch(X) == y).mean() == 1.0

    def test_zero_epochs(self):
        with pytest.raises(ValueError):
            LinearModel("perceptron").fit_offline(np.zeros((3, 28)), [0, 1, 0], epochs=0)

    def test_logistic_blobs(self):
        rng = np.random.default_rng(11)
        mu = np.zeros(28)
        mu[:3] = 0.15
        y = np.repeat([0, 1], 100)
        X = 0.5 + rng.normal(0, 0.05, size=(200, 28)) + np.where(y[:, None] == 1, mu, -mu)
        # oracle: best threshold on the generating mean-difference direction
        proj = X @ mu
        best = max(((proj > t) == y).mean() for t in proj)
        assert best >= 0.95
        m = LinearModel("logistic", eta=0.1)
        report = m.fit_offline(X, y, epochs=20)
        assert (m.predict_batch(X) == y).mean() >= 0.95
        assert report.samples_seen == 4000 and report.epochs == 20

    @pytest.mark.parametrize("kind", ["perceptron", "logistic", "svm", "mlp"])
    def test_partial_fit_concatenation(self, kind, rng):
        X = rng.random((40, 28))
        y = rng.integers(0, 2, 40)
        make = (lambda: MlpModel(hidden=(8, 8), seed=3)) if kind == "mlp" else (lambda: LinearModel(kind))
        a, b = make(), make()
        a.partial_fit(X[:25], y[:25])
        a.partial_fit(X[25:], y[25:])
        b.partial_fit(X, y)
        assert a.params() == b.params()

    def test_empty_batch_noop(self):
        m = LinearModel("svm")
        assert m.partial_fit(np.zeros((0, 28)), np.zeros(0)) == 0
        assert m.params() == [0.0] * 29

    def test_single_sample_batch_is_sgd_update(self, rng):
        x = rng.random(28)
        a, b = LinearModel("logistic"), LinearModel("logistic")
        a.partial_fit(x[None, :], [1])
        b.sgd_update(x, 1)
        assert a.params() == b.params()

    @pytest.mark.parametrize("kind", ["perceptron", "mlp"])
    def test_deterministic(self, kind, rng):
        X = rng.random((60, 28))
        y = rng.integers(0, 2, 60)
        runs = []
        for _ in range(2):
            m = MlpModel(hidden=(8, 8), seed=9) if kind == "mlp" else LinearModel(kind, seed=9)
            m.fit_offline(X, y, epochs=3)
            runs.append(m.params())
        assert runs[0] == runs[1]


class TestMlp:
    def test_zero_network_is_uniform(self):
        _, p = MlpModel.zeros().forward(np.random.default_rng(0).random(28))
        assert p.tolist() == [0.5, 0.5]

    def test_gradient_check(self):
        rng = np.random.default_rng(5)
        m = MlpModel(hidden=(4, 4), seed=5)
        for b in m.biases:
            b[:] = rng.normal(0, 0.1, b.shape)
        worst = 0.0
        for _ in range(10):
            x, y = rng.random(28), int(rng.integers(2))
            _, gW, gb = m.gradients(x, y)
            nW, nb = finite_diff(m, x, y)
            worst = max(worst, max_rel_error(gW + gb, nW + nb))
        assert worst < 1e-4

    def test_step_decreases_loss(self, rng):
        m = MlpModel(hidden=(16, 16), eta=1e-3, seed=1)
        x = rng.random(28)
        before = m.loss(x[None, :], [1])
        m.backprop_update(x, 1)
        assert m.loss(x[None, :], [1]) < before

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_softmax_sums_to_one(self, seed):
        rng = np.random.default_rng(seed)
        m = MlpModel(hidden=(8, 8), seed=seed)
        _, p = m.forward(rng.normal(0, 5, size=(7, 28)))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_activation_raises(self):
        m = MlpModel(hidden=(4, 4))
        m.weights[0][:] = 1e308
        with pytest.raises(FloatingPointError):
            m.forward(np.full(28, 10.0))

    def test_score_is_malicious_probability(self, rng):
        m = MlpModel(hidden=(8, 8))
        x = rng.random(28)
        assert m.score(x) == pytest.approx(m.forward(x)[1][1])


class TestLwf:
    def test_kl_hand_value(self):
        pt = [math.exp(2) / (math.exp(2) + 1), 1 / (math.exp(2) + 1)]
        hand = pt[0] * math.log(pt[0] / 0.5) + pt[1] * math.log(pt[1] / 0.5)
        assert hand == pytest.approx(0.3278, abs=5e-5)
        assert kl_divergence(softmax([2.0, 0.0]), softmax([0.0, 0.0])) == pytest.approx(hand, rel=1e-12)

    def test_kl_zero_when_logits_match(self, rng):
        m = MlpModel(hidden=(8, 8))
        x = rng.random(28)
        z = m.forward(x)[0]
        loss, _, _ = lwf_loss(m, z, x, 1, LwfConfig(1.0, 2.0))
        ce = -math.log(softmax(z)[1])
        assert loss == pytest.approx(ce, rel=1e-12)

    def test_loss_includes_scaled_kl(self, rng):
        m = MlpModel(hidden=(8, 8))
        x = rng.random(28)
        z_s = m.forward(x)[0]
        z_t = z_s + np.array([1.5, -0.5])
        T, lam = 2.0, 0.7
        loss, _, _ = lwf_loss(m, z_t, x, 0, LwfConfig(lam, T))
        expected = -math.log(softmax(z_s)[0]) + lam * T * T * kl_divergence(
            softmax(z_t / T), softmax(z_s / T))
        assert loss == pytest.approx(expected, rel=1e-12)

    def test_lwf_gradient_matches_finite_difference(self, rng):
        m = MlpModel(hidden=(4, 4), seed=2)
        x = rng.random(28)
        z_t = np.array([0.8, -0.3])
        cfg = LwfConfig(0.9, 1.7)
        _, gW, gb = lwf_loss(m, z_t, x, 1, cfg)

        def total(model):
            return lwf_loss(model, z_t, x, 1, cfg)[0]

        eps = 1e-5
        worst = 0.0
        for arr, g in zip(m.weights + m.biases, gW + gb):
            for idx in list(np.ndindex(arr.shape))[:40]:
                orig = arr[idx]
                arr[idx] = orig + eps
                up = total(m)
                arr[idx] = orig - eps
                down = total(m)
                arr[idx] = orig
                num = (up - down) / (2 * eps)
                worst = max(worst, abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-8))
        assert worst < 1e-4

    def test_bad_temperature(self):
        with pytest.raises(ValueError):
            LwfConfig(1.0, 0.0)

    def test_zero_lambda_matches_plain(self, rng):
        X = rng.random((300, 28))
        y = rng.integers(0, 2, 300)
        base = MlpModel(hidden=(16, 16), seed=4)
        plain = base.copy()
        lwf = LwfMlp(base.copy(), LwfConfig(0.0, 2.0), teacher=base)
        for lo in range(0, 300, 100):
            plain.partial_fit(X[lo:lo + 100], y[lo:lo + 100])
            lwf.partial_fit(X[lo:lo + 100], y[lo:lo + 100])
            assert plain.params() == lwf.params()

    def test_teacher_frozen(self, rng):
        base = MlpModel(hidden=(8, 8))
        lwf = LwfMlp(base.copy(), teacher=base)
        before = lwf.teacher.params()
        lwf.partial_fit(rng.random((20, 28)), rng.integers(0, 2, 20))
        assert lwf.teacher.params() == before
        with pytest.raises(ValueError):
            lwf.teacher.weights[0][0, 0] = 1.0


class TestCheckpoints:
    @pytest.mark.parametrize("kind", ["perceptron", "logistic", "svm"])
    def test_linear_roundtrip(self, kind, tmp_path, rng):
        m = LinearModel(kind, eta=0.03, l2=1e-3, seed=17)
        m.fit_offline(rng.random((50, 28)), rng.integers(0, 2, 50), epochs=2)
        m.batch_index = 4
        save_checkpoint(m, tmp_path / "m.json")
        back = load_checkpoint(tmp_path / "m.json", kind=kind)
        assert back.params() == m.params()
        assert (back.kind, back.eta, back.l2, back.seed) == (m.kind, m.eta, m.l2, m.seed)
        assert back.samples_seen == 100 and back.batch_index == 4

    def test_mlp_and_lwf_roundtrip(self, tmp_path, rng):
        m = MlpModel(hidden=(8, 4), seed=3)
        m.partial_fit(rng.random((10, 28)), rng.integers(0, 2, 10))
        save_checkpoint(m, tmp_path / "m.json")
        back = load_checkpoint(tmp_path / "m.json")
        assert back.params() == m.params() and back.hidden == (8, 4)
        lwf = LwfMlp(m.copy(), LwfConfig(0.5, 3.0), teacher=m)
        save_checkpoint(lwf, tmp_path / "l.json")
        lb = load_checkpoint(tmp_path / "l.json")
        assert lb.params() == lwf.params() and lb.teacher.params() == m.params()
        assert lb.cfg == lwf.cfg

    def test_kind_mismatch(self, tmp_path):
        save_checkpoint(LinearModel("svm"), tmp_path / "m.json")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "m.json", kind="logistic")

    def test_feature_count_mismatch(self, tmp_path):
        save_checkpoint(LinearModel("svm", n_features=10), tmp_path / "m.json")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "m.json")
