import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowdrift.features import SampleSet
from flowdrift.preprocess import (
    ClassWeights, MinMaxScaler, NotFittedError, SplitPlan, batches, class_weights,
    fit_minmax, n_batches, oversample_minority, split, transform,
)


def column_set(col, n_features=28):
    X = np.zeros((len(col), n_features))
    X[:, 0] = col
    return SampleSet(X, np.zeros(len(col), dtype=int))


class TestMinMax:
    def test_fit(self):
        sc = fit_minmax(column_set([0.0, 5.0, 10.0]))
        assert sc.min_[0] == 0 and sc.max_[0] == 10

    def test_constant(self):
        sc = fit_minmax(column_set([7.0, 7.0]))
        assert sc.min_[0] == sc.max_[0] == 7
        assert sc.transform(np.full((1, 28), 123.0))[0, 0] == 0

    def test_transform_midpoint(self):
        sc = fit_minmax(column_set([0.0, 10.0]))
        x = np.zeros((1, 28))
        x[0, 0] = 5
        assert sc.transform(x)[0, 0] == 0.5

    def test_clip(self):
        lo, hi = np.zeros(28), np.full(28, 10.0)
        x = np.full((1, 28), 15.0)
        assert MinMaxScaler(lo, hi, clip=True).transform(x)[0, 0] == 1.0
        assert MinMaxScaler(lo, hi, clip=False).transform(x)[0, 0] == 1.5

    def test_unfitted(self):
        with pytest.raises(NotFittedError):
            MinMaxScaler().transform(np.zeros((1, 28)))

    def test_empty(self):
        with pytest.raises(ValueError):
            fit_minmax(SampleSet(np.zeros((0, 28)), []))

    def test_presence_mask_ignored_entries(self):
        X = np.array([[1.0] * 28, [0.0] * 28, [3.0] * 28])
        present = np.ones((3, 28), dtype=bool)
        present[1, 0] = False  # the 0.0 in column 0 is "absent", not a measurement
        sc = fit_minmax(SampleSet(X, [0, 0, 0], present=present))
        assert sc.min_[0] == 1.0 and sc.min_[1] == 0.0

    def test_json_roundtrip(self, tmp_path, rng):
        sc = fit_minmax(SampleSet(rng.normal(size=(20, 28)), np.zeros(20)))
        sc.save(tmp_path / "s.json")
        back = MinMaxScaler.load(tmp_path / "s.json")
        assert (back.min_ == sc.min_).all() and (back.max_ == sc.max_).all()
        assert json.loads((tmp_path / "s.json").read_text())["clip"] is True

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.integers(2, 60))
    def test_fitting_set_maps_into_unit_interval(self, seed, n):
        X = np.random.default_rng(seed).normal(0, 100, size=(n, 28))
        data = SampleSet(X, np.zeros(n))
        out = transform(fit_minmax(data, clip=False), data).X
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestSplit:
    @pytest.mark.parametrize("n,train,test", [(487_574, 438_816, 48_758),
                                              (728_316, 655_484, 72_832)])
    def test_table_sizes(self, n, train, test):
        plan = SplitPlan(0.9, seed=1)
        assert plan.train_size(n) == train
        assert n - plan.train_size(n) == test

    def test_deterministic(self):
        data = SampleSet(np.arange(280.0).reshape(10, 28), np.arange(10) % 2)
        a = split(data, SplitPlan(0.9, seed=5))
        b = split(data, SplitPlan(0.9, seed=5))
        assert (a[0].ids == b[0].ids).all() and (a[1].ids == b[1].ids).all()
        assert len(a[0]) == 9

    def test_too_small(self):
        with pytest.raises(ValueError):
            split(SampleSet(np.zeros((1, 28)), [0]))

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            SplitPlan(1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 500), st.floats(0.05, 0.95), st.integers(0, 1000), st.booleans())
    def test_partition(self, n, frac, seed, shuffle):
        data = SampleSet(np.zeros((n, 28)), np.zeros(n))
        train, test = split(data, SplitPlan(frac, seed, shuffle))
        assert sorted(np.concatenate([train.ids, test.ids])) == list(range(n))
        assert not set(train.ids) & set(test.ids)


class TestBatches:
    def test_sizes(self):
        stream = batches(SampleSet(np.zeros((25, 28)), np.zeros(25)), 10)
        assert [len(b) for b in stream] == [10, 10, 5]
        assert len(stream) == 3

    def test_large_split_count(self):
        assert n_batches(655_484, 10_000) == 66

    def test_empty(self):
        assert list(batches(SampleSet(np.zeros((0, 28)), []), 10)) == []

    def test_zero_batch_size(self):
        with pytest.raises(ValueError):
            batches(SampleSet(np.zeros((3, 28)), np.zeros(3)), 0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 300), st.integers(1, 50))
    def test_concatenation_is_input(self, n, b):
        data = SampleSet(np.zeros((n, 28)), np.zeros(n))
        parts = list(batches(data, b))
        ids = np.concatenate([p.ids for p in parts]) if parts else np.array([], dtype=int)
        assert ids.tolist() == list(range(n))
        assert all(len(p) == b for p in parts[:-1])


class TestClassWeights:
    def test_balanced(self):
        w = class_weights(SampleSet(np.zeros((100, 28)), [0] * 50 + [1] * 50))
        assert w.weights == {0: 1.0, 1: 1.0}

    def test_imbalanced(self):
        w = class_weights(SampleSet(np.zeros((100, 28)), [0] * 90 + [1] * 10))
        assert w[0] == pytest.approx(100 / 180)
        assert w[1] == pytest.approx(5.0)

    def test_override(self):
        assert class_weights([], override={0: 1, 1: 3}).weights == {0: 1.0, 1: 3.0}

    def test_single_class(self):
        with pytest.raises(ValueError):
            class_weights(SampleSet(np.zeros((5, 28)), [1] * 5))

    def test_positive(self):
        with pytest.raises(ValueError):
            ClassWeights({0: 0.0, 1: 1.0})


def test_oversample_reaches_parity():
    data = SampleSet(np.zeros((100, 28)), [0] * 90 + [1] * 10)
    out = oversample_minority(data, seed=3)
    assert int(out.y.sum()) == 90 and len(out) == 180
    assert (oversample_minority(data, seed=3).ids == out.ids).all()
