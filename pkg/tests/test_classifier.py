import logging

import numpy as np
import pytest
from scipy.special import expit

from rarefind.classifier import (
    ClassifierConfig,
    ClassifierModel,
    LabeledPool,
    predict,
    train,
)


def pool_from(ids, labels):
    pool = LabeledPool()
    pool.extend(ids, labels)
    return pool


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"C": 0.0}, {"C": -1.0}, {"tolerance": 0.0}, {"max_epochs": 0},
        {"class_weighting": "sqrt"},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            ClassifierConfig(**kwargs)


class TestLabeledPool:
    def test_insertion_order_preserved(self):
        pool = pool_from([9, 3, 7], [1, 0, 1])
        np.testing.assert_array_equal(pool.ids(), [9, 3, 7])
        np.testing.assert_array_equal(pool.labels(), [1, 0, 1])
        np.testing.assert_array_equal(pool.positives(), [9, 7])
        np.testing.assert_array_equal(pool.negatives(), [3])

    def test_relabel_overwrites_with_warning(self, caplog):
        pool = pool_from([1, 2], [1, 0])
        with caplog.at_level(logging.WARNING):
            pool.add(1, 0)
        assert "relabeled" in caplog.text
        assert len(pool) == 2
        np.testing.assert_array_equal(pool.labels(), [0, 0])
        np.testing.assert_array_equal(pool.ids(), [1, 2])  # position kept

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            pool_from([0], [2])


class TestTrain:
    def test_symmetric_1d(self, make_dataset):
        x = np.array([[1.0], [1.0], [-1.0], [-1.0]])
        ds = make_dataset(x, [0, 0, 0, 0], class_names=["c0"])
        pool = pool_from([0, 1, 2, 3], [1, 1, 0, 0])
        model = train(pool, ds, ClassifierConfig(seed=0))
        assert model.weights[0] > 0
        boundary = -model.bias / model.weights[0]
        assert abs(boundary) <= 1e-3
        assert model.train_size == 4

    def test_duplicate_inactive_constraint(self, make_dataset):
        # the duplicated positive sits far inside its half-space, so its
        # hinge constraint is inactive and the solution must not move
        rng = np.random.default_rng(2)
        pos = rng.normal(0, 0.2, size=(6, 3)) + [2, 0, 0]
        neg = rng.normal(0, 0.2, size=(6, 3)) - [2, 0, 0]
        deep = np.array([[5.0, 0.0, 0.0]])
        x = np.vstack([pos, neg, deep, deep])
        ds = make_dataset(x, np.zeros(len(x), dtype=int), class_names=["c0"])

        cfg = ClassifierConfig(tolerance=1e-6, seed=1)
        base = pool_from(range(13), [1] * 6 + [0] * 6 + [1])
        dup = pool_from(range(14), [1] * 6 + [0] * 6 + [1, 1])
        margins_base = train(base, ds, cfg).margins(x)
        margins_dup = train(dup, ds, cfg).margins(x)
        np.testing.assert_allclose(margins_dup, margins_base,
                                   atol=10 * cfg.tolerance)

    def test_inseparable_xor_converges(self, make_dataset):
        x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        ds = make_dataset(x, [0] * 4, class_names=["c0"])
        model = train(pool_from(range(4), [1, 1, 0, 0]), ds)
        assert np.all(np.isfinite(model.margins(x)))

    def test_single_class_pool_rejected(self, make_dataset):
        ds = make_dataset(np.ones((3, 2)), [0, 0, 0], class_names=["c0"])
        with pytest.raises(ValueError, match="positive and one negative"):
            train(pool_from([0, 1, 2], [1, 1, 1]), ds)

    def test_out_of_range_id_rejected(self, make_dataset):
        ds = make_dataset(np.ones((3, 2)), [0, 0, 0], class_names=["c0"])
        with pytest.raises(IndexError):
            train(pool_from([0, 99], [1, 0]), ds)

    def test_deterministic_for_fixed_seed(self, blob_dataset):
        members = blob_dataset.class_pool_members(1)[:8]
        others = blob_dataset.class_pool_members(0)[:8]
        pool = pool_from(np.concatenate([members, others]),
                         [1] * 8 + [0] * 8)
        m1 = train(pool, blob_dataset, ClassifierConfig(seed=5))
        m2 = train(pool, blob_dataset, ClassifierConfig(seed=5))
        np.testing.assert_array_equal(m1.weights, m2.weights)
        assert m1.bias == m2.bias

    def test_permutation_robustness(self, blob_dataset):
        members = blob_dataset.class_pool_members(1)[:10]
        others = blob_dataset.class_pool_members(2)[:10]
        ids = np.concatenate([members, others])
        labels = np.array([1] * 10 + [0] * 10)
        cfg = ClassifierConfig(seed=3)
        m1 = train(pool_from(ids, labels), blob_dataset, cfg)
        rng = np.random.default_rng(0)
        perm = rng.permutation(20)
        m2 = train(pool_from(ids[perm], labels[perm]), blob_dataset, cfg)
        x = blob_dataset.features[ids]
        np.testing.assert_allclose(m2.margins(x), m1.margins(x),
                                   atol=10 * cfg.tolerance)

    def test_separable_sets_classified_correctly(self, make_dataset):
        # desk-scale oracle: <= 20 points in two clusters with a wide gap
        rng = np.random.default_rng(9)
        for trial in range(30):
            n_pos = int(rng.integers(1, 10))
            n_neg = int(rng.integers(1, 10))
            dim = int(rng.integers(2, 6))
            center = rng.normal(size=dim)
            center *= 2.0 / np.linalg.norm(center)
            pos = center + rng.normal(0, 0.25, size=(n_pos, dim))
            neg = -center + rng.normal(0, 0.25, size=(n_neg, dim))
            x = np.vstack([pos, neg])
            ds = make_dataset(x, np.zeros(len(x), dtype=int),
                              class_names=["c0"])
            pool = pool_from(range(len(x)), [1] * n_pos + [0] * n_neg)
            model = train(pool, ds, ClassifierConfig(seed=trial))
            preds = predict(model, np.arange(len(x)), ds) >= 0.5
            np.testing.assert_array_equal(
                preds, [True] * n_pos + [False] * n_neg)

    def test_balanced_weighting_shifts_boundary(self, make_dataset):
        rng = np.random.default_rng(4)
        pos = rng.normal(0, 0.3, size=(2, 2)) + [1.5, 0]
        neg = rng.normal(0, 0.3, size=(30, 2)) - [1.5, 0]
        x = np.vstack([pos, neg])
        ds = make_dataset(x, np.zeros(len(x), dtype=int), class_names=["c0"])
        pool = pool_from(range(len(x)), [1] * 2 + [0] * 30)
        uniform = train(pool, ds, ClassifierConfig(class_weighting="uniform"))
        balanced = train(pool, ds, ClassifierConfig(class_weighting="balanced"))
        # heavier minority penalty pushes positive margins up
        assert balanced.margins(pos).min() > uniform.margins(pos).min() - 1e-9


class TestPredict:
    def model(self, weights, bias):
        return ClassifierModel(weights=np.asarray(weights, dtype=float),
                               bias=bias, train_size=2)

    def test_logistic_values(self, make_dataset):
        ds = make_dataset(np.array([[-1.0], [0.0], [1.0]]), [0, 0, 0],
                          class_names=["c0"])
        model = self.model([1.0], 0.0)
        scores = predict(model, np.array([0, 1, 2]), ds)
        expected = [1 / (1 + np.e), 0.5, 1 / (1 + np.exp(-1.0))]
        np.testing.assert_allclose(scores, expected, atol=1e-9)
        assert scores[1] == 0.5

    def test_saturation(self, make_dataset):
        ds = make_dataset(np.array([[20.0]]), [0], class_names=["c0"])
        score = predict(self.model([1.0], 0.0), np.array([0]), ds)[0]
        assert score > 0.999999

    def test_invalid_index(self, make_dataset):
        ds = make_dataset(np.ones((2, 1)), [0, 0], class_names=["c0"])
        with pytest.raises(IndexError):
            predict(self.model([1.0], 0.0), np.array([5]), ds)

    def test_threshold_consistency(self):
        # sign of the raw margin must agree with score >= 0.5 wherever the
        # logistic value is representably distinct from 0.5
        rng = np.random.default_rng(1)
        mags = 10.0 ** rng.uniform(-12, 2, size=5000)
        margins = np.concatenate([mags, -mags, [0.0]])
        scores = expit(margins)
        np.testing.assert_array_equal(scores >= 0.5, margins >= 0.0)

    def test_strictly_increasing_in_margin(self):
        margins = np.arange(-30.0, 30.0, 0.01)
        scores = expit(margins)
        assert np.all(np.diff(scores) > 0)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        weights = np.array([0.25, -1.5, 3.0])
        model = ClassifierModel(weights=weights, bias=0.125, train_size=6)
        path = tmp_path / "model.f32"
        model.save(path)
        assert path.stat().st_size == 4 * 4
        loaded = ClassifierModel.load(path, dim=3)
        np.testing.assert_array_equal(loaded.weights,
                                      weights.astype(np.float32))
        assert loaded.bias == np.float32(0.125)

    def test_wrong_dim_rejected(self, tmp_path):
        model = ClassifierModel(weights=np.ones(3), bias=0.0, train_size=1)
        path = tmp_path / "model.f32"
        model.save(path)
        with pytest.raises(ValueError, match="expected 5"):
            ClassifierModel.load(path, dim=4)
