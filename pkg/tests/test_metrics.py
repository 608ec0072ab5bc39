import numpy as np
import pytest

from rarefind.classifier import ClassifierModel
from rarefind.metrics import (
    ClusterSets,
    CoverageConfig,
    DiscoveredSet,
    batch_positive_ratio,
    build_class_clusters,
    cache_key,
    coverage,
    discovery_rate,
    f1_heldout,
)
from rarefind.session import IterationRecord


def brute_force_coverage(discovered_ids, clusters):
    """Independent oracle: per-run set membership count over the raw
    assignment maps, averaged in plain Python."""
    ids = set(int(i) for i in discovered_ids)
    totals = []
    for run in range(clusters.num_runs):
        hit = set()
        for pos, member in enumerate(clusters.member_ids.tolist()):
            if member in ids:
                hit.add(int(clusters.assignments[run, pos]))
        totals.append(len(hit) / clusters.effective_k)
    return sum(totals) / len(totals)


def random_cluster_sets(rng, max_size=64):
    n = int(rng.integers(1, max_size + 1))
    runs = int(rng.integers(1, 5))
    eff_k = int(rng.integers(1, n + 1))
    member_ids = np.sort(rng.permutation(500)[:n])
    assignments = rng.integers(0, eff_k, size=(runs, n))
    for run in range(runs):  # keep every cluster non-empty
        filler = rng.permutation(n)[:eff_k]
        assignments[run, filler] = np.arange(eff_k)
    return ClusterSets(7, member_ids, assignments, eff_k)


class TestBuildClusters:
    def test_small_class_singleton_fallback(self, make_dataset):
        rng = np.random.default_rng(0)
        ds = make_dataset(rng.normal(size=(5, 3)), [0] * 5, class_names=["c0"])
        clusters = build_class_clusters(ds, 0, CoverageConfig(K=32, kmeans_runs=4))
        assert clusters.effective_k == 5
        for run in range(4):
            assert sorted(clusters.assignments[run].tolist()) == [0, 1, 2, 3, 4]

    def test_two_blobs_two_clusters(self, make_dataset):
        rng = np.random.default_rng(1)
        blob_a = rng.normal(0, 0.2, size=(20, 4)) + 3.0
        blob_b = rng.normal(0, 0.2, size=(20, 4)) - 3.0
        ds = make_dataset(np.vstack([blob_a, blob_b]), [0] * 40,
                          class_names=["c0"])
        clusters = build_class_clusters(ds, 0, CoverageConfig(K=2, kmeans_runs=10))
        first_half = clusters.assignments[:, :20]
        second_half = clusters.assignments[:, 20:]
        for run in range(10):
            assert len(set(first_half[run].tolist())) == 1
            assert len(set(second_half[run].tolist())) == 1
            assert first_half[run, 0] != second_half[run, 0]

    def test_deterministic_for_seed(self, blob_dataset):
        cfg = CoverageConfig(K=4, kmeans_runs=3, seed=9)
        a = build_class_clusters(blob_dataset, 1, cfg)
        b = build_class_clusters(blob_dataset, 1, cfg)
        np.testing.assert_array_equal(a.assignments, b.assignments)

    def test_empty_class_rejected(self, make_dataset):
        ds = make_dataset(np.ones((2, 2)), [0, 0], class_names=["c0", "c1"])
        with pytest.raises(ValueError, match="class 1"):
            build_class_clusters(ds, 1)

    def test_all_clusters_nonempty(self, make_dataset):
        rng = np.random.default_rng(2)
        ds = make_dataset(rng.normal(size=(50, 4)), [0] * 50, class_names=["c0"])
        clusters = build_class_clusters(ds, 0, CoverageConfig(K=8, kmeans_runs=5))
        for run in range(5):
            assert len(set(clusters.assignments[run].tolist())) == 8


class TestCoverage:
    def test_full_and_empty(self, make_dataset):
        rng = np.random.default_rng(3)
        ds = make_dataset(rng.normal(size=(30, 3)), [0] * 30, class_names=["c0"])
        clusters = build_class_clusters(ds, 0, CoverageConfig(K=4, kmeans_runs=2))
        assert coverage(list(range(30)), clusters) == 1.0
        assert coverage([], clusters) == 0.0

    def test_singleton_fallback_fraction(self, make_dataset):
        rng = np.random.default_rng(4)
        ds = make_dataset(rng.normal(size=(8, 3)), [0] * 8, class_names=["c0"])
        clusters = build_class_clusters(ds, 0, CoverageConfig(K=32))
        assert coverage([0, 3, 5], clusters) == pytest.approx(0.375)

    def test_foreign_id_rejected(self, make_dataset):
        rng = np.random.default_rng(5)
        ds = make_dataset(rng.normal(size=(8, 3)), [0] * 8, class_names=["c0"])
        clusters = build_class_clusters(ds, 0)
        with pytest.raises(KeyError, match="not a member"):
            coverage([99], clusters)

    def test_matches_brute_force_exactly(self):
        rng = np.random.default_rng(6)
        for trial in range(50):
            clusters = random_cluster_sets(rng)
            k = int(rng.integers(0, clusters.member_ids.size + 1))
            discovered = rng.choice(clusters.member_ids, size=k, replace=False)
            assert coverage(discovered, clusters) == \
                brute_force_coverage(discovered, clusters)

    def test_monotone_under_addition(self):
        rng = np.random.default_rng(7)
        for trial in range(200):
            clusters = random_cluster_sets(rng)
            members = clusters.member_ids
            k = int(rng.integers(0, members.size))
            base = rng.choice(members, size=k, replace=False)
            extra = rng.choice(np.setdiff1d(members, base))
            assert coverage(np.append(base, extra), clusters) >= \
                coverage(base, clusters)

    def test_single_run_equals_mean_of_one(self, make_dataset):
        rng = np.random.default_rng(8)
        ds = make_dataset(rng.normal(size=(40, 3)), [0] * 40, class_names=["c0"])
        clusters = build_class_clusters(ds, 0, CoverageConfig(K=4, kmeans_runs=1))
        cov = coverage([0, 1, 2], clusters)
        hit_clusters = {int(clusters.assignments[0, p])
                        for p in clusters.positions(np.array([0, 1, 2]))}
        assert cov == len(hit_clusters) / 4

    def test_accepts_discovered_set(self, make_dataset):
        rng = np.random.default_rng(9)
        ds = make_dataset(rng.normal(size=(10, 3)), [0] * 10, class_names=["c0"])
        clusters = build_class_clusters(ds, 0)
        discovered = DiscoveredSet()
        discovered.extend([1, 4])
        assert coverage(discovered, clusters) == coverage([1, 4], clusters)


class TestDiscoveryRate:
    def test_bounds(self):
        assert discovery_rate([], 10) == 0.0
        assert discovery_rate(list(range(10)), 10) == 1.0

    def test_linear_in_count(self):
        for n in range(0, 21):
            assert discovery_rate(list(range(n)), 20) == pytest.approx(n / 20)

    def test_rejects_empty_class(self):
        with pytest.raises(ValueError):
            discovery_rate([1], 0)


class TestBatchPositiveRatio:
    def record(self, labels, iteration=1):
        labels = np.asarray(labels)
        return IterationRecord(iteration=iteration,
                               batch_ids=np.arange(labels.size),
                               labels=labels,
                               positive_ratio=float(labels.mean()),
                               criterion_values=np.zeros(labels.size))

    def test_ratios(self):
        log = [self.record([1] * 8 + [0] * 2), self.record([1] * 4, 2),
               self.record([0] * 5, 3)]
        np.testing.assert_allclose(batch_positive_ratio(log), [0.8, 1.0, 0.0])


class TestF1:
    def separable(self, make_dataset):
        x = np.array([[2.0], [2.1], [-2.0], [-2.1], [1.9], [-1.9]])
        labels = [1, 1, 0, 0, 1, 0]
        return make_dataset(x, labels, pool=[0, 1, 2, 3], test=[4, 5],
                            class_names=["neg", "pos"])

    def test_perfect_separation(self, make_dataset):
        ds = self.separable(make_dataset)
        model = ClassifierModel(weights=np.array([5.0]), bias=0.0, train_size=4)
        assert f1_heldout(model, ds, class_id=1) == 1.0

    def test_all_negative_prediction(self, make_dataset):
        ds = self.separable(make_dataset)
        model = ClassifierModel(weights=np.array([0.0]), bias=-10.0, train_size=4)
        assert f1_heldout(model, ds, class_id=1) == 0.0

    def test_formula(self, make_dataset):
        # TP=2, FP=1, FN=1 -> f1 = 2/3
        x = np.array([[1.0], [1.0], [1.0], [-1.0], [-0.5]])
        labels = [1, 1, 0, 1, 0]
        ds = make_dataset(x, labels, pool=[], test=[0, 1, 2, 3, 4],
                          class_names=["neg", "pos"])
        model = ClassifierModel(weights=np.array([1.0]), bias=0.0, train_size=2)
        assert f1_heldout(model, ds, class_id=1) == pytest.approx(2 / 3)

    def test_empty_test_split_rejected(self, make_dataset):
        ds = make_dataset(np.ones((2, 1)), [0, 1], pool=[0, 1], test=[])
        model = ClassifierModel(weights=np.array([1.0]), bias=0.0, train_size=2)
        with pytest.raises(ValueError, match="test split"):
            f1_heldout(model, ds, class_id=1)


class TestClusterCache:
    def test_round_trip(self, tmp_path, blob_dataset):
        cfg = CoverageConfig(K=4, kmeans_runs=3, seed=2)
        clusters = build_class_clusters(blob_dataset, 2, cfg)
        path = tmp_path / cache_key(blob_dataset.manifest.name, 2, cfg)
        clusters.save(path)
        loaded = ClusterSets.load(path)
        assert loaded.class_id == clusters.class_id
        assert loaded.effective_k == clusters.effective_k
        np.testing.assert_array_equal(loaded.member_ids, clusters.member_ids)
        np.testing.assert_array_equal(loaded.assignments, clusters.assignments)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "bad.clusters"
        np.array([1, 2, 3], dtype="<u4").tofile(path)
        with pytest.raises(ValueError):
            ClusterSets.load(path)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CoverageConfig(K=0)
        with pytest.raises(ValueError):
            CoverageConfig(kmeans_runs=0)
