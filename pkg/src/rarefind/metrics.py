"""Retrieval evaluation: class coverage, discovery rate, batch positive
ratio, and held-out f1.

Coverage partitions each class's pool members into K clusters (K-means,
averaged over several seeded runs) and reports the fraction of clusters
containing at least one retrieved positive. Classes smaller than K degrade
to one singleton cluster per sample. Oracle labels are read here for
evaluation only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import ClassifierModel, predict
from .data import EmbeddedDataset, INDEX_DTYPE


@dataclass(frozen=True)
class CoverageConfig:
    """Clustering resolution and averaging for the coverage metric."""

    K: int = 32
    kmeans_runs: int = 10
    kmeans_max_iters: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.kmeans_runs < 1:
            raise ValueError(f"kmeans_runs must be >= 1, got {self.kmeans_runs}")
        if self.kmeans_max_iters < 1:
            raise ValueError(f"kmeans_max_iters must be >= 1, got {self.kmeans_max_iters}")


@dataclass
class DiscoveredSet:
    """Positive sample ids in acquisition order, with per-iteration counts.

    ``boundaries[t]`` is the number of positives discovered by the end of
    iteration t+1, so slicing ``ids[:boundaries[t]]`` recovers the set at
    that point of the session.
    """

    ids: list[int] = field(default_factory=list)
    boundaries: list[int] = field(default_factory=list)

    def extend(self, new_ids) -> None:
        for i in new_ids:
            i = int(i)
            if i in set(self.ids):
                raise ValueError(f"sample {i} discovered twice")
            self.ids.append(i)

    def close_iteration(self) -> None:
        self.boundaries.append(len(self.ids))

    def __len__(self) -> int:
        return len(self.ids)


class ClusterSets:
    """Per-run cluster assignments for one class's pool members."""

    def __init__(self, class_id: int, member_ids: np.ndarray,
                 assignments: np.ndarray, effective_k: int):
        self.class_id = int(class_id)
        self.member_ids = np.asarray(member_ids, dtype=np.int64)
        self.assignments = np.asarray(assignments, dtype=np.int64)
        self.effective_k = int(effective_k)
        if self.assignments.ndim != 2 or \
                self.assignments.shape[1] != self.member_ids.size:
            raise ValueError("assignments must be (runs, num_members)")
        if self.assignments.size and (
                self.assignments.min() < 0
                or self.assignments.max() >= self.effective_k):
            raise ValueError("cluster index outside [0, effective_k)")
        order = np.argsort(self.member_ids)
        self.member_ids = self.member_ids[order]
        self.assignments = self.assignments[:, order]

    @property
    def num_runs(self) -> int:
        return int(self.assignments.shape[0])

    def positions(self, sample_ids: np.ndarray) -> np.ndarray:
        """Member positions of the given ids; raises on foreign ids."""
        sample_ids = np.asarray(sample_ids, dtype=np.int64)
        if self.member_ids.size == 0:
            raise KeyError("cluster set has no members")
        pos = np.minimum(np.searchsorted(self.member_ids, sample_ids),
                         self.member_ids.size - 1)
        hit = self.member_ids[pos] == sample_ids
        if not np.all(hit):
            raise KeyError(
                f"sample {int(sample_ids[~hit][0])} is not a member of "
                f"class {self.class_id}"
            )
        return pos

    def save(self, path: Path | str) -> None:
        """Serialize as a flat little-endian uint32 array."""
        header = np.array([self.class_id, self.member_ids.size,
                           self.num_runs, self.effective_k], dtype=INDEX_DTYPE)
        body = np.concatenate([
            self.member_ids.astype(INDEX_DTYPE),
            self.assignments.astype(INDEX_DTYPE).ravel(),
        ])
        np.concatenate([header, body]).tofile(Path(path))

    @classmethod
    def load(cls, path: Path | str) -> "ClusterSets":
        raw = np.fromfile(Path(path), dtype=INDEX_DTYPE)
        if raw.size < 4:
            raise ValueError(f"cluster file {path} is truncated")
        class_id, n, runs, eff_k = (int(v) for v in raw[:4])
        expected = 4 + n + runs * n
        if raw.size != expected:
            raise ValueError(
                f"cluster file {path}: expected {expected} uint32 values, "
                f"got {raw.size}"
            )
        member_ids = raw[4:4 + n].astype(np.int64)
        assignments = raw[4 + n:].astype(np.int64).reshape(runs, n)
        return cls(class_id, member_ids, assignments, eff_k)


def cache_key(dataset_name: str, class_id: int, config: CoverageConfig) -> str:
    return (f"{dataset_name}.c{class_id}.K{config.K}"
            f".r{config.kmeans_runs}.s{config.seed}.clusters")


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: iteratively sample centers proportional to the
    squared distance from the nearest already-chosen center."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = x[first]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))  # all points coincide with a center
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[i] = x[idx]
        np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1), out=d2)
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iters: int) -> np.ndarray:
    """Lloyd iterations until the assignment fixpoint or the cap; empty
    clusters are reseeded to the point farthest from its current center."""
    k = centers.shape[0]
    norms2 = np.sum(x ** 2, axis=1)
    assign = np.full(x.shape[0], -1, dtype=np.int64)
    for _ in range(max_iters):
        d2 = norms2[:, None] - 2.0 * x @ centers.T + np.sum(centers ** 2, axis=1)[None, :]
        new_assign = np.argmin(d2, axis=1)

        counts = np.bincount(new_assign, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            own_d2 = d2[np.arange(x.shape[0]), new_assign].copy()
            for cluster in empty:
                far = int(np.argmax(own_d2))
                centers[cluster] = x[far]
                new_assign[far] = cluster
                own_d2[far] = -1.0

        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for cluster in range(k):
            members = assign == cluster
            if members.any():
                centers[cluster] = x[members].mean(axis=0)
    return assign


def build_class_clusters(dataset: EmbeddedDataset, class_id: int,
                         config: CoverageConfig | None = None) -> ClusterSets:
    """Cluster one class's pool members for coverage evaluation.

    Runs seeded k-means ``kmeans_runs`` times; a class smaller than K gets
    one singleton cluster per sample in every run.
    """
    config = config or CoverageConfig()
    members = dataset.class_pool_members(class_id)
    if members.size == 0:
        raise ValueError(f"class {class_id} has no pool members to cluster")

    n = members.size
    if n < config.K:
        assignments = np.tile(np.arange(n, dtype=np.int64),
                              (config.kmeans_runs, 1))
        return ClusterSets(class_id, members, assignments, effective_k=n)

    x = dataset.features[members].astype(np.float64)
    assignments = np.empty((config.kmeans_runs, n), dtype=np.int64)
    for run in range(config.kmeans_runs):
        rng = np.random.default_rng(
            np.random.SeedSequence([config.seed, class_id, run]))
        centers = _kmeans_pp_init(x, config.K, rng)
        assignments[run] = _lloyd(x, centers, config.kmeans_max_iters)
    return ClusterSets(class_id, members, assignments, effective_k=config.K)


def coverage(discovered, clusters: ClusterSets) -> float:
    """Fraction of clusters holding at least one retrieved positive,
    averaged over clustering runs. ``discovered`` is a DiscoveredSet or any
    iterable of class-member sample ids."""
    ids = discovered.ids if isinstance(discovered, DiscoveredSet) else discovered
    ids = np.asarray(list(ids), dtype=np.int64)
    if ids.size == 0:
        return 0.0
    pos = clusters.positions(ids)
    runs = clusters.num_runs
    hit = np.zeros((runs, clusters.effective_k), dtype=bool)
    hit[np.repeat(np.arange(runs), pos.size),
        clusters.assignments[:, pos].ravel()] = True
    return _mean_hit_fraction(hit, clusters.effective_k)


def _mean_hit_fraction(hit: np.ndarray, effective_k: int) -> float:
    # per-run fraction first, then a plain left-to-right mean, so the result
    # is bit-identical to a direct set-membership recount
    counts = hit.sum(axis=1)
    fractions = [int(c) / effective_k for c in counts]
    return sum(fractions) / len(fractions)


def discovery_rate(discovered, class_size: int) -> float:
    """Fraction of the class retrieved: ``|P| / k_C``."""
    if class_size < 1:
        raise ValueError(f"class size must be >= 1, got {class_size}")
    n = len(discovered.ids) if isinstance(discovered, DiscoveredSet) else len(discovered)
    return n / class_size


def batch_positive_ratio(iteration_log) -> np.ndarray:
    """Per-iteration fraction of the selected batch labeled positive."""
    ratios = []
    for record in iteration_log:
        labels = np.asarray(record.labels)
        if labels.size == 0:
            raise ValueError(f"iteration {record.iteration} has an empty batch")
        ratios.append(labels.sum() / labels.size)
    return np.asarray(ratios, dtype=np.float64)


def f1_heldout(model: ClassifierModel, dataset: EmbeddedDataset,
               class_id: int) -> float:
    """Binary f1 on the test split with ``class_id`` as the positive class.

    Predictions threshold the calibrated score at 0.5; when precision and
    recall are both undefined or zero the score is 0 by convention.
    """
    test = dataset.test_indices
    if test.size == 0:
        raise ValueError("test split is empty")
    y_true = dataset.oracle_labels[test] == class_id
    y_pred = predict(model, test, dataset) >= 0.5
    tp = int(np.sum(y_pred & y_true))
    fp = int(np.sum(y_pred & ~y_true))
    fn = int(np.sum(~y_pred & y_true))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0
