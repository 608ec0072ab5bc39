"""Selection criteria and batch diversifiers.

All scorers are pure: identical inputs (and seed, where one applies) produce
identical outputs. Ranking ties are always broken by ascending sample id so
runs are bit-reproducible across platforms.

Criterion cheat-sheet, with ``f`` the calibrated score in [0, 1]:

- ``ma``     uncertainty, ``1 - |0.5 - f|``; peaks at the decision boundary.
- ``mp``     confidence, the score itself; favors predicted positives.
- ``pfma``   positive-first: ``ma`` on the positive half-space (f >= 0.5),
             raw score below it, so every predicted positive outranks every
             predicted negative.
- ``alamp``  normalized drop in the binary margin ``|2f - 1|`` between
             consecutive iterations; first iteration falls back to ``ma``.
- ``random`` seeded uniform permutation rank.
- ``dal``    labeled-vs-unlabeled discriminator; high scores look unlabeled.
- ``coreset`` k-center greedy farthest-first selection.
- ``*-s`` / ``*-d`` step and distance diversifiers over a ranked list.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierConfig, LabeledPool, predict, train
from .data import EmbeddedDataset

STRATEGY_TOKENS = (
    "random", "ma", "mp", "pfma", "alamp", "dal", "coreset",
    "ma-s", "ma-d", "mp-s", "mp-d",
)

# Budget for DAL's auxiliary labeled-vs-unlabeled discriminator. Only the
# ranking of its scores matters, and its training set can reach 50x the
# labeled pool, so it gets a deliberately loose solve.
DAL_CLASSIFIER_CONFIG = ClassifierConfig(C=1.0, max_epochs=10, tolerance=1e-2)

DAL_UNLABELED_CAP_FACTOR = 50


@dataclass(frozen=True)
class DiversifierConfig:
    """Step size for ``*-s`` and candidate pool size for ``*-d``."""

    step: int = 5
    pool_size: int = 50

    def __post_init__(self):
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")
        if self.pool_size < 1:
            raise ValueError(f"pool_size must be >= 1, got {self.pool_size}")


@dataclass(frozen=True)
class CriterionScores:
    """Criterion values aligned with candidate sample ids."""

    sample_ids: np.ndarray
    values: np.ndarray
    strategy_tag: str

    def __post_init__(self):
        object.__setattr__(self, "sample_ids",
                           np.asarray(self.sample_ids, dtype=np.int64))
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=np.float64))
        if self.sample_ids.shape != self.values.shape:
            raise ValueError("sample_ids and values must have equal length")
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise ValueError("criterion values must be finite")

    def __len__(self) -> int:
        return int(self.sample_ids.size)


@dataclass(frozen=True)
class SelectionBatch:
    """Ordered batch of selected sample ids with their criterion values."""

    sample_ids: np.ndarray
    values: np.ndarray
    iteration: int

    def __post_init__(self):
        object.__setattr__(self, "sample_ids",
                           np.asarray(self.sample_ids, dtype=np.int64))
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=np.float64))
        if len(np.unique(self.sample_ids)) != self.sample_ids.size:
            raise ValueError("batch sample ids must be distinct")

    def __len__(self) -> int:
        return int(self.sample_ids.size)


class MarginHistory:
    """Binary margins ``|2f - 1|`` from the previous iteration, by sample id.

    Entries exist only for samples scored last iteration; the session prunes
    ids as they are labeled.
    """

    def __init__(self, sample_ids: np.ndarray | None = None,
                 margins: np.ndarray | None = None):
        if sample_ids is None:
            self._ids = np.empty(0, dtype=np.int64)
            self._margins = np.empty(0, dtype=np.float64)
            return
        ids = np.asarray(sample_ids, dtype=np.int64)
        margins = np.asarray(margins, dtype=np.float64)
        if ids.shape != margins.shape:
            raise ValueError("sample_ids and margins must have equal length")
        if margins.size and (margins.min() < 0.0 or margins.max() > 1.0):
            raise ValueError("margins must lie in [0, 1]")
        order = np.argsort(ids)
        self._ids = ids[order]
        self._margins = margins[order]

    def __len__(self) -> int:
        return int(self._ids.size)

    def __contains__(self, sample_id) -> bool:
        pos = int(np.searchsorted(self._ids, int(sample_id)))
        return pos < self._ids.size and self._ids[pos] == int(sample_id)

    def get(self, sample_id: int) -> float:
        return float(self.lookup(np.array([sample_id]))[0])

    def lookup(self, sample_ids: np.ndarray) -> np.ndarray:
        """Vectorized margin lookup; raises KeyError on any missing id."""
        sample_ids = np.asarray(sample_ids, dtype=np.int64)
        if self._ids.size == 0:
            raise KeyError("margin history is empty")
        pos = np.minimum(np.searchsorted(self._ids, sample_ids),
                         self._ids.size - 1)
        hit = self._ids[pos] == sample_ids
        if not np.all(hit):
            raise KeyError(
                f"no previous margin for sample id {int(sample_ids[~hit][0])}"
            )
        return self._margins[pos]

    def drop(self, sample_ids: np.ndarray) -> None:
        mask = np.isin(self._ids, np.asarray(sample_ids, dtype=np.int64),
                       invert=True)
        self._ids = self._ids[mask]
        self._margins = self._margins[mask]


def binary_margin(f_scores: np.ndarray) -> np.ndarray:
    """Gap between the two class probabilities: ``|2f - 1|``."""
    return np.abs(2.0 * np.asarray(f_scores, dtype=np.float64) - 1.0)


def _check_probabilities(f_scores: np.ndarray) -> np.ndarray:
    f = np.asarray(f_scores, dtype=np.float64)
    if f.size and (not np.all(np.isfinite(f)) or f.min() < 0.0 or f.max() > 1.0):
        raise ValueError("classifier scores must lie in [0, 1]")
    return f


def score_ma(f_scores: np.ndarray, sample_ids: np.ndarray) -> CriterionScores:
    """Uncertainty: ``1 - |0.5 - f|``, in [0.5, 1], maximal at f = 0.5."""
    f = _check_probabilities(f_scores)
    return CriterionScores(sample_ids, 1.0 - np.abs(0.5 - f), "ma")


def score_mp(f_scores: np.ndarray, sample_ids: np.ndarray) -> CriterionScores:
    """Confidence: the score itself."""
    f = _check_probabilities(f_scores)
    return CriterionScores(sample_ids, f, "mp")


def score_pfma(f_scores: np.ndarray, sample_ids: np.ndarray) -> CriterionScores:
    """Positive-first uncertainty.

    Predicted positives (f >= 0.5) get the uncertainty value ``1 - |0.5 - f|``
    in [0.5, 1]; predicted negatives keep their raw score in [0, 0.5), so the
    positive half-space strictly dominates the ranking.
    """
    f = _check_probabilities(f_scores)
    values = np.where(f >= 0.5, 1.0 - np.abs(0.5 - f), f)
    return CriterionScores(sample_ids, values, "pfma")


def score_alamp(f_scores: np.ndarray, sample_ids: np.ndarray,
                history: MarginHistory) -> CriterionScores:
    """Normalized margin drop between consecutive iterations, in [-1, 1].

    ``(prev - curr) / (prev + curr)`` with binary margins; a zero denominator
    (was and remains maximally uncertain) scores 0. With no history at all
    (the first iteration) the ``ma`` values are used instead.
    """
    f = _check_probabilities(f_scores)
    if len(history) == 0:
        return CriterionScores(sample_ids, 1.0 - np.abs(0.5 - f), "alamp")
    prev = history.lookup(np.asarray(sample_ids, dtype=np.int64))
    curr = binary_margin(f)
    denom = prev + curr
    values = np.divide(prev - curr, denom,
                       out=np.zeros_like(denom), where=denom > 0)
    return CriterionScores(sample_ids, values, "alamp")


def score_random(unlabeled_ids: np.ndarray, seed: int) -> CriterionScores:
    """Seeded uniform permutation rank; identical seed, identical order."""
    ids = np.asarray(unlabeled_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("cannot rank an empty pool")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ids.size)
    values = np.empty(ids.size, dtype=np.float64)
    values[perm] = np.linspace(1.0, 1.0 / ids.size, ids.size)
    return CriterionScores(ids, values, "random")


def score_dal(pool: LabeledPool, unlabeled_ids: np.ndarray,
              dataset: EmbeddedDataset, seed: int = 0,
              config: ClassifierConfig | None = None) -> CriterionScores:
    """Discriminative scores: probability of looking unlabeled.

    Trains labeled (class 0) against a seeded unlabeled subsample (class 1)
    capped at 50x the labeled size, then scores every unlabeled sample.
    """
    unlabeled_ids = np.sort(np.asarray(unlabeled_ids, dtype=np.int64))
    if len(pool) == 0 or unlabeled_ids.size == 0:
        raise ValueError("DAL needs at least one labeled and one unlabeled sample")
    cap = DAL_UNLABELED_CAP_FACTOR * len(pool)
    if unlabeled_ids.size > cap:
        rng = np.random.default_rng(seed)
        sampled = rng.choice(unlabeled_ids, size=cap, replace=False)
    else:
        sampled = unlabeled_ids

    if config is None:
        config = DAL_CLASSIFIER_CONFIG
    aux = LabeledPool.from_arrays(
        np.concatenate([pool.ids(), sampled]),
        np.concatenate([np.zeros(len(pool), dtype=np.int64),
                        np.ones(sampled.size, dtype=np.int64)]))
    model = train(aux, dataset, ClassifierConfig(
        C=config.C, max_epochs=config.max_epochs, tolerance=config.tolerance,
        class_weighting=config.class_weighting, seed=seed,
    ))
    return CriterionScores(unlabeled_ids, predict(model, unlabeled_ids, dataset), "dal")


def rank_scores(scores: CriterionScores) -> CriterionScores:
    """Scores reordered best-first (value descending, ties by ascending id);
    the input the diversifiers expect."""
    order = np.lexsort((scores.sample_ids, -scores.values))
    return CriterionScores(scores.sample_ids[order], scores.values[order],
                           scores.strategy_tag)


def select_top(scores: CriterionScores, b: int,
               exclude: np.ndarray | None = None,
               iteration: int = 0) -> SelectionBatch:
    """The ``min(b, pool)`` highest-value ids, ties by ascending sample id."""
    if b < 1:
        raise ValueError(f"batch budget must be >= 1, got {b}")
    ids, values = scores.sample_ids, scores.values
    if exclude is not None and len(exclude):
        keep = np.isin(ids, np.asarray(exclude, dtype=np.int64), invert=True)
        ids, values = ids[keep], values[keep]
    if ids.size > 4 * b:
        # partial selection: keep everything that could tie into the top b
        part = np.argpartition(-values, b - 1)
        cutoff = values[part[b - 1]]
        keep = values >= cutoff
        ids, values = ids[keep], values[keep]
    order = np.lexsort((ids, -values))[:b]
    return SelectionBatch(ids[order], values[order], iteration)


def squared_min_distances(dataset: EmbeddedDataset, candidate_ids: np.ndarray,
                          reference_ids: np.ndarray) -> np.ndarray:
    """Per-candidate squared Euclidean distance to the nearest reference."""
    cand = dataset.features[np.asarray(candidate_ids, dtype=np.int64)].astype(np.float64)
    ref = dataset.features[np.asarray(reference_ids, dtype=np.int64)].astype(np.float64)
    d2 = (
        np.sum(cand ** 2, axis=1)[:, None]
        - 2.0 * cand @ ref.T
        + np.sum(ref ** 2, axis=1)[None, :]
    )
    return np.maximum(d2.min(axis=1), 0.0)


def _kcenter_greedy(cand_x: np.ndarray, cand_ids: np.ndarray,
                    init_min_d2: np.ndarray, count: int,
                    alive: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Farthest-first picks over candidate rows, working in squared distance.

    ``cand_ids`` must be sorted ascending so that distance ties resolve to
    the smallest sample id. ``init_min_d2`` is each candidate's squared
    distance to the already-selected reference set; it is updated in place
    as picks accumulate, which callers may exploit for incremental reuse.
    Returns (picked ids, picked squared distances).
    """
    norms2 = np.sum(cand_x ** 2, axis=1)
    if alive is None:
        alive = np.ones(cand_ids.size, dtype=bool)
    picked_ids = np.empty(count, dtype=np.int64)
    picked_d2 = np.empty(count, dtype=np.float64)
    for k in range(count):
        masked = np.where(alive, init_min_d2, -1.0)
        j = int(np.argmax(masked))
        picked_ids[k] = cand_ids[j]
        picked_d2[k] = init_min_d2[j]
        alive[j] = False
        d2 = norms2 - 2.0 * (cand_x @ cand_x[j]) + norms2[j]
        np.minimum(init_min_d2, np.maximum(d2, 0.0), out=init_min_d2)
    return picked_ids, picked_d2


def select_coreset(pool: LabeledPool, unlabeled_ids: np.ndarray,
                   dataset: EmbeddedDataset, b: int,
                   iteration: int = 0) -> SelectionBatch:
    """k-center greedy batch: repeatedly pick the unlabeled sample farthest
    (minimum Euclidean distance) from the labeled set plus picks so far;
    ties go to the smallest sample id."""
    if b < 1:
        raise ValueError(f"batch budget must be >= 1, got {b}")
    unlabeled_ids = np.sort(np.asarray(unlabeled_ids, dtype=np.int64))
    if unlabeled_ids.size == 0:
        raise ValueError("cannot select from an empty pool")
    if len(pool) == 0:
        raise ValueError("k-center selection needs a non-empty labeled set")
    min_d2 = squared_min_distances(dataset, unlabeled_ids, pool.ids())
    cand_x = dataset.features[unlabeled_ids].astype(np.float64)
    ids, d2 = _kcenter_greedy(cand_x, unlabeled_ids, min_d2,
                              min(b, unlabeled_ids.size))
    return SelectionBatch(ids, np.sqrt(d2), iteration)


def _require_ranked(ranked: CriterionScores) -> None:
    v = ranked.values
    if v.size > 1 and np.any(np.diff(v) > 0):
        raise ValueError("diversifiers expect scores sorted descending")


def diversify_step(ranked: CriterionScores, step: int, b: int,
                   iteration: int = 0) -> SelectionBatch:
    """Take every ``step``-th rank (0, S, 2S, ...) until ``b`` collected;
    if the stride exhausts the list, fill with the best skipped ranks."""
    _require_ranked(ranked)
    n = len(ranked)
    take = min(b, n)
    strided = list(range(0, n, step))[:take]
    if len(strided) < take:
        chosen = set(strided)
        strided += [r for r in range(n) if r not in chosen][: take - len(strided)]
    idx = np.array(strided, dtype=np.int64)
    return SelectionBatch(ranked.sample_ids[idx], ranked.values[idx], iteration)


def diversify_distance(ranked: CriterionScores, dataset: EmbeddedDataset,
                       pool_size: int, b: int,
                       iteration: int = 0) -> SelectionBatch:
    """Restrict to the top ``pool_size`` ranks, seed with rank 0, then grow
    farthest-first; distance ties go to the smaller sample id."""
    _require_ranked(ranked)
    if pool_size < b:
        raise ValueError(f"candidate pool {pool_size} smaller than budget {b}")
    top = min(pool_size, len(ranked))
    take = min(b, top)
    if take == 0:
        return SelectionBatch(np.empty(0, dtype=np.int64),
                              np.empty(0, dtype=np.float64), iteration)
    top_ids = ranked.sample_ids[:top]
    seed_id = int(top_ids[0])

    order = np.argsort(top_ids)
    cand_sorted = top_ids[order]
    cand_x = dataset.features[cand_sorted].astype(np.float64)
    seed_pos = int(np.searchsorted(cand_sorted, seed_id))

    # rank-0 seeds the chain; remaining picks maximize distance to it
    delta = cand_x - cand_x[seed_pos]
    min_d2 = np.sum(delta ** 2, axis=1)
    alive = np.ones(top, dtype=bool)
    alive[seed_pos] = False
    rest_ids, _ = _kcenter_greedy(cand_x, cand_sorted, min_d2, take - 1, alive)

    ids = np.concatenate([[seed_id], rest_ids]).astype(np.int64)
    value_by_id = {int(i): float(v)
                   for i, v in zip(top_ids, ranked.values[:top])}
    values = np.array([value_by_id[int(i)] for i in ids])
    return SelectionBatch(ids, values, iteration)
