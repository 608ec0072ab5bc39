"""The interactive retrieval loop for one class-of-interest.

Each iteration retrains the lightweight classifier on the labeled pool,
scores the remaining unlabeled pool with the configured strategy, selects a
budget-sized batch, and absorbs the annotator's binary labels. Proposing a
batch and absorbing its labels are separate steps so a server can hold a
batch open while a human labels it; ``run_iteration`` glues them together
for oracle-driven runs.

A session is a single-writer state machine; distinct sessions are fully
independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassifierConfig, ClassifierModel, LabeledPool, predict, train
from .data import EmbeddedDataset
from .metrics import ClusterSets, DiscoveredSet, _mean_hit_fraction, f1_heldout
from .strategies import (
    STRATEGY_TOKENS,
    CriterionScores,
    DiversifierConfig,
    MarginHistory,
    SelectionBatch,
    _kcenter_greedy,
    binary_margin,
    diversify_distance,
    diversify_step,
    rank_scores,
    score_alamp,
    score_dal,
    score_ma,
    score_mp,
    score_pfma,
    score_random,
    select_top,
    squared_min_distances,
)


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed derived from integer key parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass(frozen=True)
class SessionConfig:
    """Loop parameters: strategy token, batch budget ``b``, iteration cap
    ``T``, initial query sizes ``N_p``/``N_n``, and sub-configs."""

    strategy: str = "pfma"
    b: int = 10
    T: int = 25
    N_p: int = 1
    N_n: int = 5
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    diversifier: DiversifierConfig = field(default_factory=DiversifierConfig)
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGY_TOKENS:
            raise ValueError(
                f"unknown strategy {self.strategy!r}; expected one of "
                f"{', '.join(STRATEGY_TOKENS)}"
            )
        if self.b < 1:
            raise ValueError(f"batch budget b must be >= 1, got {self.b}")
        if self.T < 1:
            raise ValueError(f"iteration cap T must be >= 1, got {self.T}")
        if self.N_p < 1:
            raise ValueError(f"N_p must be >= 1, got {self.N_p}")
        if self.N_n < 0:
            raise ValueError(f"N_n must be >= 0, got {self.N_n}")
        if self.strategy.endswith("-d") and self.diversifier.pool_size < self.b:
            raise ValueError(
                f"diversifier pool_size {self.diversifier.pool_size} must be "
                f">= batch budget {self.b}"
            )


@dataclass(frozen=True)
class Query:
    """Initial labeled examples; ``target_class`` is set on oracle runs."""

    positive_ids: np.ndarray
    negative_ids: np.ndarray
    target_class: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "positive_ids",
                           np.asarray(self.positive_ids, dtype=np.int64))
        object.__setattr__(self, "negative_ids",
                           np.asarray(self.negative_ids, dtype=np.int64))
        if np.intersect1d(self.positive_ids, self.negative_ids).size:
            raise ValueError("query positives and negatives must be disjoint")


@dataclass
class IterationRecord:
    """One loop turn: the batch, its labels, and the positive ratio."""

    iteration: int
    batch_ids: np.ndarray
    labels: np.ndarray
    positive_ratio: float
    criterion_values: np.ndarray


class SessionState:
    """Mutable loop state: counter, labeled pool, discoveries, margins."""

    def __init__(self, dataset: EmbeddedDataset, query: Query,
                 config: SessionConfig):
        pool = np.sort(dataset.pool_indices)
        all_query = np.concatenate([query.positive_ids, query.negative_ids])
        if all_query.size == 0:
            raise ValueError("query must contain at least one sample")
        if not np.all(np.isin(all_query, pool)):
            outside = all_query[~np.isin(all_query, pool)]
            raise ValueError(
                f"query sample {int(outside[0])} is not in the retrieval pool"
            )
        if len(np.unique(all_query)) != all_query.size:
            raise ValueError("query ids must be unique")

        self.t = 0
        self.finished = False
        self.pool_ids = pool
        self.labeled = LabeledPool()
        self.labeled.extend(query.positive_ids,
                            np.ones(query.positive_ids.size, dtype=np.int64))
        self.labeled.extend(query.negative_ids,
                            np.zeros(query.negative_ids.size, dtype=np.int64))
        self._labeled_mask = np.zeros(dataset.num_samples, dtype=bool)
        self._labeled_mask[all_query] = True

        self.discovered = DiscoveredSet()
        self.discovered.extend(query.positive_ids)
        self.margins = MarginHistory()
        self.model: ClassifierModel | None = None
        self.log: list[IterationRecord] = []
        self.pending_batch: SelectionBatch | None = None

        # incremental k-center state, built lazily for the coreset strategy
        self._coreset_d2: np.ndarray | None = None
        self._coreset_x: np.ndarray | None = None

    def unlabeled_ids(self) -> np.ndarray:
        return self.pool_ids[~self._labeled_mask[self.pool_ids]]

    def labeled_count(self) -> int:
        return len(self.labeled)


def sample_initial_query(dataset: EmbeddedDataset, class_id: int,
                         n_positive: int, n_negative: int,
                         seed: int) -> Query:
    """Seeded uniform query: positives from the class's pool members,
    negatives from the rest of the pool."""
    members = dataset.class_pool_members(class_id)
    pool = dataset.pool_indices
    others = pool[dataset.oracle_labels[pool] != class_id]
    if members.size < n_positive:
        raise ValueError(
            f"class {class_id} has {members.size} pool members; "
            f"cannot draw {n_positive} positives"
        )
    if others.size < n_negative:
        raise ValueError(
            f"only {others.size} non-class pool samples; "
            f"cannot draw {n_negative} negatives"
        )
    rng = np.random.default_rng(seed)
    positives = rng.choice(np.sort(members), size=n_positive, replace=False)
    negatives = rng.choice(np.sort(others), size=n_negative, replace=False)
    return Query(positives, negatives, target_class=class_id)


def init_session(dataset: EmbeddedDataset, query: Query,
                 config: SessionConfig) -> SessionState:
    """Start a session at t=0 with the query as the labeled pool."""
    if query.positive_ids.size == 0:
        raise ValueError("query must contain at least one positive")
    return SessionState(dataset, query, config)


def _base_scores(token: str, f: np.ndarray, unlabeled: np.ndarray,
                 state: SessionState, dataset: EmbeddedDataset,
                 config: SessionConfig, iteration: int) -> CriterionScores:
    if token == "ma":
        return score_ma(f, unlabeled)
    if token == "mp":
        return score_mp(f, unlabeled)
    if token == "pfma":
        return score_pfma(f, unlabeled)
    if token == "alamp":
        return score_alamp(f, unlabeled, state.margins)
    if token == "random":
        return score_random(unlabeled, seed=derive_seed(config.seed, iteration))
    if token == "dal":
        return score_dal(state.labeled, unlabeled, dataset,
                         seed=derive_seed(config.seed, iteration))
    raise ValueError(f"no base criterion for strategy {token!r}")


def _coreset_batch(state: SessionState, dataset: EmbeddedDataset,
                   config: SessionConfig, iteration: int) -> SelectionBatch:
    if state._coreset_d2 is None:
        state._coreset_d2 = squared_min_distances(
            dataset, state.pool_ids, state.labeled.ids())
        state._coreset_x = dataset.features[state.pool_ids].astype(np.float64)
    alive = ~state._labeled_mask[state.pool_ids]
    count = min(config.b, int(alive.sum()))
    ids, d2 = _kcenter_greedy(state._coreset_x, state.pool_ids,
                              state._coreset_d2, count, alive)
    return SelectionBatch(ids, np.sqrt(d2), iteration)


def propose_batch(state: SessionState, dataset: EmbeddedDataset,
                  config: SessionConfig) -> SelectionBatch | None:
    """Train, score, and select the next batch; None once the pool is done.

    Updates the session's model, and the margin history when the strategy
    consumes it.
    """
    if state.finished:
        return None
    if state.pending_batch is not None:
        raise RuntimeError("previous batch still awaiting labels")
    unlabeled = state.unlabeled_ids()
    if unlabeled.size == 0:
        state.finished = True
        return None

    state.model = train(state.labeled, dataset, config.classifier)
    iteration = state.t + 1
    token = config.strategy

    if token == "coreset":
        batch = _coreset_batch(state, dataset, config, iteration)
    else:
        base = token[:-2] if token.endswith(("-s", "-d")) else token
        needs_f = base != "random"
        f = predict(state.model, unlabeled, dataset) if needs_f else None
        scores = _base_scores(base, f, unlabeled, state, dataset, config,
                              iteration)
        if token.endswith("-s"):
            batch = diversify_step(rank_scores(scores),
                                   config.diversifier.step, config.b,
                                   iteration)
        elif token.endswith("-d"):
            batch = diversify_distance(rank_scores(scores), dataset,
                                       config.diversifier.pool_size,
                                       config.b, iteration)
        else:
            batch = select_top(scores, config.b, iteration=iteration)
        if base == "alamp":
            state.margins = MarginHistory(unlabeled, binary_margin(f))

    state.pending_batch = batch
    return batch


def absorb_batch(state: SessionState, batch: SelectionBatch,
                 labels: np.ndarray, config: SessionConfig) -> SessionState:
    """Fold annotated labels into the pool and advance the counter."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (len(batch),):
        raise ValueError(
            f"annotator returned {labels.size} labels for a batch of {len(batch)}"
        )
    if labels.size and (labels.min() < 0 or labels.max() > 1):
        raise ValueError("labels must be binary")

    state.labeled.extend(batch.sample_ids, labels)
    state._labeled_mask[batch.sample_ids] = True
    state.discovered.extend(batch.sample_ids[labels == 1])
    state.discovered.close_iteration()
    state.margins.drop(batch.sample_ids)

    state.t += 1
    state.log.append(IterationRecord(
        iteration=state.t,
        batch_ids=batch.sample_ids,
        labels=labels,
        positive_ratio=float(labels.mean()) if labels.size else 0.0,
        criterion_values=batch.values,
    ))
    state.pending_batch = None
    if state.t >= config.T or state.unlabeled_ids().size == 0:
        state.finished = True
    return state


def run_iteration(state: SessionState, dataset: EmbeddedDataset,
                  config: SessionConfig, annotator) -> SessionState:
    """One full loop turn with an in-process annotator.

    Calling on an exhausted or finished session is a no-op terminal state,
    not an error.
    """
    batch = propose_batch(state, dataset, config)
    if batch is None:
        return state
    labels = annotator(batch)
    return absorb_batch(state, batch, np.asarray(labels), config)


@dataclass
class OracleAnnotator:
    """Ground-truth labels standing in for the human annotator."""

    dataset: EmbeddedDataset
    target_class: int

    def __call__(self, batch: SelectionBatch) -> np.ndarray:
        oracle = self.dataset.oracle_labels[batch.sample_ids]
        return (oracle == self.target_class).astype(np.int64)


class SessionEvaluator:
    """Incremental per-iteration cov/pos/f1 for a known target class.

    Maintains cluster hit masks so coverage updates cost only the newly
    discovered positives; equivalent to recomputing
    :func:`rarefind.metrics.coverage` on the full discovered set.
    """

    def __init__(self, dataset: EmbeddedDataset, class_id: int,
                 clusters: ClusterSets, class_size: int | None = None):
        self.dataset = dataset
        self.class_id = int(class_id)
        self.clusters = clusters
        self.class_size = int(class_size if class_size is not None
                              else dataset.class_pool_members(class_id).size)
        if self.class_size < 1:
            raise ValueError(f"class {class_id} has no pool members")
        self._hit = np.zeros((clusters.num_runs, clusters.effective_k),
                             dtype=bool)
        self._num_discovered = 0

    def record_positives(self, positive_ids: np.ndarray) -> None:
        positive_ids = np.asarray(positive_ids, dtype=np.int64)
        self._num_discovered += int(positive_ids.size)
        members = positive_ids[np.isin(positive_ids, self.clusters.member_ids)]
        if members.size == 0:
            return
        pos = self.clusters.positions(members)
        runs = self.clusters.num_runs
        self._hit[np.repeat(np.arange(runs), pos.size),
                  self.clusters.assignments[:, pos].ravel()] = True

    @property
    def coverage(self) -> float:
        return _mean_hit_fraction(self._hit, self.clusters.effective_k)

    @property
    def discovery_rate(self) -> float:
        return self._num_discovered / self.class_size

    def f1(self, model: ClassifierModel) -> float:
        return f1_heldout(model, self.dataset, self.class_id)


@dataclass
class MetricRow:
    """Per-iteration metric log entry; cov/pos/f1 are None without an
    evaluator (no oracle knowledge of the target class)."""

    iteration: int
    cov: float | None
    pos: float | None
    batch_ratio: float
    f1: float | None


@dataclass
class SessionResult:
    state: SessionState
    metrics: list[MetricRow]


def run_session(dataset: EmbeddedDataset, query: Query, config: SessionConfig,
                annotator, evaluator: SessionEvaluator | None = None) -> SessionResult:
    """Run the loop to the iteration cap or pool exhaustion, logging
    per-iteration metrics."""
    state = init_session(dataset, query, config)
    if evaluator is not None:
        evaluator.record_positives(query.positive_ids)
    rows: list[MetricRow] = []
    while not state.finished:
        batch = propose_batch(state, dataset, config)
        if batch is None:
            break
        labels = np.asarray(annotator(batch))
        absorb_batch(state, batch, labels, config)
        record = state.log[-1]
        if evaluator is not None:
            evaluator.record_positives(record.batch_ids[record.labels == 1])
            rows.append(MetricRow(
                iteration=state.t,
                cov=evaluator.coverage,
                pos=evaluator.discovery_rate,
                batch_ratio=record.positive_ratio,
                f1=evaluator.f1(state.model),
            ))
        else:
            rows.append(MetricRow(iteration=state.t, cov=None, pos=None,
                                  batch_ratio=record.positive_ratio, f1=None))
    return SessionResult(state=state, metrics=rows)
