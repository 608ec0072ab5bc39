"""Benchmark harness: sweep classes x queries x strategies, aggregate, export.

The sweep is paired: the same Q seeded initial queries are reused across
strategies for each class, so strategy comparisons are variance-matched.
Everything is deterministic under the experiment seed, including the
exported bytes, regardless of worker count.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifier import ClassifierConfig
from .data import EmbeddedDataset, load_dataset
from .metrics import CoverageConfig, build_class_clusters
from .session import (
    OracleAnnotator,
    SessionConfig,
    SessionEvaluator,
    derive_seed,
    run_session,
    sample_initial_query,
)
from .strategies import STRATEGY_TOKENS, DiversifierConfig

logger = logging.getLogger(__name__)

EXPORT_COLUMNS = ("strategy", "class", "query", "iteration",
                  "cov", "pos", "batch_ratio", "f1")
METRIC_NAMES = ("cov", "pos", "batch_ratio", "f1")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    strategies: tuple[str, ...]
    Q: int = 10
    class_filter: object = "all"
    session: SessionConfig = field(default_factory=SessionConfig)
    coverage: CoverageConfig = field(default_factory=CoverageConfig)
    size_bins: tuple[int, ...] = ()
    output_dir: str = "results"
    seed: int = 0
    normalize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "size_bins", tuple(self.size_bins))
        if self.Q < 1:
            raise ValueError(f"Q must be >= 1, got {self.Q}")
        unknown = [s for s in self.strategies if s not in STRATEGY_TOKENS]
        if unknown:
            raise ValueError(f"unknown strategy tokens: {', '.join(unknown)}")
        if not self.strategies:
            raise ValueError("at least one strategy is required")
        bins = self.size_bins
        if any(b1 >= b2 for b1, b2 in zip(bins, bins[1:])):
            raise ValueError(f"size_bins must be strictly ascending, got {bins}")

    @classmethod
    def from_json(cls, path: Path | str) -> "ExperimentConfig":
        raw = json.loads(Path(path).read_text())
        session_raw = dict(raw.get("session", {}))
        classifier = ClassifierConfig(**session_raw.pop("classifier", {}))
        diversifier = DiversifierConfig(**session_raw.pop("diversifier", {}))
        session = SessionConfig(classifier=classifier, diversifier=diversifier,
                                **session_raw)
        coverage = CoverageConfig(**raw.get("coverage", {}))
        return cls(
            dataset=raw["dataset"],
            strategies=tuple(raw["strategies"]),
            Q=raw.get("Q", 10),
            class_filter=raw.get("class_filter", "all"),
            session=session,
            coverage=coverage,
            size_bins=tuple(raw.get("size_bins", ())),
            output_dir=raw.get("output_dir", "results"),
            seed=raw.get("seed", 0),
            normalize=raw.get("normalize", True),
        )


@dataclass(frozen=True)
class ResultRow:
    strategy: str
    class_id: int
    query: int
    iteration: int
    cov: float
    pos: float
    batch_ratio: float
    f1: float


class ResultTable:
    """Rows keyed (strategy, class, query, iteration), with class sizes for
    the size-bin aggregates."""

    def __init__(self, rows: list[ResultRow],
                 class_sizes: dict[int, int] | None = None):
        self.rows = list(rows)
        self.class_sizes = dict(class_sizes or {})
        keys = {(r.strategy, r.class_id, r.query, r.iteration) for r in self.rows}
        if len(keys) != len(self.rows):
            raise ValueError("duplicate (strategy, class, query, iteration) rows")
        for r in self.rows:
            for name in METRIC_NAMES:
                v = getattr(r, name)
                if not (0.0 <= v <= 1.0):
                    raise ValueError(f"metric {name}={v} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, ResultTable) and self.rows == other.rows

    def metric_values(self, metric: str, strategy: str | None = None,
                      iteration: int | None = None) -> np.ndarray:
        vals = [getattr(r, metric) for r in self.rows
                if (strategy is None or r.strategy == strategy)
                and (iteration is None or r.iteration == iteration)]
        return np.asarray(vals, dtype=np.float64)

    def mean_per_iteration(self, metric: str) -> dict[tuple[str, int], float]:
        """Mean of a metric over (class, query) cells, per strategy and
        iteration; classes weigh uniformly."""
        sums: dict[tuple[str, int], list[float]] = {}
        for r in self.rows:
            sums.setdefault((r.strategy, r.iteration), []).append(getattr(r, metric))
        return {key: float(np.mean(vals)) for key, vals in sums.items()}


@dataclass(frozen=True)
class SizeBinRow:
    strategy: str
    bin_label: str
    bin_low: float
    bin_high: float
    num_classes: int
    means: dict[str, float]


def bin_by_class_size(table: ResultTable, bins, iteration: int) -> list[SizeBinRow]:
    """Mean of every metric per strategy per class-size bin at one iteration.

    Bin edges are inclusive on the left (a class sitting exactly on an edge
    belongs to the bin that starts there); under- and overflow bins cover
    sizes outside the edge list. Empty bins are flagged via a zero class
    count, not an error.
    """
    bins = list(bins)
    if any(b1 >= b2 for b1, b2 in zip(bins, bins[1:])):
        raise ValueError("size bins must be strictly ascending")
    rows_at = [r for r in table.rows if r.iteration == iteration]
    if not rows_at:
        raise ValueError(f"no rows at iteration {iteration}")
    edges = [float("-inf")] + [float(b) for b in bins] + [float("inf")]

    def bin_index(size: int) -> int:
        return int(np.digitize(size, bins, right=False))

    strategies = sorted({r.strategy for r in rows_at})
    out: list[SizeBinRow] = []
    for strategy in strategies:
        grouped: dict[int, list[ResultRow]] = {i: [] for i in range(len(edges) - 1)}
        classes_in_bin: dict[int, set[int]] = {i: set() for i in range(len(edges) - 1)}
        for r in rows_at:
            if r.strategy != strategy:
                continue
            size = table.class_sizes.get(r.class_id)
            if size is None:
                raise ValueError(f"no class size recorded for class {r.class_id}")
            idx = bin_index(size)
            grouped[idx].append(r)
            classes_in_bin[idx].add(r.class_id)
        for idx in range(len(edges) - 1):
            low, high = edges[idx], edges[idx + 1]
            label = f"[{low:g},{high:g})"
            members = grouped[idx]
            if not members:
                logger.info("size bin %s is empty for strategy %s", label, strategy)
                out.append(SizeBinRow(strategy, label, low, high, 0, {}))
                continue
            means = {m: float(np.mean([getattr(r, m) for r in members]))
                     for m in METRIC_NAMES}
            out.append(SizeBinRow(strategy, label, low, high,
                                  len(classes_in_bin[idx]), means))
    return out


def eligible_classes(dataset: EmbeddedDataset, config: ExperimentConfig) -> list[int]:
    """Classes the sweep will run, honoring the filter; classes too small to
    form a query and still have discoverable members are skipped."""
    sizes = {c: dataset.class_pool_members(c).size
             for c in range(dataset.num_classes)}
    flt = config.class_filter
    if flt == "all":
        candidates = sorted(sizes)
    elif isinstance(flt, dict):
        lo = flt.get("min_size", 0)
        hi = flt.get("max_size", float("inf"))
        candidates = sorted(c for c, s in sizes.items() if lo <= s <= hi)
    else:
        candidates = sorted(int(c) for c in flt)
        unknown = [c for c in candidates if c not in sizes]
        if unknown:
            raise ValueError(f"class filter names unknown class {unknown[0]}")
    selected = []
    min_size = config.session.N_p + 1
    for c in candidates:
        if sizes[c] < min_size:
            logger.info("skipping class %d: %d pool members < N_p + 1 = %d",
                        c, sizes[c], min_size)
            continue
        selected.append(c)
    if not selected:
        raise ValueError("class filter matched no eligible classes")
    return selected


def coverage_eligibility(dataset: EmbeddedDataset, config: CoverageConfig) -> float:
    """Fraction of classes with enough pool members for full-K clustering;
    the metric itself always falls back to singletons below K."""
    sizes = [dataset.class_pool_members(c).size for c in range(dataset.num_classes)]
    return float(np.mean([s >= config.K for s in sizes]))


def _strategy_seed_index(token: str) -> int:
    return STRATEGY_TOKENS.index(token)


def _run_class_cell(dataset: EmbeddedDataset, config: ExperimentConfig,
                    class_id: int) -> list[ResultRow]:
    clusters = build_class_clusters(dataset, class_id, config.coverage)
    class_size = dataset.class_pool_members(class_id).size
    annotator = OracleAnnotator(dataset, class_id)
    rows: list[ResultRow] = []
    for q in range(config.Q):
        query = sample_initial_query(
            dataset, class_id, config.session.N_p, config.session.N_n,
            seed=derive_seed(config.seed, class_id, q))
        for strategy in config.strategies:
            run_seed = derive_seed(config.seed, class_id, q,
                                   _strategy_seed_index(strategy))
            session_config = replace(
                config.session, strategy=strategy, seed=run_seed,
                classifier=replace(config.session.classifier, seed=run_seed))
            evaluator = SessionEvaluator(dataset, class_id, clusters,
                                         class_size=class_size)
            result = run_session(dataset, query, session_config, annotator,
                                 evaluator)
            rows.extend(
                ResultRow(strategy, class_id, q, m.iteration,
                          m.cov, m.pos, m.batch_ratio, m.f1)
                for m in result.metrics
            )
    return rows


_WORKER_STATE: dict = {}


def _init_worker(manifest_path: str, normalize: bool) -> None:
    _WORKER_STATE["dataset"] = load_dataset(manifest_path, normalize=normalize)


def _worker_run_class(args) -> list[ResultRow]:
    config, class_id = args
    return _run_class_cell(_WORKER_STATE["dataset"], config, class_id)


def run_experiment(config: ExperimentConfig, workers: int = 1,
                   progress: bool = False) -> ResultTable:
    """Full sweep; rows are assembled in a fixed order so exports are
    byte-identical for identical configs, independent of worker count."""
    dataset = load_dataset(config.dataset, normalize=config.normalize)
    classes = eligible_classes(dataset, config)
    class_sizes = {c: int(dataset.class_pool_members(c).size) for c in classes}

    rows: list[ResultRow] = []
    if workers > 1:
        with ProcessPoolExecutor(
                max_workers=workers, initializer=_init_worker,
                initargs=(config.dataset, config.normalize)) as pool:
            for i, class_rows in enumerate(pool.map(
                    _worker_run_class, [(config, c) for c in classes])):
                rows.extend(class_rows)
                if progress:
                    print(f"class {classes[i]} done "
                          f"({i + 1}/{len(classes)})", flush=True)
    else:
        for i, class_id in enumerate(classes):
            rows.extend(_run_class_cell(dataset, config, class_id))
            if progress:
                print(f"class {class_id} done ({i + 1}/{len(classes)})",
                      flush=True)
    return ResultTable(rows, class_sizes)


def _format_value(v) -> str:
    return str(v)


def export(table: ResultTable, fmt: str, path: Path | str) -> Path:
    """Write the table as CSV or JSONL with the fixed column set."""
    if not table.rows:
        raise ValueError("refusing to export an empty table")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(EXPORT_COLUMNS)
            for r in table.rows:
                writer.writerow([r.strategy, r.class_id, r.query, r.iteration,
                                 _format_value(r.cov), _format_value(r.pos),
                                 _format_value(r.batch_ratio),
                                 _format_value(r.f1)])
    elif fmt == "jsonl":
        with path.open("w") as fh:
            for r in table.rows:
                fh.write(json.dumps({
                    "strategy": r.strategy, "class": r.class_id,
                    "query": r.query, "iteration": r.iteration,
                    "cov": r.cov, "pos": r.pos,
                    "batch_ratio": r.batch_ratio, "f1": r.f1,
                }) + "\n")
    else:
        raise ValueError(f"unknown export format {fmt!r}; use 'csv' or 'jsonl'")
    return path


def read_table(path: Path | str) -> ResultTable:
    """Load an exported table (CSV or JSONL, inferred from the suffix)."""
    path = Path(path)
    rows: list[ResultRow] = []
    if path.suffix == ".jsonl":
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            rows.append(ResultRow(obj["strategy"], int(obj["class"]),
                                  int(obj["query"]), int(obj["iteration"]),
                                  float(obj["cov"]), float(obj["pos"]),
                                  float(obj["batch_ratio"]), float(obj["f1"])))
    else:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != EXPORT_COLUMNS:
                raise ValueError(f"unexpected CSV header: {header}")
            for rec in reader:
                rows.append(ResultRow(rec[0], int(rec[1]), int(rec[2]),
                                      int(rec[3]), float(rec[4]), float(rec[5]),
                                      float(rec[6]), float(rec[7])))
    return ResultTable(rows)
