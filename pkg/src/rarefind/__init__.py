"""Interactive rare-class retrieval with relevance feedback.

The loop: train a lightweight linear classifier on the labeled pool, score
the unlabeled pool with a selection criterion, pick a budget-sized batch,
collect binary relevance labels, repeat. Retrieval quality is judged by how
broadly the discovered positives cover the class's visual modes, not just
how many were found.
"""

from .classifier import ClassifierConfig, ClassifierModel, LabeledPool, predict, train
from .data import (
    ClassStats,
    DatasetError,
    DatasetFormatError,
    DatasetManifest,
    EmbeddedDataset,
    ManifestError,
    class_stats,
    export_dataset,
    load_dataset,
    write_dataset,
)
from .metrics import (
    ClusterSets,
    CoverageConfig,
    DiscoveredSet,
    batch_positive_ratio,
    build_class_clusters,
    coverage,
    discovery_rate,
    f1_heldout,
)
from .session import (
    OracleAnnotator,
    Query,
    SessionConfig,
    SessionEvaluator,
    SessionResult,
    SessionState,
    absorb_batch,
    init_session,
    propose_batch,
    run_iteration,
    run_session,
    sample_initial_query,
)
from .strategies import (
    STRATEGY_TOKENS,
    CriterionScores,
    DiversifierConfig,
    MarginHistory,
    SelectionBatch,
    diversify_distance,
    diversify_step,
    score_alamp,
    score_dal,
    score_ma,
    score_mp,
    score_pfma,
    score_random,
    select_coreset,
    select_top,
)
from .synthetic import SyntheticSpec, generate_synthetic
from .bench import (
    ExperimentConfig,
    ResultRow,
    ResultTable,
    bin_by_class_size,
    export,
    read_table,
    run_experiment,
)

__version__ = "0.1.0"
