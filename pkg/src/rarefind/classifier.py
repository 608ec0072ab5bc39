"""Per-iteration binary classifier: hinge-loss linear SVM with a fixed
logistic calibration.

Training solves the L2-regularized L1-hinge problem by dual coordinate
descent (liblinear); with a fixed ``seed`` and pool order the fitted weights
are bit-reproducible. Scores are ``logistic(w . x + b)``, so 0.5 corresponds
exactly to the decision boundary. No calibration parameters are fitted: with
labeled pools as small as six samples a fitted calibrator would be ill-posed,
and the fixed map preserves the margin-zero threshold the selection criteria
rely on.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit
from sklearn.exceptions import ConvergenceWarning
from sklearn.svm import LinearSVC

from .data import EmbeddedDataset, FEATURE_DTYPE

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassifierConfig:
    """Solver settings. ``class_weighting="balanced"`` scales the hinge
    penalty of the minority label by n_majority / n_minority."""

    C: float = 1.0
    max_epochs: int = 1000
    tolerance: float = 1e-4
    class_weighting: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.class_weighting not in ("uniform", "balanced"):
            raise ValueError(
                f"class_weighting must be 'uniform' or 'balanced', got {self.class_weighting!r}"
            )


class LabeledPool:
    """The growing annotated set: unique sample ids with binary labels,
    insertion order preserved.

    Re-adding an id overwrites its label in place (a user correcting
    themselves) and logs a warning event.
    """

    def __init__(self, entries: dict[int, int] | None = None):
        self._entries: dict[int, int] = {}
        if entries:
            for sample_id, label in entries.items():
                self.add(sample_id, label)

    def add(self, sample_id: int, label: int) -> None:
        sample_id = int(sample_id)
        label = int(label)
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label}")
        if sample_id in self._entries and self._entries[sample_id] != label:
            logger.warning(
                "sample %d relabeled from %d to %d",
                sample_id, self._entries[sample_id], label,
            )
        self._entries[sample_id] = label

    def extend(self, sample_ids, labels) -> None:
        for sample_id, label in zip(sample_ids, labels, strict=True):
            self.add(sample_id, label)

    @classmethod
    def from_arrays(cls, sample_ids: np.ndarray, labels: np.ndarray) -> "LabeledPool":
        """Bulk constructor for ids already known to be unique and binary."""
        sample_ids = np.asarray(sample_ids, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if sample_ids.shape != labels.shape:
            raise ValueError("sample_ids and labels must have equal length")
        if labels.size and (labels.min() < 0 or labels.max() > 1):
            raise ValueError("labels must be 0 or 1")
        pool = cls()
        pool._entries = dict(zip(sample_ids.tolist(), labels.tolist()))
        if len(pool._entries) != sample_ids.size:
            raise ValueError("sample ids must be unique")
        return pool

    def ids(self) -> np.ndarray:
        return np.fromiter(self._entries.keys(), dtype=np.int64, count=len(self._entries))

    def labels(self) -> np.ndarray:
        return np.fromiter(self._entries.values(), dtype=np.int64, count=len(self._entries))

    def positives(self) -> np.ndarray:
        return np.array([i for i, l in self._entries.items() if l == 1], dtype=np.int64)

    def negatives(self) -> np.ndarray:
        return np.array([i for i, l in self._entries.items() if l == 0], dtype=np.int64)

    def __contains__(self, sample_id: int) -> bool:
        return int(sample_id) in self._entries

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class ClassifierModel:
    """Fitted separator: weight vector, bias, and the training-set size."""

    weights: np.ndarray
    bias: float
    train_size: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ValueError("model parameters must be finite")

    def margins(self, features: np.ndarray) -> np.ndarray:
        """Raw decision values w . x + b for a feature matrix."""
        if features.shape[-1] != self.weights.shape[0]:
            raise ValueError(
                f"feature dim {features.shape[-1]} does not match model dim "
                f"{self.weights.shape[0]}"
            )
        if features.dtype == FEATURE_DTYPE:
            # float32 matvec avoids an upcast copy of the full matrix
            raw = features @ self.weights.astype(np.float32)
            return raw.astype(np.float64) + self.bias
        return features @ self.weights + self.bias

    def save(self, path: Path | str) -> None:
        """Serialize as dim+1 little-endian float32 values (weights, bias)."""
        arr = np.concatenate([self.weights, [self.bias]]).astype("<f4")
        arr.tofile(Path(path))

    @classmethod
    def load(cls, path: Path | str, dim: int, train_size: int = 0) -> "ClassifierModel":
        arr = np.fromfile(Path(path), dtype="<f4")
        if arr.size != dim + 1:
            raise ValueError(f"model file holds {arr.size} values, expected {dim + 1}")
        return cls(weights=arr[:-1].astype(np.float64), bias=float(arr[-1]),
                   train_size=train_size)


def train(pool: LabeledPool, dataset: EmbeddedDataset,
          config: ClassifierConfig | None = None) -> ClassifierModel:
    """Fit the linear separator on the labeled pool.

    Requires at least one sample of each label. Hitting the epoch cap is a
    valid stopping rule, so liblinear's convergence warning is demoted to a
    debug log event.
    """
    config = config or ClassifierConfig()
    ids = pool.ids()
    y = pool.labels()
    if len(ids) == 0 or y.min(initial=1) == y.max(initial=0):
        raise ValueError("training requires at least one positive and one negative label")
    if ids.min() < 0 or ids.max() >= dataset.num_samples:
        raise IndexError(f"pool references sample id outside [0, {dataset.num_samples})")

    X = dataset.features[ids].astype(np.float64)

    class_weight = None
    if config.class_weighting == "balanced":
        counts = np.bincount(y, minlength=2)
        minority = int(np.argmin(counts))
        class_weight = {minority: counts[1 - minority] / counts[minority],
                        1 - minority: 1.0}

    svc = LinearSVC(
        loss="hinge",
        C=config.C,
        tol=config.tolerance,
        max_iter=config.max_epochs,
        class_weight=class_weight,
        fit_intercept=True,
        random_state=config.seed,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        svc.fit(X, y)
    if getattr(svc, "n_iter_", 0) >= config.max_epochs:
        logger.debug("solver stopped at the %d-epoch cap", config.max_epochs)

    return ClassifierModel(
        weights=svc.coef_.ravel(),
        bias=float(svc.intercept_[0]),
        train_size=len(ids),
    )


def predict(model: ClassifierModel, rows: np.ndarray,
            dataset: EmbeddedDataset) -> np.ndarray:
    """Scores in [0, 1] for the given sample ids.

    ``score = logistic(w . x + b)``; a score >= 0.5 corresponds exactly to a
    non-negative raw margin.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= dataset.num_samples):
        raise IndexError(f"sample id outside [0, {dataset.num_samples})")
    return expit(model.margins(dataset.features[rows]))


def scores_from_margins(margins: np.ndarray) -> np.ndarray:
    """The fixed calibration map applied to raw decision values."""
    return expit(np.asarray(margins, dtype=np.float64))
