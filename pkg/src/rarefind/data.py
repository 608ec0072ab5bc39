"""Embedding dataset storage: manifests, raw binary IO, splits, class statistics.

On-disk layout (all little-endian, no headers; shapes live in the manifest):

- features file: IEEE-754 float32, row-major, ``4 * num_samples * dim`` bytes
- labels file:   uint32, one class id per sample
- split files:   uint32 sample indices, one file per split

The manifest is a JSON document naming those files; ``"pool"`` and ``"test"``
splits are mandatory and must be disjoint. Oracle labels ride along inside the
dataset but are reserved for annotation and evaluation; selection code never
reads them.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

FEATURE_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<u4")
INDEX_DTYPE = np.dtype("<u4")
REQUIRED_SPLITS = ("pool", "test")

NORM_TOLERANCE = 1e-6


class DatasetError(Exception):
    """Base class for dataset loading and validation failures."""


class ManifestError(DatasetError):
    """The manifest file is missing, unparsable, or violates its invariants."""


class DatasetFormatError(DatasetError):
    """A referenced binary file does not match the manifest's shape."""


@dataclass(frozen=True)
class DatasetManifest:
    """Description of one embedding dataset, as stored in its JSON manifest.

    ``image_paths`` is optional and only used by the annotation service to
    serve thumbnails; paths are resolved relative to the manifest location.
    """

    name: str
    dim: int
    num_samples: int
    features_file: str
    labels_file: str
    split_files: dict[str, str]
    class_names: list[str]
    image_paths: list[str] | None = None

    def validate(self) -> None:
        if not self.name:
            raise ManifestError("manifest field 'name' must be a non-empty string")
        if self.dim < 1:
            raise ManifestError(f"dim must be >= 1, got {self.dim}")
        if self.num_samples < 1:
            raise ManifestError(f"num_samples must be >= 1, got {self.num_samples}")
        for split in REQUIRED_SPLITS:
            if split not in self.split_files:
                raise ManifestError(f"required split {split!r} missing from split_files")
        if not self.class_names:
            raise ManifestError("class_names must list at least one class")
        if self.image_paths is not None and len(self.image_paths) != self.num_samples:
            raise ManifestError(
                f"image_paths has {len(self.image_paths)} entries for "
                f"{self.num_samples} samples"
            )

    @classmethod
    def from_json(cls, path: Path | str) -> "DatasetManifest":
        path = Path(path)
        if not path.is_file():
            raise ManifestError(f"manifest not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
        required = ("name", "dim", "num_samples", "features_file", "labels_file",
                    "split_files", "class_names")
        missing = [key for key in required if key not in raw]
        if missing:
            raise ManifestError(f"manifest {path} missing keys: {', '.join(missing)}")
        manifest = cls(
            name=raw["name"],
            dim=int(raw["dim"]),
            num_samples=int(raw["num_samples"]),
            features_file=raw["features_file"],
            labels_file=raw["labels_file"],
            split_files=dict(raw["split_files"]),
            class_names=list(raw["class_names"]),
            image_paths=list(raw["image_paths"]) if raw.get("image_paths") else None,
        )
        manifest.validate()
        return manifest

    def to_json(self, path: Path | str) -> None:
        payload: dict = {
            "name": self.name,
            "dim": self.dim,
            "num_samples": self.num_samples,
            "features_file": self.features_file,
            "labels_file": self.labels_file,
            "split_files": self.split_files,
            "class_names": self.class_names,
        }
        if self.image_paths is not None:
            payload["image_paths"] = self.image_paths
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


class EmbeddedDataset:
    """An immutable feature matrix plus oracle labels and resolved splits.

    Instances are safe to share across concurrent readers; all arrays are
    marked read-only after construction.
    """

    def __init__(
        self,
        manifest: DatasetManifest,
        features: np.ndarray,
        labels: np.ndarray,
        splits: dict[str, np.ndarray],
        normalized: bool,
    ):
        self.manifest = manifest
        self.features = features
        self._labels = labels
        self.splits = splits
        self.normalized = normalized
        self.features.flags.writeable = False
        self._labels.flags.writeable = False
        for idx in self.splits.values():
            idx.flags.writeable = False

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.manifest.class_names)

    @property
    def pool_indices(self) -> np.ndarray:
        return self.splits["pool"]

    @property
    def test_indices(self) -> np.ndarray:
        return self.splits["test"]

    @property
    def oracle_labels(self) -> np.ndarray:
        """Ground-truth class ids. For annotation and evaluation only;
        selection strategies must not read these."""
        return self._labels

    def class_pool_members(self, class_id: int) -> np.ndarray:
        """Pool-split sample ids belonging to ``class_id``, ascending."""
        pool = self.pool_indices
        return pool[self._labels[pool] == class_id]


def _resolve(base: Path, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else base / p


def _read_array(path: Path, dtype: np.dtype, what: str) -> np.ndarray:
    if not path.is_file():
        raise DatasetFormatError(f"{what} file not found: {path}")
    return np.fromfile(path, dtype=dtype)


def load_dataset(manifest_path: Path | str, normalize: bool = True) -> EmbeddedDataset:
    """Load and validate a dataset from its manifest.

    With ``normalize`` (the default) every feature row is scaled to unit
    Euclidean norm; the flag should be recorded in any run configuration that
    consumes the dataset.

    Raises:
        ManifestError: bad or missing manifest.
        DatasetFormatError: missing files, size mismatches, non-finite
            values, out-of-range labels or split indices, overlapping splits.
    """
    manifest_path = Path(manifest_path)
    manifest = DatasetManifest.from_json(manifest_path)
    base = manifest_path.parent
    n, d = manifest.num_samples, manifest.dim

    features_path = _resolve(base, manifest.features_file)
    raw = _read_array(features_path, FEATURE_DTYPE, "features")
    expected = n * d
    if raw.size != expected:
        raise DatasetFormatError(
            f"features file {features_path}: expected {expected * 4} bytes "
            f"({n} x {d} float32), got {raw.size * 4}"
        )
    features = raw.reshape(n, d)

    bad = ~np.isfinite(features)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DatasetFormatError(
            f"non-finite feature value at row {row}, column {col}"
        )

    labels_raw = _read_array(_resolve(base, manifest.labels_file), LABEL_DTYPE, "labels")
    if labels_raw.size != n:
        raise DatasetFormatError(
            f"labels file: expected {n} entries, got {labels_raw.size}"
        )
    labels = labels_raw.astype(np.int64)
    if labels.max(initial=0) >= len(manifest.class_names):
        offender = int(labels.max())
        raise DatasetFormatError(
            f"label {offender} out of range for {len(manifest.class_names)} classes"
        )

    splits: dict[str, np.ndarray] = {}
    for name, rel in manifest.split_files.items():
        idx = _read_array(_resolve(base, rel), INDEX_DTYPE, f"split {name!r}").astype(np.int64)
        if idx.size and idx.max() >= n:
            raise DatasetFormatError(
                f"split {name!r} contains index {int(idx.max())} >= num_samples {n}"
            )
        splits[name] = idx
    overlap = np.intersect1d(splits["pool"], splits["test"])
    if overlap.size:
        raise DatasetFormatError(
            f"'pool' and 'test' splits overlap on {overlap.size} indices "
            f"(first: {int(overlap[0])})"
        )

    if normalize:
        norms = np.linalg.norm(features.astype(np.float64), axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise DatasetFormatError(
                f"cannot normalize zero-norm feature row {int(zero[0])}"
            )
        features = (features / norms[:, None].astype(np.float32)).astype(FEATURE_DTYPE)

    return EmbeddedDataset(manifest, features, labels, splits, normalized=normalize)


def write_dataset(
    out_dir: Path | str,
    name: str,
    features: np.ndarray,
    labels: np.ndarray,
    splits: dict[str, np.ndarray],
    class_names: list[str],
    image_paths: list[str] | None = None,
) -> Path:
    """Export arrays in the binary dataset format; returns the manifest path.

    The inverse of :func:`load_dataset` (with ``normalize`` off): reloading
    yields bit-identical features and labels.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    features = np.ascontiguousarray(features, dtype=FEATURE_DTYPE)
    n = features.shape[0]
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match {n} samples")

    features.tofile(out_dir / f"{name}.features.f32")
    np.ascontiguousarray(labels, dtype=LABEL_DTYPE).tofile(out_dir / f"{name}.labels.u32")
    split_files = {}
    for split, idx in splits.items():
        fname = f"{name}.{split}.u32"
        np.ascontiguousarray(idx, dtype=INDEX_DTYPE).tofile(out_dir / fname)
        split_files[split] = fname

    manifest = DatasetManifest(
        name=name,
        dim=features.shape[1],
        num_samples=n,
        features_file=f"{name}.features.f32",
        labels_file=f"{name}.labels.u32",
        split_files=split_files,
        class_names=class_names,
        image_paths=image_paths,
    )
    manifest.validate()
    manifest_path = out_dir / f"{name}.manifest.json"
    manifest.to_json(manifest_path)
    return manifest_path


def export_dataset(dataset: EmbeddedDataset, out_dir: Path | str) -> Path:
    """Write an already-loaded dataset back out in the binary format."""
    return write_dataset(
        out_dir,
        dataset.manifest.name,
        dataset.features,
        dataset.oracle_labels,
        dataset.splits,
        dataset.manifest.class_names,
        dataset.manifest.image_paths,
    )


@dataclass(frozen=True)
class ClassStats:
    """Per-class pool sizes and frequencies, plus aggregate frequency stats.

    Aggregates are computed over classes with at least one pool member;
    ``sizes`` and ``frequencies`` still carry one entry per declared class.
    """

    sizes: np.ndarray
    frequencies: np.ndarray
    pool_size: int
    min_frequency: float
    max_frequency: float
    mean_frequency: float
    median_frequency: float


def class_stats(dataset: EmbeddedDataset) -> ClassStats:
    """Class-frequency statistics over the retrieval pool split."""
    pool = dataset.pool_indices
    if pool.size == 0:
        raise DatasetError("pool split is empty; no class statistics to compute")
    sizes = np.bincount(dataset.oracle_labels[pool], minlength=dataset.num_classes)
    freqs = sizes / pool.size
    present = freqs[sizes > 0]
    return ClassStats(
        sizes=sizes,
        frequencies=freqs,
        pool_size=int(pool.size),
        min_frequency=float(present.min()),
        max_frequency=float(present.max()),
        mean_frequency=float(present.mean()),
        median_frequency=float(np.median(present)),
    )
