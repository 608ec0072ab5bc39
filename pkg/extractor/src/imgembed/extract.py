"""Image folder + labels CSV -> binary embedding dataset.

The labels CSV (columns exactly ``path,class_name``) is authoritative for
row order; shuffling the image directory listing changes nothing.
Unreadable images are skipped with a logged id and the manifest reflects
the final count. Class ids are assigned by sorted class name.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .backbones import load_backbone
from .dataset_format import write_dataset

logger = logging.getLogger(__name__)

LABEL_COLUMNS = ("path", "class_name")


@dataclass(frozen=True)
class ExtractSpec:
    images_root: Path
    labels_csv: Path
    backbone: str
    output_manifest: Path
    batch_size: int = 32
    normalize: bool = True
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.test_fraction < 1.0):
            raise ValueError(
                f"test_fraction must be in (0, 1), got {self.test_fraction}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def read_labels(labels_csv: Path) -> list[tuple[str, str]]:
    """Rows of (relative image path, class name), in file order."""
    with Path(labels_csv).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != LABEL_COLUMNS:
            raise ValueError(
                f"labels CSV must have columns exactly {','.join(LABEL_COLUMNS)}, "
                f"got {header}"
            )
        rows = [(rec[0], rec[1]) for rec in reader if rec]
    if not rows:
        raise ValueError(f"labels CSV {labels_csv} lists no images")
    return rows


def stratified_split(labels: np.ndarray, test_fraction: float,
                     seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded per-class pool/test split."""
    rng = np.random.default_rng(seed)
    pool_parts, test_parts = [], []
    for class_id in np.unique(labels):
        ids = np.flatnonzero(labels == class_id)
        perm = rng.permutation(ids)
        n_test = round(ids.size * test_fraction)
        test_parts.append(np.sort(perm[:n_test]))
        pool_parts.append(np.sort(perm[n_test:]))
    return (np.sort(np.concatenate(pool_parts)),
            np.sort(np.concatenate(test_parts)))


def extract(spec: ExtractSpec) -> Path:
    """Run the pipeline; returns the manifest path."""
    rows = read_labels(spec.labels_csv)
    class_names = sorted({name for _, name in rows})
    class_ids = {name: i for i, name in enumerate(class_names)}

    backbone = load_backbone(spec.backbone)
    logger.info("backbone %s, width %d", backbone.name, backbone.width)

    features: list[np.ndarray] = []
    labels: list[int] = []
    kept_paths: list[str] = []
    batch_images, batch_meta = [], []

    def flush():
        if not batch_images:
            return
        embedded = backbone.embed(batch_images)
        if embedded.shape != (len(batch_images), backbone.width):
            raise RuntimeError(
                f"backbone returned shape {embedded.shape}, expected "
                f"({len(batch_images)}, {backbone.width})"
            )
        features.append(embedded.astype(np.float32))
        for path, class_id in batch_meta:
            labels.append(class_id)
            kept_paths.append(path)
        batch_images.clear()
        batch_meta.clear()

    for row_index, (rel_path, class_name) in enumerate(rows):
        if class_name not in class_ids:
            raise ValueError(f"unknown class name {class_name!r}")
        full = Path(spec.images_root) / rel_path
        try:
            with Image.open(full) as img:
                batch_images.append(img.convert("RGB").copy())
        except OSError as exc:
            logger.warning("skipping row %d (%s): %s", row_index, rel_path, exc)
            continue
        batch_meta.append((str(full.resolve()), class_ids[class_name]))
        if len(batch_images) >= spec.batch_size:
            flush()
    flush()

    if not labels:
        raise ValueError("no readable images; nothing to extract")

    matrix = np.vstack(features)
    if spec.normalize:
        norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
        if np.any(norms == 0.0):
            raise ValueError("cannot normalize a zero embedding row")
        matrix = (matrix / norms[:, None]).astype(np.float32)

    label_arr = np.asarray(labels, dtype=np.int64)
    pool, test = stratified_split(label_arr, spec.test_fraction, spec.seed)

    out = Path(spec.output_manifest)
    name = out.name.removesuffix(".manifest.json").removesuffix(".json")
    manifest_path = write_dataset(
        out.parent, name, matrix, label_arr,
        {"pool": pool, "test": test}, class_names, image_paths=kept_paths)
    if manifest_path != out:
        manifest_path.replace(out)
        manifest_path = out
    return manifest_path
