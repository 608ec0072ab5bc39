"""Writers for the retrieval engine's on-disk dataset format.

This mirrors the engine's documented interop contract: little-endian
float32 features (row-major, headerless), uint32 labels and split indices,
and a JSON manifest naming the files. Shapes live in the manifest only.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FEATURE_DTYPE = "<f4"
INDEX_DTYPE = "<u4"


def write_dataset(
    out_dir: Path | str,
    name: str,
    features: np.ndarray,
    labels: np.ndarray,
    splits: dict[str, np.ndarray],
    class_names: list[str],
    image_paths: list[str] | None = None,
) -> Path:
    """Write the binary files plus manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    features = np.ascontiguousarray(features, dtype=FEATURE_DTYPE)
    n, dim = features.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match {n} rows")
    if image_paths is not None and len(image_paths) != n:
        raise ValueError("image_paths length must match the row count")

    features.tofile(out_dir / f"{name}.features.f32")
    np.ascontiguousarray(labels, dtype=INDEX_DTYPE).tofile(
        out_dir / f"{name}.labels.u32")
    split_files = {}
    for split, idx in splits.items():
        fname = f"{name}.{split}.u32"
        np.ascontiguousarray(idx, dtype=INDEX_DTYPE).tofile(out_dir / fname)
        split_files[split] = fname

    manifest = {
        "name": name,
        "dim": dim,
        "num_samples": n,
        "features_file": f"{name}.features.f32",
        "labels_file": f"{name}.labels.u32",
        "split_files": split_files,
        "class_names": class_names,
    }
    if image_paths is not None:
        manifest["image_paths"] = image_paths
    manifest_path = out_dir / f"{name}.manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path
