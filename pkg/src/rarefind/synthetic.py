"""Seeded long-tailed synthetic datasets for desk-scale benchmarking.

Classes are Gaussian mixtures: each class gets a random unit-sphere center,
a configurable number of modes offset around it, and per-sample noise, so
the coverage metric sees genuine sub-structure. Class sizes follow a
truncated power law between the configured bounds. Everything derives from
one seed; identical specs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import EmbeddedDataset, load_dataset, write_dataset

TEST_FRACTION = 0.2


@dataclass(frozen=True)
class SyntheticSpec:
    name: str = "synthetic"
    num_classes: int = 50
    dim: int = 64
    min_class_size: int = 5
    max_class_size: int = 500
    power_exponent: float = 0.5
    modes_per_class: int = 5
    mode_spread: float = 0.35
    noise_scale: float = 0.1
    seed: int = 42
    # explicit per-class sizes override the power law when given
    class_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if not (1 <= self.min_class_size <= self.max_class_size):
            raise ValueError(
                f"need 1 <= min_class_size <= max_class_size, got "
                f"{self.min_class_size}..{self.max_class_size}"
            )
        if self.modes_per_class < 1:
            raise ValueError("modes_per_class must be >= 1")
        if self.power_exponent < 0:
            raise ValueError("power_exponent must be >= 0")
        if self.class_sizes is not None:
            object.__setattr__(self, "class_sizes", tuple(self.class_sizes))
            if len(self.class_sizes) != self.num_classes:
                raise ValueError(
                    f"class_sizes lists {len(self.class_sizes)} sizes for "
                    f"{self.num_classes} classes"
                )
            if any(s < 1 for s in self.class_sizes):
                raise ValueError("class sizes must be >= 1")

    @classmethod
    def from_json(cls, path: Path | str) -> "SyntheticSpec":
        raw = json.loads(Path(path).read_text())
        if raw.get("class_sizes") is not None:
            raw["class_sizes"] = tuple(raw["class_sizes"])
        return cls(**raw)

    def to_json(self, path: Path | str) -> None:
        payload = asdict(self)
        if payload.get("class_sizes") is not None:
            payload["class_sizes"] = list(payload["class_sizes"])
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _power_law_sizes(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Class sizes drawn from p(s) ~ s^-a truncated to [min, max],
    via the inverse CDF."""
    lo, hi, a = float(spec.min_class_size), float(spec.max_class_size), spec.power_exponent
    u = rng.random(spec.num_classes)
    if hi == lo:
        sizes = np.full(spec.num_classes, lo)
    elif abs(a - 1.0) < 1e-12:
        sizes = lo * (hi / lo) ** u
    else:
        e = 1.0 - a
        sizes = ((hi ** e - lo ** e) * u + lo ** e) ** (1.0 / e)
    return np.clip(np.round(sizes), spec.min_class_size,
                   spec.max_class_size).astype(np.int64)


def generate_synthetic(spec: SyntheticSpec, out_dir: Path | str,
                       normalize: bool = True) -> tuple[EmbeddedDataset, Path]:
    """Generate, write, and reload a synthetic dataset.

    Returns the loaded dataset (row-normalized unless ``normalize`` is off)
    and the manifest path. The pool/test split is 80/20, stratified per
    class, seeded. The returned dataset carries the generator's per-sample
    mode assignment as a ``synthetic_modes`` attribute for diagnostics.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed]))
    if spec.class_sizes is not None:
        sizes = np.asarray(spec.class_sizes, dtype=np.int64)
    else:
        sizes = _power_law_sizes(spec, rng)
    total = int(sizes.sum())

    centers = rng.normal(size=(spec.num_classes, spec.dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    features = np.empty((total, spec.dim), dtype=np.float64)
    labels = np.empty(total, dtype=np.int64)
    modes_out = np.empty(total, dtype=np.int64)
    pool_parts: list[np.ndarray] = []
    test_parts: list[np.ndarray] = []

    row = 0
    for class_id, size in enumerate(sizes):
        size = int(size)
        mode_offsets = rng.normal(size=(spec.modes_per_class, spec.dim))
        mode_offsets *= spec.mode_spread / np.sqrt(spec.dim)
        modes = centers[class_id] + mode_offsets

        assignment = rng.integers(spec.modes_per_class, size=size)
        noise = rng.normal(size=(size, spec.dim)) * (spec.noise_scale / np.sqrt(spec.dim))
        features[row:row + size] = modes[assignment] + noise
        labels[row:row + size] = class_id
        modes_out[row:row + size] = assignment

        ids = np.arange(row, row + size, dtype=np.int64)
        perm = rng.permutation(ids)
        n_test = round(size * TEST_FRACTION)
        test_parts.append(np.sort(perm[:n_test]))
        pool_parts.append(np.sort(perm[n_test:]))
        row += size

    splits = {
        "pool": np.sort(np.concatenate(pool_parts)),
        "test": np.sort(np.concatenate(test_parts)),
    }
    class_names = [f"class_{i:03d}" for i in range(spec.num_classes)]
    manifest_path = write_dataset(out_dir, spec.name,
                                  features.astype(np.float32), labels,
                                  splits, class_names)
    dataset = load_dataset(manifest_path, normalize=normalize)
    dataset.synthetic_modes = modes_out
    return dataset, manifest_path
