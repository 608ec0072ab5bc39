"""Long-tailed subsampling of a balanced labels CSV.

Given a target imbalance factor, class keep-counts follow the standard
exponential decay profile: the class at rank i (by descending original
size) keeps ``n_max * factor**(-i / (C - 1))`` samples, so the smallest
class ends up ``factor`` times smaller than the largest. Sampling within a
class is seeded and the surviving rows keep their original CSV order.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .extract import LABEL_COLUMNS, read_labels


def long_tail_counts(class_sizes: dict[str, int], imbalance_factor: float) -> dict[str, int]:
    """Keep-count per class for the decay profile; rank 0 keeps everything."""
    if imbalance_factor < 1.0:
        raise ValueError(f"imbalance factor must be >= 1, got {imbalance_factor}")
    ranked = sorted(class_sizes, key=lambda name: (-class_sizes[name], name))
    n_max = class_sizes[ranked[0]]
    denominator = max(len(ranked) - 1, 1)
    counts = {}
    for rank, name in enumerate(ranked):
        target = n_max * imbalance_factor ** (-rank / denominator)
        counts[name] = max(1, min(class_sizes[name], round(target)))
    return counts


def make_long_tail(labels_csv: Path | str, out_csv: Path | str,
                   imbalance_factor: float, seed: int = 0) -> dict[str, int]:
    """Write the subsampled CSV; returns the per-class keep counts."""
    rows = read_labels(Path(labels_csv))
    class_sizes: dict[str, int] = {}
    for _, name in rows:
        class_sizes[name] = class_sizes.get(name, 0) + 1
    counts = long_tail_counts(class_sizes, imbalance_factor)

    rng = np.random.default_rng(seed)
    keep: set[int] = set()
    for name, target in counts.items():
        members = [i for i, (_, cls) in enumerate(rows) if cls == name]
        chosen = rng.choice(len(members), size=target, replace=False)
        keep.update(members[int(c)] for c in chosen)

    with Path(out_csv).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABEL_COLUMNS)
        for i, row in enumerate(rows):
            if i in keep:
                writer.writerow(row)
    return counts
