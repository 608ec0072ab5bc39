import csv

import numpy as np
import pytest
from PIL import Image

from imgembed.backbones import Backbone, register


@pytest.fixture(autouse=True)
def tiny_backbone():
    """Deterministic 12-wide test encoder: 4x4 grayscale pixels through a
    fixed random projection."""
    projection = np.random.default_rng(1234).normal(size=(16, 12))

    def embed(images):
        rows = []
        for img in images:
            small = np.asarray(img.convert("L").resize((4, 4)), dtype=np.float64)
            rows.append(small.ravel() @ projection)
        return np.asarray(rows, dtype=np.float32)

    register("tiny-test", lambda: Backbone("tiny-test", 12, embed))
    return "tiny-test"


@pytest.fixture
def image_folder(tmp_path):
    """24 tiny PNGs across 3 classes plus the matching labels CSV."""
    rng = np.random.default_rng(7)
    images_root = tmp_path / "images"
    rows = []
    for i in range(24):
        class_name = ("heron", "kestrel", "plover")[i % 3]
        sub = images_root / class_name
        sub.mkdir(parents=True, exist_ok=True)
        pixels = rng.integers(0, 255, size=(8, 8, 3), dtype=np.uint8)
        rel = f"{class_name}/{i:03d}.png"
        Image.fromarray(pixels).save(images_root / rel)
        rows.append((rel, class_name))
    labels_csv = tmp_path / "labels.csv"
    with labels_csv.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("path", "class_name"))
        writer.writerows(rows)
    return images_root, labels_csv
