import numpy as np
import pytest

from rarefind.data import load_dataset, write_dataset


@pytest.fixture
def make_dataset(tmp_path):
    """Factory writing arrays out in the binary format and loading them back."""

    counter = {"n": 0}

    def _make(features, labels, pool=None, test=None, class_names=None,
              normalize=False, name=None, image_paths=None):
        features = np.asarray(features, dtype=np.float32)
        labels = np.asarray(labels, dtype=np.int64)
        n = features.shape[0]
        ids = np.arange(n, dtype=np.int64)
        if pool is None and test is None:
            pool, test = ids, np.empty(0, dtype=np.int64)
        if class_names is None:
            class_names = [f"c{i}" for i in range(int(labels.max()) + 1)]
        counter["n"] += 1
        name = name or f"toy{counter['n']}"
        manifest = write_dataset(
            tmp_path / name, name, features, labels,
            {"pool": np.asarray(pool, dtype=np.int64),
             "test": np.asarray(test, dtype=np.int64)},
            class_names, image_paths=image_paths)
        return load_dataset(manifest, normalize=normalize)

    return _make


@pytest.fixture
def blob_dataset(make_dataset):
    """Three well-separated Gaussian blobs in 8 dimensions, 120 points each,
    every fifth sample held out for the test split."""
    rng = np.random.default_rng(7)
    centers = rng.normal(size=(3, 8)) * 3.0
    features = np.vstack([
        centers[c] + rng.normal(0.0, 0.4, size=(120, 8)) for c in range(3)
    ])
    labels = np.repeat([0, 1, 2], 120)
    ids = np.arange(360)
    return make_dataset(features, labels, pool=ids[ids % 5 != 0],
                        test=ids[ids % 5 == 0], normalize=True)
