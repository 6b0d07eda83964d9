"""Shared fixtures: the desk-scale experiment corpus.

The acceptance experiments run on a 10,000-sample MNIST subset when the IDX
archives are on disk (HIGHWAYNET_DATA_DIR, default ./data; see
tools/fetch_mnist.py), and otherwise fall back to the deterministic
synthetic digit set so the suite runs fully offline.
"""

import os

import pytest

from highwaynet.data import Dataset, load_idx, subset, synthetic_digits
from highwaynet.ops import Rng

DATA_DIR = os.environ.get("HIGHWAYNET_DATA_DIR", "data")
MNIST_IMAGES = os.path.join(DATA_DIR, "train-images-idx3-ubyte")
MNIST_LABELS = os.path.join(DATA_DIR, "train-labels-idx1-ubyte")


def mnist_available() -> bool:
    return os.path.exists(MNIST_IMAGES) and os.path.exists(MNIST_LABELS)


def dataset_config_stanza() -> dict:
    """The CLI dataset section matching the desk_corpus fixture."""
    if mnist_available():
        return {"name": "mnist", "dir": DATA_DIR, "subset": 10000, "seed": 2026}
    return {"name": "synthetic", "count": 10000, "seed": 2026}


@pytest.fixture(scope="session")
def desk_corpus_10k() -> Dataset:
    if mnist_available():
        return subset(load_idx(MNIST_IMAGES, MNIST_LABELS), 10000, Rng(2026))
    return synthetic_digits(10000, seed=2026)


@pytest.fixture(scope="session")
def desk_corpus_2k(desk_corpus_10k) -> Dataset:
    ds = desk_corpus_10k
    return Dataset(ds.inputs[:2000], ds.labels[:2000], ds.num_classes, ds.name)
