import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthdata import clustered_ratings, uniform_ratings  # noqa: E402

from logicrec.data import prepare
from logicrec.model import ModelConfig


@pytest.fixture(scope="session")
def clustered_blob() -> bytes:
    return clustered_ratings(seed=11)


@pytest.fixture(scope="session")
def uniform_blob() -> bytes:
    return uniform_ratings(seed=7)


@pytest.fixture(scope="session")
def clustered_split(clustered_blob):
    split, _ = prepare("ml100k", clustered_blob)
    return split


@pytest.fixture(scope="session")
def uniform_split(uniform_blob):
    split, _ = prepare("ml100k", uniform_blob)
    return split


@pytest.fixture()
def tiny_config() -> ModelConfig:
    return ModelConfig(d=16, layers=1, heads=2, n_max=5, epochs=3, patience=5,
                       batch_size=32, seed=3)
