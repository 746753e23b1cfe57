"""Shared fixtures: blob datasets and stand-in trainers for the ILI engine."""

from pathlib import Path

import numpy as np
import pytest

from ilibench.dataset import BayesOracle, Dataset, SplitPlan, make_blobs, split
from ilibench.learner import LearnerSpec

ROOT_DIR = Path(__file__).resolve().parent.parent
FIXTURES_DIR = ROOT_DIR / "fixtures"
CONFIGS_DIR = ROOT_DIR / "configs"

SOFTMAX = LearnerSpec(architecture="softmax", epochs=30, batch_size=32, learning_rate=0.05)


class OracleTrainer:
    """Trainer that ignores its data and returns the Bayes oracle."""

    def __init__(self, oracle: BayesOracle):
        self.oracle = oracle
        self.calls: list[tuple[np.ndarray, np.ndarray]] = []

    def train(self, X, y, num_classes, init_seed, fit_seed):
        self.calls.append((np.array(X), np.array(y)))
        return self.oracle


class BlobSplits:
    def __init__(self, train: Dataset, val: Dataset, test: Dataset, oracle: BayesOracle):
        self.train = train
        self.val = val
        self.test = test
        self.oracle = oracle


@pytest.fixture
def blob_splits():
    """Factory: blobs cut into train/val/test, plus the oracle that generated them."""

    def make(seed: int = 0, num_classes: int = 3, per_class: int = 400, separation: float = 6.0,
             dim: int = 2, fractions=(0.5, 0.25, 0.25)) -> BlobSplits:
        dataset, oracle = make_blobs(num_classes, per_class, dim, separation, seed)
        train, val, test = split(dataset, SplitPlan(fractions=list(fractions), seed=seed))
        return BlobSplits(train, val, test, oracle)

    return make


@pytest.fixture
def softmax_spec() -> LearnerSpec:
    return SOFTMAX
