#!/usr/bin/env python3
"""
Desk-scale MNIST checks. Skipped unless ILIBENCH_MNIST_DIR points at a
directory holding the four IDX files of the MNIST distribution.

Usage:
    ILIBENCH_MNIST_DIR=data/mnist python -m pytest scripts/test_mnist.py
"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

from ilibench.config import parse_config
from ilibench.dataset import load_idx
from ilibench.engine import run_plain, train_baseline
from ilibench.learner import per_class_accuracy
from ilibench.runner import cell_seed, make_cell, prepare_data

MNIST_DIR = os.environ.get("ILIBENCH_MNIST_DIR")
FILES = {
    "images": "train-images-idx3-ubyte",
    "labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

pytestmark = pytest.mark.skipif(
    not MNIST_DIR or not all((Path(MNIST_DIR) / f).exists() for f in FILES.values()),
    reason="set ILIBENCH_MNIST_DIR to a directory with the MNIST IDX files",
)


def _config(noise: dict, max_iterations: int = 10):
    return parse_config({
        "name": "mnist-test",
        "dataset": {"kind": "idx", "num_classes": 10,
                    **{k: str(Path(MNIST_DIR) / v) for k, v in FILES.items()}},
        "split": {"fractions": [0.9, 0.1]},
        "subset_cap": {"train": 10000, "val": 2000},
        "noise": noise,
        "ili": {
            "variant": "plain",
            "max_iterations": max_iterations,
            "early_stopping": {"enabled": False},
            "learner": {"architecture": "mlp", "hidden_units": 128, "epochs": 10},
        },
        "repetitions": 5,
    })


@pytest.fixture(scope="module")
def random_noise():
    cfg = _config({"kind": "random", "fraction": 0.6})
    return cfg, prepare_data(cfg)


def test_train_files_shape():
    ds = load_idx(Path(MNIST_DIR) / FILES["images"], Path(MNIST_DIR) / FILES["labels"])
    assert (len(ds), ds.num_features, ds.num_classes) == (60000, 784, 10)


def test_plain_ili_beats_noisy_baseline(random_noise):
    cfg, data = random_noise
    wins, steps, monotone = 0, 0, 0
    for rep in range(5):
        cell = make_cell(cfg, data, 0.6, cell_seed(cfg.base_seed, 0, rep))
        ili = cfg.ili[0].model_copy(update={"run_seed": cell.run_seed})
        result = run_plain(ili, cell.train, cell.val, data.test, clean_labels=cell.clean_labels)
        accs = [r.test_accuracy for r in result.history]
        wins += accs[-1] - accs[0] >= 0.02
        diffs = np.diff(accs)
        steps += len(diffs)
        monotone += int(np.sum(diffs >= -0.005))
    assert wins >= 4
    assert monotone >= 0.8 * steps


@pytest.mark.parametrize("fraction,check", [(1.0, lambda a: a < 0.1), (0.3, lambda a: a > 0.7)])
def test_bias_errors_erase_a_class(fraction, check):
    cfg = _config({"kind": "bias", "mapping": {4: 7}, "fraction": fraction}, max_iterations=1)
    data = prepare_data(cfg)
    cell = make_cell(cfg, data, fraction, cell_seed(cfg.base_seed, 0, 0))
    model = train_baseline(cfg.ili[0].model_copy(update={"run_seed": cell.run_seed}), cell.train)
    assert check(per_class_accuracy(model, data.test.features, data.test.labels, 4))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
