#!/usr/bin/env python3
"""
Tests for datasets: IDX parsing, CSV export, blobs and the Bayes oracle,
splits and partitions.

Usage:
    python -m pytest scripts/test_dataset.py
"""

import math
import struct
import sys

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import FIXTURES_DIR
from ilibench.dataset import (
    Dataset,
    PartitionPlan,
    SplitPlan,
    blob_means,
    dump_idx,
    load_csv,
    load_idx,
    load_idx_labels,
    make_blobs,
    partition,
    split,
    split_sizes,
    truncate,
)
from ilibench.errors import (
    ConfigError,
    DataError,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
)
from ilibench.seeding import rng

IMAGES = FIXTURES_DIR / "idx" / "tiny-images-idx3-ubyte"
LABELS = FIXTURES_DIR / "idx" / "tiny-labels-idx1-ubyte"


def _toy(n: int = 10, k: int = 2) -> Dataset:
    return Dataset(
        features=np.arange(2 * n, dtype=np.float64).reshape(n, 2),
        labels=np.arange(n) % k,
        num_classes=k,
    )


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------

def test_idx_fixture_scales_bytes():
    ds = load_idx(IMAGES, LABELS)
    expected = np.array([[0, 255, 128, 1], [127, 16, 32, 254]], dtype=np.float64) / 255.0
    assert ds.features.shape == (2, 4)
    assert np.array_equal(ds.features, expected)
    assert ds.labels.tolist() == [3, 7]
    assert ds.num_classes == 8
    assert ds.image_shape == (2, 2)


def test_idx_labels_only():
    assert load_idx_labels(LABELS).tolist() == [3, 7]


def test_idx_count_mismatch(tmp_path):
    labels = tmp_path / "labels"
    labels.write_bytes(struct.pack(">II", 0x801, 3) + bytes([1, 2, 3]))
    with pytest.raises(IdxCountMismatchError):
        load_idx(IMAGES, labels)


def test_idx_bad_magic(tmp_path):
    labels = tmp_path / "labels"
    labels.write_bytes(struct.pack(">II", 0x803, 2) + bytes([1, 2]))
    with pytest.raises(IdxMagicError):
        load_idx(IMAGES, labels)


def test_idx_truncated(tmp_path):
    images = tmp_path / "images"
    images.write_bytes(IMAGES.read_bytes()[:-1])
    with pytest.raises(IdxTruncatedError):
        load_idx(images, LABELS)


def test_idx_empty_pair(tmp_path):
    images, labels = tmp_path / "images", tmp_path / "labels"
    images.write_bytes(struct.pack(">IIII", 0x803, 0, 2, 2))
    labels.write_bytes(struct.pack(">II", 0x801, 0))
    with pytest.raises(DataError, match="no samples"):
        load_idx(images, labels)


def test_idx_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_idx(tmp_path / "nope", LABELS)


def test_dump_idx_reproduces_fixture_bytes(tmp_path):
    ds = load_idx(IMAGES, LABELS)
    dump_idx(ds, tmp_path / "i", tmp_path / "l")
    assert (tmp_path / "i").read_bytes() == IMAGES.read_bytes()
    assert (tmp_path / "l").read_bytes() == LABELS.read_bytes()


# ---------------------------------------------------------------------------
# Dataset invariants
# ---------------------------------------------------------------------------

def test_label_out_of_range():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.array([0, 1, 2]), num_classes=2)


def test_row_count_mismatch():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.array([0, 1]), num_classes=2)


def test_empty_dataset():
    with pytest.raises(DataError):
        Dataset(np.zeros((0, 2)), np.array([], dtype=np.int64), num_classes=2)


def test_arrays_are_frozen_copies():
    features = np.zeros((2, 2))
    ds = Dataset(features, np.array([0, 1]), num_classes=2)
    assert features.flags.writeable
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_subset_composes_index():
    ds = _toy(10)
    assert ds.subset([2, 3, 4]).subset([1]).index.tolist() == [3]


def test_strip_labels_keeps_features_and_index():
    ds = _toy(6).subset([5, 1])
    pool = ds.strip_labels()
    assert not hasattr(pool, "labels")
    assert pool.index.tolist() == [5, 1]
    assert np.array_equal(pool.features, ds.features)


def test_csv_export(tmp_path):
    ds, _ = make_blobs(3, 5, 4, 3.0, seed=2)
    path = tmp_path / "blobs.csv"
    ds.to_csv(path)
    assert path.read_text().splitlines()[0] == "feature_0,feature_1,feature_2,feature_3,label"
    back = load_csv(path, num_classes=3)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,label\n1,2,0\n")
    with pytest.raises(DataError):
        load_csv(path)


# ---------------------------------------------------------------------------
# Blobs and the Bayes oracle
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("k,d", [(2, 1), (3, 2), (5, 1), (2, 5), (10, 2), (12, 3)])
def test_blob_means_closest_pair_is_separation(k, d):
    means = blob_means(k, d, 4.0)
    dist = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
    dist[np.diag_indices(k)] = np.inf
    assert math.isclose(dist.min(), 4.0, rel_tol=1e-12)


def test_blobs_deterministic():
    a, _ = make_blobs(3, 50, 2, 6.0, seed=7)
    b, _ = make_blobs(3, 50, 2, 6.0, seed=7)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)


def test_oracle_far_apart():
    _, oracle = make_blobs(4, 10, 3, 100.0, seed=0)
    fresh = oracle.sample(1000, seed=1)
    assert np.mean(oracle.classify(fresh.features) == fresh.labels) >= 0.999


def test_oracle_overlap_matches_closed_form():
    # means at -1 and +1 with unit variance: accuracy Phi(1)
    _, oracle = make_blobs(2, 10, 1, 2.0, seed=0)
    assert np.allclose(np.sort(oracle.means.ravel()), [-1.0, 1.0])
    fresh = oracle.sample(500_000, seed=3)
    acc = np.mean(oracle.classify(fresh.features) == fresh.labels)
    phi1 = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
    assert abs(acc - phi1) < 0.003


def test_oracle_proba_is_posterior():
    _, oracle = make_blobs(3, 10, 2, 6.0, seed=0)
    X = oracle.sample(20, seed=4).features
    pred = oracle.predict_proba(X)
    assert np.allclose(pred.proba.sum(axis=1), 1.0)
    assert np.array_equal(pred.predicted, oracle.classify(X))


def test_make_blobs_rejects_bad_params():
    with pytest.raises(ConfigError):
        make_blobs(1, 10, 2, 6.0, seed=0)
    with pytest.raises(ConfigError):
        make_blobs(3, 10, 2, 0.0, seed=0)


# ---------------------------------------------------------------------------
# Splits and partitions
# ---------------------------------------------------------------------------

def test_split_identity():
    ds = _toy(10)
    (only,) = split(ds, SplitPlan(fractions=[1.0], seed=3))
    assert sorted(only.index.tolist()) == list(range(10))


def test_split_halves_cover_input():
    ds = _toy(100)
    a, b = split(ds, SplitPlan(fractions=[0.5, 0.5], seed=1))
    assert len(a) == len(b) == 50
    assert set(a.index) | set(b.index) == set(range(100))
    assert not set(a.index) & set(b.index)


def test_split_replays_shuffle():
    ds = _toy(10)
    a, b = split(ds, SplitPlan(fractions=[0.7, 0.3], seed=3))
    perm = rng(3).permutation(10)
    assert a.index.tolist() == perm[:7].tolist()
    assert b.index.tolist() == perm[7:].tolist()


def test_split_sizes_remainder_goes_first():
    assert split_sizes(10, [0.33, 0.33, 0.34]) == [4, 3, 3]
    assert split_sizes(10, [0.0, 0.55, 0.45]) == [0, 6, 4]


def test_split_empty_subset_is_error():
    with pytest.raises(DataError):
        split(_toy(3), SplitPlan(fractions=[0.9, 0.1, 0.0]))


def test_split_plan_validation():
    with pytest.raises(ValidationError):
        SplitPlan(fractions=[0.5, 0.6])
    with pytest.raises(ValidationError):
        SplitPlan(fractions=[1.2, -0.2])


@pytest.mark.parametrize("n,parts,sizes", [(10, 2, [5, 5]), (11, 2, [6, 5]), (10, 3, [4, 3, 3])])
def test_partition_sizes(n, parts, sizes):
    out = partition(_toy(n), PartitionPlan(n_partitions=parts, seed=0))
    assert [len(p) for p in out] == sizes
    assert sorted(np.concatenate([p.index for p in out]).tolist()) == list(range(n))


def test_partition_replays_shuffle():
    out = partition(_toy(9), PartitionPlan(n_partitions=3, seed=5))
    perm = rng(5).permutation(9)
    assert [p.index.tolist() for p in out] == [perm[0:3].tolist(), perm[3:6].tolist(), perm[6:9].tolist()]


def test_partition_too_many():
    with pytest.raises(ConfigError):
        partition(_toy(3), PartitionPlan(n_partitions=4))


def test_truncate():
    ds = _toy(10)
    assert len(truncate(ds, 4)) == 4
    assert truncate(ds, None) is ds
    assert truncate(ds, 50) is ds


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
