"""
Datasets: IDX/CSV loading, synthetic Gaussian blobs, splits and partitions.

A Dataset is immutable once built. Every subset keeps ``index``, the row
indices into the root dataset it was cut from, so disjointness and coverage
of splits/partitions can be checked on plain index sets.
"""

import csv
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import (
    ConfigError,
    DataError,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
)
from .learner import PredictionResult, prediction_from_proba
from .seeding import rng

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    index: np.ndarray | None = None
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64, order="C")
        labels = np.array(self.labels)
        if features.ndim != 2:
            raise DataError(f"features must be a 2-D matrix, got shape {features.shape}")
        if labels.ndim != 1:
            raise DataError(f"labels must be a vector, got shape {labels.shape}")
        n, d = features.shape
        if n == 0 or d == 0:
            raise DataError(f"dataset must be non-empty, got {n} samples x {d} features")
        if labels.shape[0] != n:
            raise DataError(f"{n} feature rows but {labels.shape[0]} labels")
        if self.num_classes < 2:
            raise DataError(f"num_classes must be >= 2, got {self.num_classes}")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise DataError("labels must be integer class ids")
        labels = labels.astype(np.int64)
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise DataError(
                f"labels must lie in [0, {self.num_classes - 1}], "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        index = np.arange(n, dtype=np.int64) if self.index is None else np.array(self.index, dtype=np.int64)
        if index.shape != (n,):
            raise DataError(f"index must have length {n}, got {index.shape}")
        if self.image_shape is not None and self.image_shape[0] * self.image_shape[1] != d:
            raise DataError(f"image_shape {self.image_shape} does not match {d} features")

        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "index", _frozen(index))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            features=self.features[rows],
            labels=self.labels[rows],
            num_classes=self.num_classes,
            index=self.index[rows],
            image_shape=self.image_shape,
        )

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(
            features=self.features,
            labels=labels,
            num_classes=self.num_classes,
            index=self.index,
            image_shape=self.image_shape,
        )

    def strip_labels(self) -> "UnlabelledSet":
        return UnlabelledSet(features=self.features, index=self.index)

    def to_csv(self, path: str | Path) -> None:
        """Write ``feature_0..feature_{D-1},label`` rows (floats at full precision)."""
        header = [f"feature_{j}" for j in range(self.num_features)] + ["label"]
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row, label in zip(self.features, self.labels):
                writer.writerow([format(float(v), ".17g") for v in row] + [int(label)])


@dataclass(frozen=True, eq=False)
class UnlabelledSet:
    """Features without labels: the pools ILI assigns pseudo-labels to."""

    features: np.ndarray
    index: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]

    def split_halves(self) -> tuple["UnlabelledSet", "UnlabelledSet"]:
        """Contiguous halves; the first gets the extra row for odd sizes."""
        cut = (len(self) + 1) // 2
        return (
            UnlabelledSet(self.features[:cut], self.index[:cut]),
            UnlabelledSet(self.features[cut:], self.index[cut:]),
        )


class SplitPlan(BaseModel):
    model_config = ConfigDict(extra="forbid")

    fractions: list[float] = Field(min_length=1)
    seed: int = Field(default=0, ge=0)

    @field_validator("fractions")
    @classmethod
    def _check_fractions(cls, v: list[float]) -> list[float]:
        if any(f < 0 for f in v):
            raise ValueError(f"fractions must be non-negative, got {v}")
        if abs(math.fsum(v) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {math.fsum(v)!r}")
        return v


class PartitionPlan(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_partitions: int = Field(ge=2)
    seed: int = Field(default=0, ge=0)


@dataclass(frozen=True, eq=False)
class BayesOracle:
    """Bayes-optimal classifier for isotropic Gaussian classes with shared variance."""

    means: np.ndarray
    variance: float
    priors: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]

    def log_posterior(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        sq = ((X[:, None, :] - self.means[None, :, :]) ** 2).sum(axis=2)
        return np.log(self.priors)[None, :] - sq / (2.0 * self.variance)

    def predict_proba(self, X: np.ndarray) -> PredictionResult:
        logits = self.log_posterior(X)
        logits = logits - logits.max(axis=1, keepdims=True)
        proba = np.exp(logits)
        proba /= proba.sum(axis=1, keepdims=True)
        return prediction_from_proba(proba)

    def classify(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.log_posterior(X), axis=1)

    def sample(self, per_class: int, seed: int) -> Dataset:
        """Fresh draw from the generative model the oracle describes."""
        return _draw_blobs(self.means, self.variance, per_class, rng(seed))


# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------

def _read_idx(path: Path, magic: int, ndims: int) -> tuple[tuple[int, ...], np.ndarray]:
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e

    header_len = 4 + 4 * ndims
    if len(buf) < header_len:
        raise IdxTruncatedError(f"{path}: header needs {header_len} bytes, file has {len(buf)}")
    (found,) = struct.unpack_from(">I", buf, 0)
    if found != magic:
        raise IdxMagicError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack_from(f">{ndims}I", buf, 4)

    expected = math.prod(dims)
    payload = len(buf) - header_len
    if payload < expected:
        raise IdxTruncatedError(f"{path}: header announces {expected} data bytes, found {payload}")
    if payload > expected:
        raise DataError(f"{path}: {payload - expected} trailing bytes after IDX payload")
    return dims, np.frombuffer(buf, dtype=np.uint8, offset=header_len)


def load_idx_labels(path: str | Path) -> np.ndarray:
    (_count,), data = _read_idx(Path(path), IDX_LABELS_MAGIC, 1)
    return data.astype(np.int64)


def load_idx(
    images_path: str | Path,
    labels_path: str | Path,
    num_classes: int | None = None,
) -> Dataset:
    """Parse an IDX image/label pair; pixels are scaled to [0, 1] by /255."""
    (count, rows, cols), pixels = _read_idx(Path(images_path), IDX_IMAGES_MAGIC, 3)
    (label_count,), label_bytes = _read_idx(Path(labels_path), IDX_LABELS_MAGIC, 1)
    if count != label_count:
        raise IdxCountMismatchError(
            f"{images_path} holds {count} images but {labels_path} holds {label_count} labels"
        )
    if count == 0:
        raise DataError(f"{images_path} and {labels_path} hold no samples")
    labels = label_bytes.astype(np.int64)
    if num_classes is None:
        num_classes = max(2, int(labels.max()) + 1)
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    logger.info("Loaded %d images (%dx%d) from %s", count, rows, cols, images_path)
    return Dataset(features, labels, num_classes, image_shape=(rows, cols))


def dump_idx(dataset: Dataset, images_path: str | Path, labels_path: str | Path) -> None:
    """Write a dataset back to IDX; inverse of load_idx for byte-valued pixels."""
    if dataset.image_shape is None:
        raise DataError("dump_idx needs a dataset with image_shape")
    rows, cols = dataset.image_shape
    n = len(dataset)
    pixels = np.rint(dataset.features * 255.0)
    if pixels.min() < 0 or pixels.max() > 255:
        raise DataError("pixel values outside [0, 1] cannot be written as IDX bytes")
    if dataset.labels.max() > 255:
        raise DataError("labels above 255 cannot be written as IDX bytes")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(pixels.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def load_csv(path: str | Path, num_classes: int | None = None) -> Dataset:
    path = Path(path)
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            rows = [r for r in reader if r]
    except (OSError, StopIteration) as e:
        raise DataError(f"cannot read CSV dataset {path}: {e}") from e

    if not header or header[-1] != "label":
        raise DataError(f"{path}: last column must be 'label', got header {header}")
    expected = [f"feature_{j}" for j in range(len(header) - 1)]
    if header[:-1] != expected:
        raise DataError(f"{path}: feature columns must be feature_0..feature_{len(header) - 2}")
    try:
        features = np.array([[float(v) for v in r[:-1]] for r in rows], dtype=np.float64)
        labels = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e
    if num_classes is None:
        num_classes = max(2, int(labels.max()) + 1) if len(labels) else 2
    return Dataset(features, labels, num_classes)


# ---------------------------------------------------------------------------
# Synthetic blobs
# ---------------------------------------------------------------------------

def blob_means(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """Class means on signed coordinate axes; the closest pair is `separation` apart.

    Class k sits on axis k mod D with sign + for even (k div D) and - for odd,
    on ring k div 2D whose radius grows by `separation` per ring.
    """
    base = separation / math.sqrt(2.0) if min(num_classes, dim) >= 2 else separation / 2.0
    means = np.zeros((num_classes, dim), dtype=np.float64)
    for k in range(num_classes):
        axis = k % dim
        sign = 1.0 if (k // dim) % 2 == 0 else -1.0
        ring = k // (2 * dim)
        means[k, axis] = sign * (base + ring * separation)
    return means


def _draw_blobs(means: np.ndarray, variance: float, per_class: int, gen: np.random.Generator) -> Dataset:
    num_classes, dim = means.shape
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    noise = gen.standard_normal((labels.shape[0], dim)) * math.sqrt(variance)
    features = means[labels] + noise
    order = gen.permutation(labels.shape[0])
    return Dataset(features[order], labels[order], num_classes)


def make_blobs(
    num_classes: int,
    per_class: int,
    dim: int,
    separation: float,
    seed: int,
    variance: float = 1.0,
) -> tuple[Dataset, BayesOracle]:
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if per_class < 1 or dim < 1:
        raise ConfigError(f"per_class and dim must be >= 1, got {per_class}, {dim}")
    if not separation > 0 or not variance > 0:
        raise ConfigError(f"separation and variance must be positive, got {separation}, {variance}")

    means = blob_means(num_classes, dim, separation)
    oracle = BayesOracle(
        means=_frozen(means),
        variance=float(variance),
        priors=_frozen(np.full(num_classes, 1.0 / num_classes)),
    )
    return _draw_blobs(means, variance, per_class, rng(seed)), oracle


# ---------------------------------------------------------------------------
# Splits and partitions
# ---------------------------------------------------------------------------

def split_sizes(n: int, fractions: Sequence[float]) -> list[int]:
    """Floor of fraction*n per subset; the remainder goes one each to the
    earliest subsets with a positive fraction."""
    sizes = [math.floor(f * n) for f in fractions]
    remainder = n - sum(sizes)
    for i, f in enumerate(fractions):
        if remainder <= 0:
            break
        if f > 0:
            sizes[i] += 1
            remainder -= 1
    return sizes


def split(dataset: Dataset, plan: SplitPlan) -> list[Dataset]:
    perm = rng(plan.seed).permutation(len(dataset))
    out = []
    start = 0
    for i, size in enumerate(split_sizes(len(dataset), plan.fractions)):
        if size == 0:
            raise DataError(f"split of {len(dataset)} samples leaves subset {i} empty")
        out.append(dataset.subset(perm[start:start + size]))
        start += size
    return out


def partition(dataset: Dataset, plan: PartitionPlan) -> list[Dataset]:
    """Balanced partitions; the first N mod n partitions get one extra sample."""
    if plan.n_partitions > len(dataset):
        raise ConfigError(f"cannot cut {len(dataset)} samples into {plan.n_partitions} partitions")
    perm = rng(plan.seed).permutation(len(dataset))
    return [dataset.subset(rows) for rows in np.array_split(perm, plan.n_partitions)]



def truncate(dataset: Dataset, cap: int | None) -> Dataset:
    if cap is None or cap >= len(dataset):
        return dataset
    return dataset.subset(np.arange(cap))


