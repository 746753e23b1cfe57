"""
Label noise: random errors (uniform over the other classes) and bias errors
(a fixed source -> target class mapping), plus label accuracy.

Corrupted counts use Python's round(), i.e. round-half-to-even on f*N.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import ConfigError, DataError
from .seeding import rng


class NoiseSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["random", "bias"] = "random"
    mapping: dict[int, int] = Field(default_factory=dict)
    fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)

    @field_validator("mapping")
    @classmethod
    def _check_mapping(cls, v: dict[int, int]) -> dict[int, int]:
        for source, target in v.items():
            if source == target:
                raise ValueError(f"bias mapping {source}->{target} maps a class onto itself")
            if source < 0 or target < 0:
                raise ValueError(f"bias mapping {source}->{target} has a negative class id")
        return v

    def apply(self, labels: np.ndarray, num_classes: int, seed: int | None = None,
              fraction: float | None = None) -> "NoisyLabels":
        """Corrupt `labels`; explicit seed/fraction override the spec's own."""
        seed = self.seed if seed is None else seed
        fraction = self.fraction if fraction is None else fraction
        if self.kind == "random":
            return inject_random(labels, fraction, num_classes, seed)
        return inject_bias(labels, self.mapping, fraction, seed, num_classes=num_classes)


@dataclass(frozen=True)
class NoisyLabels:
    labels: np.ndarray
    changed_mask: np.ndarray
    clean_reference: np.ndarray | None = None

    @property
    def changed_count(self) -> int:
        return int(np.count_nonzero(self.changed_mask))


def _check_fraction(fraction: float) -> None:
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"noise fraction must lie in [0, 1], got {fraction}")


def corrupted_count(fraction: float, n: int) -> int:
    return int(round(fraction * n))


def inject_random(labels: np.ndarray, fraction: float, num_classes: int, seed: int) -> NoisyLabels:
    """Relabel exactly round(f*N) samples, each to a uniformly drawn *other* class."""
    _check_fraction(fraction)
    if num_classes < 2:
        raise ConfigError(f"random noise needs >= 2 classes, got {num_classes}")
    clean = np.asarray(labels, dtype=np.int64)
    gen = rng(seed)
    count = corrupted_count(fraction, clean.shape[0])
    picked = gen.choice(clean.shape[0], size=count, replace=False)
    offsets = gen.integers(1, num_classes, size=count)

    noisy = clean.copy()
    noisy[picked] = (clean[picked] + offsets) % num_classes
    return NoisyLabels(labels=noisy, changed_mask=noisy != clean, clean_reference=clean)


def inject_bias(
    labels: np.ndarray,
    mapping: dict[int, int],
    fraction: float,
    seed: int,
    num_classes: int | None = None,
) -> NoisyLabels:
    """For each source class, relabel round(f * count(source)) of its samples to the target.

    Sources are looked up in the clean labels, so chained mappings never cascade.
    """
    _check_fraction(fraction)
    if not mapping:
        raise ConfigError("bias noise needs a non-empty class mapping")
    clean = np.asarray(labels, dtype=np.int64)
    limit = num_classes if num_classes is not None else int(clean.max()) + 1
    for source, target in mapping.items():
        if source == target:
            raise ConfigError(f"bias mapping {source}->{target} maps a class onto itself")
        if not (0 <= source < limit and 0 <= target < limit):
            raise ConfigError(f"bias mapping {source}->{target} outside classes 0..{limit - 1}")

    gen = rng(seed)
    noisy = clean.copy()
    for source in sorted(mapping):
        rows = np.flatnonzero(clean == source)
        count = corrupted_count(fraction, rows.shape[0])
        picked = gen.choice(rows, size=count, replace=False) if count else rows[:0]
        noisy[picked] = mapping[source]
    return NoisyLabels(labels=noisy, changed_mask=noisy != clean, clean_reference=clean)


def label_accuracy(labels: np.ndarray, reference: np.ndarray) -> float:
    labels = np.asarray(labels)
    reference = np.asarray(reference)
    if labels.shape != reference.shape:
        raise DataError(f"label vectors differ in shape: {labels.shape} vs {reference.shape}")
    if labels.shape[0] == 0:
        raise DataError("label accuracy of an empty vector is undefined")
    return float(np.mean(labels == reference))


def parse_mapping(pairs: list[str]) -> dict[int, int]:
    """Parse CLI-style ``a:b`` pairs into a bias mapping."""
    mapping = {}
    for pair in pairs:
        try:
            source, target = (int(x) for x in pair.split(":"))
        except ValueError as e:
            raise ConfigError(f"bad class mapping '{pair}', expected a:b") from e
        mapping[source] = target
    return mapping
