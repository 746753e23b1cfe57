"""
From-scratch classifiers: softmax regression and a one-hidden-layer MLP.

Both train with mini-batch SGD + momentum on mean cross-entropy, in float64.
A model is never updated in place: fit() returns a new LearnerModel, and
every ILI iteration starts again from initialize().
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ConfigError, DataError, NumericalError
from .seeding import rng

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Spec and model types
# ---------------------------------------------------------------------------

class LearnerSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    architecture: Literal["softmax", "mlp"] = "softmax"
    hidden_units: int = Field(default=128, ge=1)
    activation: Literal["relu", "tanh"] = "relu"
    epochs: int = Field(default=20, ge=1)
    batch_size: int = Field(default=64, ge=1)
    learning_rate: float = Field(default=0.05, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_init_seed: int = Field(default=0, ge=0)
    augmentation: Literal["none", "pixel_shift"] = "none"
    max_shift: int = Field(default=2, ge=1)
    image_side: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_augmentation(self) -> "LearnerSpec":
        if self.augmentation == "pixel_shift" and self.image_side is None:
            raise ValueError("pixel_shift augmentation requires image_side")
        return self


@dataclass(frozen=True)
class PredictionResult:
    predicted: np.ndarray
    confidence: np.ndarray
    proba: np.ndarray

    def __len__(self) -> int:
        return self.predicted.shape[0]


def prediction_from_proba(proba: np.ndarray) -> PredictionResult:
    predicted = np.argmax(proba, axis=1)
    confidence = proba[np.arange(proba.shape[0]), predicted]
    return PredictionResult(predicted=predicted, confidence=confidence, proba=proba)


class Predictor(Protocol):
    num_classes: int

    def predict_proba(self, X: np.ndarray) -> PredictionResult: ...


class Trainer(Protocol):
    def train(
        self, X: np.ndarray, y: np.ndarray, num_classes: int, init_seed: int, fit_seed: int
    ) -> Predictor: ...


@dataclass(frozen=True, eq=False)
class LearnerModel:
    spec: LearnerSpec
    params: dict[str, np.ndarray]
    num_features: int
    num_classes: int
    epoch_losses: tuple[float, ...] = ()

    def predict_proba(self, X: np.ndarray) -> PredictionResult:
        return predict_proba(self, X)

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------

def _glorot(gen: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return gen.uniform(-s, s, size=(fan_in, fan_out))


def initialize(
    spec: LearnerSpec, num_features: int, num_classes: int, seed: int | None = None
) -> LearnerModel:
    """Fresh weights: uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)), zero biases.

    Depends only on (spec, seed); `seed` overrides spec.weight_init_seed.
    """
    if num_features < 1 or num_classes < 2:
        raise ConfigError(f"need >= 1 feature and >= 2 classes, got {num_features}, {num_classes}")
    if spec.augmentation == "pixel_shift" and spec.image_side**2 != num_features:
        raise ConfigError(
            f"pixel_shift expects {spec.image_side}x{spec.image_side} images, got {num_features} features"
        )

    gen = rng(spec.weight_init_seed if seed is None else seed)
    if spec.architecture == "softmax":
        params = {
            "W": _glorot(gen, num_features, num_classes),
            "b": np.zeros(num_classes),
        }
    else:
        h = spec.hidden_units
        params = {
            "W1": _glorot(gen, num_features, h),
            "b1": np.zeros(h),
            "W2": _glorot(gen, h, num_classes),
            "b2": np.zeros(num_classes),
        }
    return LearnerModel(spec, _freeze(params), num_features, num_classes)


def _freeze(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = {}
    for name, value in params.items():
        value = np.array(value, dtype=np.float64)
        value.setflags(write=False)
        out[name] = value
    return out


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _activate_grad(z: np.ndarray, h: np.ndarray, kind: str) -> np.ndarray:
    return (z > 0).astype(np.float64) if kind == "relu" else 1.0 - h**2


def _logits(params: dict[str, np.ndarray], spec: LearnerSpec, X: np.ndarray):
    if spec.architecture == "softmax":
        return X @ params["W"] + params["b"], None
    z1 = X @ params["W1"] + params["b1"]
    h = _activate(z1, spec.activation)
    return h @ params["W2"] + params["b2"], (z1, h)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _loss_and_grads(params, spec: LearnerSpec, X: np.ndarray, y: np.ndarray):
    n = X.shape[0]
    logits, hidden = _logits(params, spec, X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(n), y]))

    d_logits = np.exp(shifted - log_norm[:, None])
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n

    if hidden is None:
        return loss, {"W": X.T @ d_logits, "b": d_logits.sum(axis=0)}

    z1, h = hidden
    d_h = d_logits @ params["W2"].T
    d_z1 = d_h * _activate_grad(z1, h, spec.activation)
    return loss, {
        "W1": X.T @ d_z1,
        "b1": d_z1.sum(axis=0),
        "W2": h.T @ d_logits,
        "b2": d_logits.sum(axis=0),
    }


def loss_and_gradients(model: LearnerModel, X: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy and its analytic gradient for every parameter."""
    X, y = _check_inputs(model, X, y)
    return _loss_and_grads(model.params, model.spec, X, y)


def _check_inputs(model: LearnerModel, X: np.ndarray, y: np.ndarray | None = None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.num_features:
        raise DataError(f"model expects {model.num_features} features, got shape {X.shape}")
    if y is None:
        return X, None
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise DataError(f"{X.shape[0]} feature rows but labels have shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= model.num_classes):
        raise DataError(f"labels must lie in [0, {model.num_classes - 1}]")
    return X, y


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

def shift_pixels(X: np.ndarray, side: int, max_shift: int, gen: np.random.Generator) -> np.ndarray:
    """Shift each square image by up to +-max_shift pixels per axis, zero fill."""
    n = X.shape[0]
    m = max_shift
    padded = np.pad(X.reshape(n, side, side), ((0, 0), (m, m), (m, m)))
    dy = gen.integers(0, 2 * m + 1, size=n)
    dx = gen.integers(0, 2 * m + 1, size=n)
    out = np.empty((n, side, side))
    for i in range(n):
        out[i] = padded[i, dy[i]:dy[i] + side, dx[i]:dx[i] + side]
    return out.reshape(n, side * side)


# ---------------------------------------------------------------------------
# Training and prediction
# ---------------------------------------------------------------------------

def fit(model: LearnerModel, X: np.ndarray, y: np.ndarray, training_seed: int) -> LearnerModel:
    """Run spec.epochs passes of mini-batch SGD with momentum; returns a new model."""
    X, y = _check_inputs(model, X, y)
    n = X.shape[0]
    if n == 0:
        raise DataError("cannot fit on an empty training set")

    spec = model.spec
    gen = rng(training_seed)
    params = {k: v.copy() for k, v in model.params.items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    losses = []

    for epoch in range(spec.epochs):
        order = gen.permutation(n)
        total = 0.0
        for batch, start in enumerate(range(0, n, spec.batch_size)):
            rows = order[start:start + spec.batch_size]
            xb = X[rows]
            if spec.augmentation == "pixel_shift":
                xb = shift_pixels(xb, spec.image_side, spec.max_shift, gen)
            loss, grads = _loss_and_grads(params, spec, xb, y[rows])
            if not math.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {batch}", epoch=epoch, batch=batch
                )
            for k, g in grads.items():
                velocity[k] *= spec.momentum
                velocity[k] -= spec.learning_rate * g
                params[k] += velocity[k]
            total += loss * rows.shape[0]
        losses.append(total / n)
        logger.debug("epoch %d/%d loss=%.6f", epoch + 1, spec.epochs, losses[-1])

    return LearnerModel(spec, _freeze(params), model.num_features, model.num_classes, tuple(losses))


def predict_proba(model: LearnerModel, X: np.ndarray) -> PredictionResult:
    X, _ = _check_inputs(model, X)
    logits, _ = _logits(model.params, model.spec, X)
    return prediction_from_proba(_softmax(logits))


def evaluate(model: Predictor, X: np.ndarray, y_true: np.ndarray) -> float:
    y_true = np.asarray(y_true)
    if y_true.shape[0] == 0:
        raise DataError("cannot evaluate on an empty set")
    predicted = model.predict_proba(X).predicted
    return float(np.mean(predicted == y_true))


def per_class_accuracy(model: Predictor, X: np.ndarray, y_true: np.ndarray, class_id: int) -> float:
    """Accuracy restricted to samples whose true label is `class_id`."""
    y_true = np.asarray(y_true)
    rows = np.flatnonzero(y_true == class_id)
    if rows.size == 0:
        raise DataError(f"no samples of class {class_id} to evaluate")
    return evaluate(model, np.asarray(X)[rows], y_true[rows])


class LearnerTrainer:
    """Default Trainer: initialize() then fit() under the given seeds."""

    def __init__(self, spec: LearnerSpec):
        self.spec = spec

    def train(self, X, y, num_classes, init_seed, fit_seed) -> LearnerModel:
        model = initialize(self.spec, np.shape(X)[1], num_classes, seed=init_seed)
        return fit(model, X, y, training_seed=fit_seed)


# ---------------------------------------------------------------------------
# Checkpoints (debugging only; ILI always retrains from scratch)
# ---------------------------------------------------------------------------

def save_checkpoint(model: LearnerModel, path: str | Path) -> None:
    arrays = {f"param_{k}": v for k, v in model.params.items()}
    with open(path, "wb") as f:
        np.savez(
            f,
            format_version=np.array(CHECKPOINT_VERSION),
            spec=np.array(model.spec.model_dump_json()),
            shape=np.array([model.num_features, model.num_classes]),
            epoch_losses=np.array(model.epoch_losses, dtype=np.float64),
            **arrays,
        )


def load_checkpoint(path: str | Path) -> LearnerModel:
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    with data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise DataError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
        spec = LearnerSpec.model_validate_json(str(data["spec"]))
        num_features, num_classes = (int(v) for v in data["shape"])
        params = {k[len("param_"):]: data[k] for k in data.files if k.startswith("param_")}
        losses = tuple(float(v) for v in data["epoch_losses"])
    return LearnerModel(spec, _freeze(params), num_features, num_classes, losses)
