"""
The Iterative Label Improvement loop.

Variants:
  plain          : train on all samples, relabel the same samples, repeat
  oscillating    : opILI: alternate between two disjoint subsets, each model
                   only relabels the subset it did not train on
  fragmentation  : fpILI: a labelled set A plus partitions B_0..B_n, each
                   relabelled exactly once by a model trained on the previous one

Seed modes:
  init  : the given labels seed the first training only
  ref   : the given labels are a trusted reference set that joins every
          training, replicated to raise its influence

Every training starts from freshly initialised weights; seeds for iteration i
are derived from (run_seed, i, role) and nothing else.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .dataset import Dataset, UnlabelledSet
from .errors import ConfigError, DataError, IliError
from .filters import FilterOutcome, FilterSpec, apply_filter
from .learner import LearnerSpec, LearnerTrainer, PredictionResult, Predictor, Trainer, evaluate
from .noise import label_accuracy
from .seeding import derive_seed

logger = logging.getLogger(__name__)

BASELINE_ROLE = "train"


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

class EarlyStopping(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    patience: int = Field(default=1, ge=1)


class IliConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str | None = None
    variant: Literal["plain", "oscillating", "fragmentation"] = "plain"
    n_partitions: int = Field(default=4, ge=2)
    seed_mode: Literal["init", "ref"] = "init"
    replication_factor: float | None = Field(default=None, ge=1.0)
    filter: FilterSpec = Field(default_factory=FilterSpec)
    max_iterations: int = Field(default=10, ge=1)
    early_stopping: EarlyStopping = Field(default_factory=EarlyStopping)
    final_training: bool = False
    learner: LearnerSpec = Field(default_factory=LearnerSpec)
    run_seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_seed_mode(self) -> "IliConfig":
        if self.variant == "plain" and self.seed_mode == "ref":
            raise ValueError("seed_mode 'ref' needs a reference subset; use oscillating or fragmentation")
        return self

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        short = {"plain": "plain", "oscillating": "opili", "fragmentation": "fpili"}[self.variant]
        parts = [short]
        if self.seed_mode == "ref":
            parts.append("ref")
        if self.filter.mode == "confidence":
            parts.append(self.filter.label)
        return "-".join(parts)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    val_accuracy: float
    test_accuracy: float
    train_label_accuracy_vs_clean: float | None
    replaced_count: int
    mean_confidence: float
    partner_test_accuracy: float | None = None


class StopReason(str, Enum):
    MAX_ITERATIONS = "max_iterations"
    EARLY_STOP = "early_stop"


class LabelSource(IntEnum):
    SEED = 0
    PREDICTION = 1


@dataclass(frozen=True, eq=False)
class FinalTraining:
    model: Predictor
    test_accuracy: float
    val_accuracy: float
    mean_confidence: float


@dataclass(frozen=True, eq=False)
class IliResult:
    history: list[IterationRecord]
    final_labels: np.ndarray
    final_model: Predictor
    stopped_reason: StopReason
    provenance: np.ndarray
    prediction_passes: np.ndarray
    label_order: np.ndarray
    final_training: FinalTraining | None = None

    @property
    def final_test_accuracy(self) -> float:
        if self.final_training is not None:
            return self.final_training.test_accuracy
        return self.history[-1].test_accuracy


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def iteration_seeds(run_seed: int, iteration: int, role: str) -> tuple[int, int]:
    """(init_seed, fit_seed) for one training inside a run."""
    return (
        derive_seed(run_seed, iteration, role, "init"),
        derive_seed(run_seed, iteration, role, "fit"),
    )


def replicate_reference(n: int, factor: float) -> np.ndarray:
    """Row indices repeating each of n reference samples floor(r) times; the
    first round((r - floor(r)) * n) samples get one extra copy."""
    if factor < 1.0:
        raise ConfigError(f"replication_factor must be >= 1, got {factor}")
    base = math.floor(factor)
    extra = int(round((factor - base) * n))
    return np.concatenate([np.tile(np.arange(n), base), np.arange(extra)]).astype(np.int64)


def early_stop_check(history: Sequence[IterationRecord | float], patience: int) -> bool:
    """True once the latest `patience` validation accuracies all failed to
    strictly beat the best value seen before them."""
    values = [h.val_accuracy if isinstance(h, IterationRecord) else float(h) for h in history]
    if not values:
        return False
    best = values[0]
    streak = 0
    for v in values[1:]:
        if v > best:
            best = v
            streak = 0
        else:
            streak += 1
    return streak >= patience


def _endpoints(history: Sequence[IterationRecord], final_accuracy: float | None) -> tuple[float, float]:
    if len(history) < 2 and final_accuracy is None:
        raise IliError("improvement needs at least two iterations")
    first = history[0].test_accuracy
    last = history[-1].test_accuracy if final_accuracy is None else final_accuracy
    return first, last


def relative_improvement(history: Sequence[IterationRecord], final_accuracy: float | None = None) -> float:
    """100 * (last - first) / first over test accuracy."""
    first, last = _endpoints(history, final_accuracy)
    if first == 0:
        raise IliError("relative improvement is undefined for a first accuracy of 0")
    return 100.0 * (last - first) / first


def absolute_improvement(history: Sequence[IterationRecord], final_accuracy: float | None = None) -> float:
    """Improvement in percentage points."""
    first, last = _endpoints(history, final_accuracy)
    return 100.0 * (last - first)


def _check_disjoint(*indices: np.ndarray) -> None:
    seen: set[int] = set()
    total = 0
    for idx in indices:
        seen.update(int(i) for i in idx)
        total += len(idx)
    if len(seen) != total:
        raise ConfigError("labelled and unlabelled subsets overlap")


def _fresh_outcome(prediction: PredictionResult) -> FilterOutcome:
    # nothing to filter against on a subset's first labelling
    n = len(prediction)
    return FilterOutcome(
        labels=prediction.predicted.astype(np.int64),
        from_prediction=np.ones(n, dtype=bool),
        replaced_count=n,
        kept_count=0,
    )


class _Session:
    """Shared bookkeeping of one engine run: seeded training, records, stopping."""

    def __init__(self, config: IliConfig, trainer: Trainer | None, num_classes: int, val: Dataset, test: Dataset):
        self.config = config
        self.trainer = trainer or LearnerTrainer(config.learner)
        self.num_classes = num_classes
        self.val = val
        self.test = test
        self.history: list[IterationRecord] = []

    def train(self, X: np.ndarray, y: np.ndarray, iteration: int, role: str) -> Predictor:
        init_seed, fit_seed = iteration_seeds(self.config.run_seed, iteration, role)
        return self.trainer.train(X, y, self.num_classes, init_seed, fit_seed)

    def record(
        self,
        iteration: int,
        model: Predictor,
        replaced: int,
        next_prediction: PredictionResult,
        label_acc: float | None,
        partner: Predictor | None = None,
    ) -> IterationRecord:
        rec = IterationRecord(
            iteration=iteration,
            val_accuracy=evaluate(model, self.val.features, self.val.labels),
            test_accuracy=evaluate(model, self.test.features, self.test.labels),
            train_label_accuracy_vs_clean=label_acc,
            replaced_count=int(replaced),
            mean_confidence=float(np.mean(next_prediction.confidence)),
            partner_test_accuracy=(
                None if partner is None else evaluate(partner, self.test.features, self.test.labels)
            ),
        )
        self.history.append(rec)
        logger.info(
            "[%s] iter %d: val=%.4f test=%.4f replaced=%d label_acc=%s",
            self.config.label, iteration, rec.val_accuracy, rec.test_accuracy, rec.replaced_count,
            "-" if label_acc is None else f"{label_acc:.4f}",
        )
        return rec

    def should_stop(self) -> bool:
        es = self.config.early_stopping
        return es.enabled and early_stop_check(self.history, es.patience)

    def finish(self, result: IliResult, subsets: Sequence[np.ndarray]) -> IliResult:
        if not self.config.final_training:
            return result
        model, acc = final_training(
            result, subsets, self.test, self.config.learner,
            seed=self.config.run_seed, trainer=self.trainer,
        )
        ft = FinalTraining(
            model=model,
            test_accuracy=acc,
            val_accuracy=evaluate(model, self.val.features, self.val.labels),
            mean_confidence=float(np.mean(model.predict_proba(np.concatenate(subsets)).confidence)),
        )
        return replace(result, final_training=ft)


def _partial_accuracy(parts: Sequence[tuple[np.ndarray | None, np.ndarray | None]]) -> float | None:
    """Label accuracy over the parts that are labelled and have a clean reference."""
    got, ref = [], []
    for labels, clean in parts:
        if labels is None or clean is None:
            continue
        got.append(labels)
        ref.append(clean)
    if not got:
        return None
    return label_accuracy(np.concatenate(got), np.concatenate(ref))


# ---------------------------------------------------------------------------
# plainILI
# ---------------------------------------------------------------------------

def train_baseline(config: IliConfig, train: Dataset, trainer: Trainer | None = None) -> Predictor:
    """One training on the given labels, under the seeds plainILI uses at iteration 0."""
    trainer = trainer or LearnerTrainer(config.learner)
    init_seed, fit_seed = iteration_seeds(config.run_seed, 0, BASELINE_ROLE)
    return trainer.train(train.features, train.labels, train.num_classes, init_seed, fit_seed)


def run_plain(
    config: IliConfig,
    train: Dataset,
    val: Dataset,
    test: Dataset,
    clean_labels: np.ndarray | None = None,
    trainer: Trainer | None = None,
) -> IliResult:
    """plainILI: train.labels are the (possibly noisy) seed labels."""
    session = _Session(config, trainer, train.num_classes, val, test)
    X = train.features
    labels = train.labels.copy()
    provenance = np.full(len(train), LabelSource.SEED, dtype=np.int8)
    passes = np.zeros(len(train), dtype=np.int64)

    def acc(y):
        return None if clean_labels is None else label_accuracy(y, clean_labels)

    model = session.train(X, labels, 0, BASELINE_ROLE)
    prediction = model.predict_proba(X)
    session.record(0, model, 0, prediction, acc(labels))

    reason = StopReason.MAX_ITERATIONS
    for i in range(1, config.max_iterations + 1):
        outcome = apply_filter(config.filter, prediction, labels)
        labels = outcome.labels
        provenance[outcome.from_prediction] = LabelSource.PREDICTION
        passes += 1

        model = session.train(X, labels, i, BASELINE_ROLE)
        prediction = model.predict_proba(X)
        session.record(i, model, outcome.replaced_count, prediction, acc(labels))
        if session.should_stop():
            reason = StopReason.EARLY_STOP
            break

    result = IliResult(
        history=session.history,
        final_labels=labels,
        final_model=model,
        stopped_reason=reason,
        provenance=provenance,
        prediction_passes=passes,
        label_order=train.index.copy(),
    )
    return session.finish(result, [X])


# ---------------------------------------------------------------------------
# opILI
# ---------------------------------------------------------------------------

@dataclass
class _Side:
    features: np.ndarray
    labels: np.ndarray | None
    clean: np.ndarray | None
    provenance: np.ndarray
    passes: np.ndarray

    def relabel(self, spec: FilterSpec, prediction: PredictionResult) -> FilterOutcome:
        outcome = _fresh_outcome(prediction) if self.labels is None else apply_filter(spec, prediction, self.labels)
        self.labels = outcome.labels
        self.provenance[outcome.from_prediction] = LabelSource.PREDICTION
        self.passes += 1
        return outcome


def _side(features, labels, clean, source=LabelSource.SEED) -> _Side:
    n = features.shape[0]
    return _Side(
        features=features,
        labels=None if labels is None else np.asarray(labels, dtype=np.int64).copy(),
        clean=None if clean is None else np.asarray(clean, dtype=np.int64),
        provenance=np.full(n, source, dtype=np.int8),
        passes=np.zeros(n, dtype=np.int64),
    )


def run_opili(
    config: IliConfig,
    labelled: Dataset,
    unlabelled: UnlabelledSet,
    val: Dataset,
    test: Dataset,
    clean_labelled: np.ndarray | None = None,
    clean_unlabelled: np.ndarray | None = None,
    trainer: Trainer | None = None,
) -> IliResult:
    """opILI. Labels are only given for A (`labelled`); B's clean labels, if
    passed, feed metrics and never a training.

    init mode: training oscillates between A and B (A's seed labels are
    replaced from iteration 1 on). ref mode: A is a fixed reference joining
    every training, and B's two halves oscillate.
    """
    if len(unlabelled) == 0:
        raise DataError("opILI needs a non-empty unlabelled subset")
    _check_disjoint(labelled.index, unlabelled.index)
    session = _Session(config, trainer, labelled.num_classes, val, test)
    ref = config.seed_mode == "ref"
    X_A, y_A = labelled.features, labelled.labels

    if ref:
        if len(unlabelled) < 2:
            raise DataError("ref-mode opILI needs at least two unlabelled samples")
        first, second = unlabelled.split_halves()
        cut = len(first)
        clean_first = None if clean_unlabelled is None else np.asarray(clean_unlabelled)[:cut]
        clean_second = None if clean_unlabelled is None else np.asarray(clean_unlabelled)[cut:]
        q = _side(first.features, None, clean_first)
        p = _side(second.features, None, clean_second)
        factor = config.replication_factor or max(1.0, cut / len(labelled))
        rows = replicate_reference(len(labelled), factor)
        ref_X, ref_y = X_A[rows], y_A[rows]
    else:
        p = _side(X_A, y_A, clean_labelled)
        q = _side(unlabelled.features, None, clean_unlabelled)
        ref_X = np.empty((0, X_A.shape[1]))
        ref_y = np.empty(0, dtype=np.int64)

    def with_ref(side: _Side) -> tuple[np.ndarray, np.ndarray]:
        return np.concatenate([ref_X, side.features]), np.concatenate([ref_y, side.labels])

    def acc():
        parts = [(p.labels, p.clean), (q.labels, q.clean)]
        if ref:
            parts.insert(0, (y_A, clean_labelled))
        return _partial_accuracy(parts)

    model = session.train(X_A, y_A, 0, "A")
    prediction = model.predict_proba(q.features)
    session.record(0, model, 0, prediction, acc())

    reason = StopReason.MAX_ITERATIONS
    for i in range(1, config.max_iterations + 1):
        out_q = q.relabel(config.filter, prediction)
        model_q = session.train(*with_ref(q), i, "B")
        out_p = p.relabel(config.filter, model_q.predict_proba(p.features))
        model = session.train(*with_ref(p), i, "A")
        prediction = model.predict_proba(q.features)
        session.record(i, model, out_q.replaced_count + out_p.replaced_count, prediction, acc(), partner=model_q)
        if session.should_stop():
            reason = StopReason.EARLY_STOP
            break

    if ref:
        final_labels = np.concatenate([y_A, q.labels, p.labels])
        provenance = np.concatenate([np.full(len(labelled), LabelSource.SEED, dtype=np.int8), q.provenance, p.provenance])
        passes = np.concatenate([np.zeros(len(labelled), dtype=np.int64), q.passes, p.passes])
        subsets = [X_A, q.features, p.features]
    else:
        final_labels = np.concatenate([p.labels, q.labels])
        provenance = np.concatenate([p.provenance, q.provenance])
        passes = np.concatenate([p.passes, q.passes])
        subsets = [X_A, q.features]

    result = IliResult(
        history=session.history,
        final_labels=final_labels,
        final_model=model,
        stopped_reason=reason,
        provenance=provenance,
        prediction_passes=passes,
        label_order=np.concatenate([labelled.index, unlabelled.index]),
    )
    return session.finish(result, subsets)


# ---------------------------------------------------------------------------
# fpILI
# ---------------------------------------------------------------------------

def run_fpili(
    config: IliConfig,
    labelled: Dataset,
    partitions: Sequence[UnlabelledSet],
    val: Dataset,
    test: Dataset,
    clean_labelled: np.ndarray | None = None,
    clean_partitions: Sequence[np.ndarray] | None = None,
    trainer: Trainer | None = None,
) -> IliResult:
    """fpILI. A model trained on B_{i-1} (plus A in ref mode) labels the unseen B_i.

    The run always visits every partition: it has len(partitions) - 1
    iterations after the initial one, which must fit in max_iterations, and
    early stopping does not cut it short. There are no previous labels to
    filter against, so the filter setting has no effect here.
    """
    n_parts = len(partitions)
    if n_parts < 2:
        raise ConfigError(f"fpILI needs at least 2 partitions, got {n_parts}")
    if n_parts - 1 > config.max_iterations:
        raise ConfigError(
            f"{n_parts} partitions need {n_parts - 1} iterations, max_iterations is {config.max_iterations}"
        )
    if any(len(b) == 0 for b in partitions):
        raise DataError("fpILI partitions must be non-empty")
    _check_disjoint(labelled.index, *(b.index for b in partitions))

    session = _Session(config, trainer, labelled.num_classes, val, test)
    ref = config.seed_mode == "ref"
    X_A, y_A = labelled.features, labelled.labels
    mean_part = sum(len(b) for b in partitions) / n_parts
    factor = config.replication_factor or max(1.0, mean_part / len(labelled))
    ref_rows = replicate_reference(len(labelled), factor)
    part_labels: list[np.ndarray | None] = [None] * n_parts
    clean_parts = list(clean_partitions) if clean_partitions is not None else [None] * n_parts

    def acc():
        parts = [(y_A, clean_labelled)] + list(zip(part_labels, clean_parts))
        return _partial_accuracy(parts)

    model = session.train(X_A, y_A, 0, "A")
    prediction = model.predict_proba(partitions[0].features)
    part_labels[0] = prediction.predicted.astype(np.int64)
    session.record(0, model, len(partitions[0]), prediction, acc())

    for i in range(1, n_parts):
        prev = partitions[i - 1]
        if ref:
            X = np.concatenate([X_A[ref_rows], prev.features])
            y = np.concatenate([y_A[ref_rows], part_labels[i - 1]])
        else:
            X, y = prev.features, part_labels[i - 1]
        model = session.train(X, y, i, "AB")
        prediction = model.predict_proba(partitions[i].features)
        part_labels[i] = prediction.predicted.astype(np.int64)
        session.record(i, model, len(partitions[i]), prediction, acc())

    sizes = [len(b) for b in partitions]
    result = IliResult(
        history=session.history,
        final_labels=np.concatenate([y_A, *part_labels]),
        final_model=model,
        stopped_reason=StopReason.MAX_ITERATIONS,
        provenance=np.concatenate(
            [np.full(len(labelled), LabelSource.SEED, dtype=np.int8)]
            + [np.full(s, LabelSource.PREDICTION, dtype=np.int8) for s in sizes]
        ),
        prediction_passes=np.concatenate([np.zeros(len(labelled), dtype=np.int64), np.ones(sum(sizes), dtype=np.int64)]),
        label_order=np.concatenate([labelled.index, *(b.index for b in partitions)]),
    )
    return session.finish(result, [X_A, *(b.features for b in partitions)])


# ---------------------------------------------------------------------------
# Final training
# ---------------------------------------------------------------------------

def final_training(
    result: IliResult,
    subsets: Sequence[np.ndarray],
    test: Dataset,
    learner_spec: LearnerSpec,
    seed: int,
    trainer: Trainer | None = None,
) -> tuple[Predictor, float]:
    """One fresh training on every subset with the run's final labels.

    `subsets` are feature matrices in the order of result.final_labels.
    """
    if not subsets or any(np.shape(s)[0] == 0 for s in subsets):
        raise ConfigError("final training needs every subset to be non-empty")
    X = np.concatenate(subsets)
    if X.shape[0] != result.final_labels.shape[0]:
        raise ConfigError(
            f"final labels cover {result.final_labels.shape[0]} samples, subsets hold {X.shape[0]}"
        )
    trainer = trainer or LearnerTrainer(learner_spec)
    init_seed, fit_seed = iteration_seeds(seed, len(result.history), "final")
    num_classes = test.num_classes
    model = trainer.train(X, result.final_labels, num_classes, init_seed, fit_seed)
    accuracy = evaluate(model, test.features, test.labels)
    logger.info("final training: test=%.4f on %d samples", accuracy, X.shape[0])
    return model, accuracy
