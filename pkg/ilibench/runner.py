"""
Experiment runner: noise sweeps, seed repetitions, noisy baselines.

One cell is a (noise fraction, repetition) pair. Every cell derives its own
seed from (base_seed, fraction_index, repetition), injects noise with it,
trains the noisy baseline and runs each configured ILI variant. Cells are
independent; with ``workers > 1`` they run in a process pool and their rows
are merged back in cell order, so outputs do not depend on scheduling.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .dataset import Dataset, PartitionPlan, load_csv, load_idx, make_blobs, partition, split, truncate
from .engine import (
    IliConfig,
    IliResult,
    IterationRecord,
    run_fpili,
    run_opili,
    run_plain,
    train_baseline,
)
from .errors import ConfigError, DataError
from .learner import evaluate
from .noise import label_accuracy
from .reports import emit_reports
from .scoring import (
    BASELINE_VARIANT,
    FINAL_TRAINING_SUFFIX,
    ReportSummary,
    baseline_variant,
    iteration_row,
    summarize,
)
from .seeding import derive_seed

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Data preparation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PreparedData:
    """Clean train/val/test subsets; noise is injected per cell."""

    train: Dataset
    val: Dataset
    test: Dataset


def load_source(config: ExperimentConfig) -> Dataset:
    src = config.dataset
    if src.kind == "blobs":
        b = src.blobs
        dataset, _oracle = make_blobs(b.num_classes, b.per_class, b.dim, b.separation, b.seed, b.variance)
        return dataset
    if src.kind == "csv":
        return load_csv(src.csv, num_classes=src.num_classes)
    return load_idx(src.images, src.labels, num_classes=src.num_classes)


def prepare_data(config: ExperimentConfig) -> PreparedData:
    dataset = load_source(config)
    cap = config.subset_cap
    if config.dataset.has_test_files:
        train, val = split(dataset, config.split)
        test = load_idx(config.dataset.test_images, config.dataset.test_labels, num_classes=dataset.num_classes)
    else:
        train, val, test = split(dataset, config.split)
    data = PreparedData(
        train=truncate(train, cap.train),
        val=truncate(val, cap.val),
        test=truncate(test, cap.test),
    )
    logger.info(
        "Prepared %s: train=%d val=%d test=%d, %d classes",
        config.dataset.kind, len(data.train), len(data.val), len(data.test), dataset.num_classes,
    )
    return data


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------

def cell_seed(base_seed: int, fraction_index: int, repetition: int) -> int:
    return derive_seed(base_seed, fraction_index, repetition)


@dataclass(frozen=True, eq=False)
class NoisyCell:
    train: Dataset
    clean_labels: np.ndarray
    val: Dataset
    run_seed: int


def make_cell(config: ExperimentConfig, data: PreparedData, fraction: float, seed: int) -> NoisyCell:
    """Noisy train (and optionally val) labels for one cell, plus its ILI run seed."""
    k = data.train.num_classes
    noisy = config.noise.apply(data.train.labels, k, seed=derive_seed(seed, "noise"), fraction=fraction)
    val = data.val
    if config.noisy_validation:
        val_noise = config.noise.apply(val.labels, k, seed=derive_seed(seed, "val-noise"), fraction=fraction)
        val = val.with_labels(val_noise.labels)
    return NoisyCell(
        train=data.train.with_labels(noisy.labels),
        clean_labels=data.train.labels,
        val=val,
        run_seed=derive_seed(seed, "ili"),
    )


def _seeded(ili: IliConfig, run_seed: int) -> IliConfig:
    return ili.model_copy(update={"run_seed": run_seed})


def baseline_record(
    config: ExperimentConfig,
    data: PreparedData,
    cell: NoisyCell,
    ili: IliConfig | None = None,
) -> IterationRecord:
    """The noisy baseline under plainILI's iteration-0 seeds, with the learner of
    `ili` (default: the first configured variant)."""
    ili = _seeded(ili or config.ili[0], cell.run_seed)
    model = train_baseline(ili, cell.train)
    return IterationRecord(
        iteration=0,
        val_accuracy=evaluate(model, cell.val.features, cell.val.labels),
        test_accuracy=evaluate(model, data.test.features, data.test.labels),
        train_label_accuracy_vs_clean=label_accuracy(cell.train.labels, cell.clean_labels),
        replaced_count=0,
        mean_confidence=float(np.mean(model.predict_proba(cell.train.features).confidence)),
    )


def run_baseline(
    config: ExperimentConfig,
    fraction: float,
    seed: int,
    data: PreparedData | None = None,
) -> IterationRecord:
    """One training on the noisy labels of the cell with the given seed."""
    data = data or prepare_data(config)
    return baseline_record(config, data, make_cell(config, data, fraction, seed))


def _labelled_size(config: ExperimentConfig, n: int) -> int:
    n_a = int(round(config.labelled_fraction * n))
    if not 1 <= n_a < n:
        raise DataError(
            f"labelled_fraction {config.labelled_fraction} of {n} training samples leaves an empty subset"
        )
    return n_a


def run_variant(ili: IliConfig, config: ExperimentConfig, data: PreparedData, cell: NoisyCell) -> IliResult:
    ili = _seeded(ili, cell.run_seed)
    if ili.variant == "plain":
        return run_plain(ili, cell.train, cell.val, data.test, clean_labels=cell.clean_labels)

    n = len(cell.train)
    head = np.arange(_labelled_size(config, n))
    tail = np.arange(len(head), n)
    clean = data.train
    labelled = cell.train.subset(head) if config.noisy_reference else clean.subset(head)
    clean_a = clean.labels[head]
    pool = clean.subset(tail)

    if ili.variant == "oscillating":
        return run_opili(
            ili, labelled, pool.strip_labels(), cell.val, data.test,
            clean_labelled=clean_a, clean_unlabelled=pool.labels,
        )
    plan = PartitionPlan(n_partitions=ili.n_partitions, seed=derive_seed(cell.run_seed, "partition"))
    parts = partition(pool, plan)
    return run_fpili(
        ili, labelled, [p.strip_labels() for p in parts], cell.val, data.test,
        clean_labelled=clean_a, clean_partitions=[p.labels for p in parts],
    )


def _ft_record(result: IliResult) -> IterationRecord:
    ft = result.final_training
    last = result.history[-1]
    return IterationRecord(
        iteration=len(result.history),
        val_accuracy=ft.val_accuracy,
        test_accuracy=ft.test_accuracy,
        train_label_accuracy_vs_clean=last.train_label_accuracy_vs_clean,
        replaced_count=0,
        mean_confidence=ft.mean_confidence,
    )


def _run_cell(job: tuple[ExperimentConfig, PreparedData, int, int]) -> list[dict[str, str]]:
    config, data, fraction_index, repetition = job
    fraction = config.noise.fractions[fraction_index]
    seed = cell_seed(config.base_seed, fraction_index, repetition)
    cell = make_cell(config, data, fraction, seed)

    base = baseline_record(config, data, cell)
    logger.info("f=%.2f rep=%d baseline: test=%.4f label_acc=%.4f",
                fraction, repetition, base.test_accuracy, base.train_label_accuracy_vs_clean)
    rows = [iteration_row(BASELINE_VARIANT, fraction, repetition, base)]
    # one baseline per distinct learner, all under the same seeds
    first_key = config.ili[0].learner.model_dump_json()
    baselines = {first_key: base}
    for ili in config.ili[1:]:
        key = ili.learner.model_dump_json()
        if key == first_key:
            continue
        if key not in baselines:
            baselines[key] = baseline_record(config, data, cell, ili)
        rows.append(iteration_row(baseline_variant(ili.label), fraction, repetition, baselines[key]))
    for ili in config.ili:
        result = run_variant(ili, config, data, cell)
        rows.extend(iteration_row(ili.label, fraction, repetition, rec) for rec in result.history)
        if result.final_training is not None:
            rows.append(iteration_row(ili.label + FINAL_TRAINING_SUFFIX, fraction, repetition, _ft_record(result)))
        logger.info("f=%.2f rep=%d %s: final test=%.4f (%s after %d iterations)",
                    fraction, repetition, ili.label, result.final_test_accuracy,
                    result.stopped_reason.value, len(result.history) - 1)
    return rows


# ---------------------------------------------------------------------------
# Experiment
# ---------------------------------------------------------------------------

def _prepare_output(output_dir: Path) -> None:
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {output_dir}: {e}") from e
    if not os.access(output_dir, os.W_OK):
        raise ConfigError(f"output directory {output_dir} is not writable")


def run_cells(config: ExperimentConfig, data: PreparedData) -> list[dict[str, str]]:
    jobs = [
        (config, data, fi, rep)
        for fi in range(len(config.noise.fractions))
        for rep in range(config.repetitions)
    ]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(job) for job in jobs]
    return [row for rows in results for row in rows]


def run_experiment(
    config: ExperimentConfig,
    output_dir: str | Path | None = None,
    data: PreparedData | None = None,
) -> ReportSummary:
    """Run every cell of the sweep, then write iterations/summary/config files."""
    output_dir = Path(output_dir) if output_dir is not None else config.output_dir
    _prepare_output(output_dir)
    data = data or prepare_data(config)

    n_cells = len(config.noise.fractions) * config.repetitions
    logger.info("Experiment %s: %d cells x %d variants", config.name, n_cells, len(config.ili))
    rows = run_cells(config, data)
    summary = summarize(rows)
    for row in summary.failure_regime:
        logger.warning(
            "f=%.2f %s: baseline accuracy %.4f does not exceed the noisy label accuracy %.4f; "
            "no improvement is expected here",
            row.noise_fraction, row.variant, row.baseline_mean, row.noisy_label_accuracy,
        )
    emit_reports(rows, summary, output_dir, config)
    return summary
