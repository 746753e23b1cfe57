"""
Summary scoring for experiment runs.

Works on iteration rows exactly as they appear in iterations.csv (strings at
fixed precision), so a summary computed right after a run and one recomputed
later from the CSV by ``ilibench report`` are identical.

Per (noise fraction, variant):
  baseline_mean / baseline_sigma   test accuracy of the noisy baseline runs
                                   (the baseline:<variant> rows when the
                                   variant's learner differs from the first)
  final_mean / final_sigma         test accuracy at the end of each ILI run
                                   (the +ft row when final training ran)
  rel_improvement_pct              mean of 100 * (final - first) / first
  abs_improvement_pp               mean of 100 * (final - first)
  prerequisite_met                 baseline beats the noisy label accuracy

Sigma uses the unbiased estimator and is absent for a single repetition.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .engine import IterationRecord, absolute_improvement, relative_improvement
from .errors import DataError, IliError

logger = logging.getLogger(__name__)

ITERATION_COLUMNS = [
    "variant",
    "noise_fraction",
    "repetition",
    "iteration",
    "val_accuracy",
    "test_accuracy",
    "label_accuracy_vs_clean",
    "replaced_count",
    "mean_confidence",
]

SUMMARY_COLUMNS = [
    "noise_fraction",
    "variant",
    "baseline_mean",
    "baseline_sigma",
    "final_mean",
    "final_sigma",
    "rel_improvement_pct",
    "abs_improvement_pp",
]

BASELINE_VARIANT = "baseline"
FINAL_TRAINING_SUFFIX = "+ft"


def baseline_variant(variant: str) -> str:
    """Row label of the baseline trained with ``variant``'s own learner."""
    return f"{BASELINE_VARIANT}:{variant}"


def is_baseline(variant: str) -> bool:
    return variant == BASELINE_VARIANT or variant.startswith(BASELINE_VARIANT + ":")

_INT_COLUMNS = {"repetition", "iteration", "replaced_count"}


# ---------------------------------------------------------------------------
# Row formatting
# ---------------------------------------------------------------------------

def fmt(value: float | None) -> str:
    """Fixed 6-decimal rendering; None becomes an empty cell."""
    if value is None:
        return ""
    return f"{value:.6f}"


def iteration_row(
    variant: str,
    noise_fraction: float,
    repetition: int,
    record: IterationRecord,
) -> dict[str, str]:
    return {
        "variant": variant,
        "noise_fraction": fmt(noise_fraction),
        "repetition": str(repetition),
        "iteration": str(record.iteration),
        "val_accuracy": fmt(record.val_accuracy),
        "test_accuracy": fmt(record.test_accuracy),
        "label_accuracy_vs_clean": fmt(record.train_label_accuracy_vs_clean),
        "replaced_count": str(record.replaced_count),
        "mean_confidence": fmt(record.mean_confidence),
    }


def row_to_record(row: dict[str, str]) -> IterationRecord:
    """Parse a formatted iteration row back into an IterationRecord."""
    missing = [c for c in ITERATION_COLUMNS if c not in row]
    if missing:
        raise DataError(f"iteration row lacks columns {missing}")
    try:
        label_acc = row["label_accuracy_vs_clean"]
        return IterationRecord(
            iteration=int(row["iteration"]),
            val_accuracy=float(row["val_accuracy"]),
            test_accuracy=float(row["test_accuracy"]),
            train_label_accuracy_vs_clean=float(label_acc) if label_acc != "" else None,
            replaced_count=int(row["replaced_count"]),
            mean_confidence=float(row["mean_confidence"]),
        )
    except ValueError as e:
        raise DataError(f"malformed iteration row {row}: {e}") from e


# ---------------------------------------------------------------------------
# Summary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryRow:
    noise_fraction: float
    variant: str
    repetitions: int
    baseline_mean: float
    baseline_sigma: float | None
    final_mean: float
    final_sigma: float | None
    rel_improvement_pct: float
    abs_improvement_pp: float
    noisy_label_accuracy: float | None
    prerequisite_met: bool | None

    def csv_row(self) -> dict[str, str]:
        return {
            "noise_fraction": fmt(self.noise_fraction),
            "variant": self.variant,
            "baseline_mean": fmt(self.baseline_mean),
            "baseline_sigma": fmt(self.baseline_sigma),
            "final_mean": fmt(self.final_mean),
            "final_sigma": fmt(self.final_sigma),
            "rel_improvement_pct": fmt(self.rel_improvement_pct),
            "abs_improvement_pp": fmt(self.abs_improvement_pp),
        }


@dataclass(frozen=True)
class ReportSummary:
    rows: list[SummaryRow]

    @property
    def failure_regime(self) -> list[SummaryRow]:
        """Rows whose baseline does not beat the noisy labels it was trained on."""
        return [r for r in self.rows if r.prerequisite_met is False]

    def to_dict(self) -> dict[str, Any]:
        return {"rows": [_json_safe(asdict(r)) for r in self.rows]}


def _json_safe(d: dict[str, Any]) -> dict[str, Any]:
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def mean_sigma(values: Sequence[float]) -> tuple[float, float | None]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise IliError("cannot summarise zero values")
    sigma = float(np.std(arr, ddof=1)) if arr.size > 1 else None
    return float(np.mean(arr)), sigma


def _group(rows: Iterable[dict[str, str]]) -> dict[tuple[str, str, str], list[dict[str, str]]]:
    groups: dict[tuple[str, str, str], list[dict[str, str]]] = {}
    for row in rows:
        key = (row["noise_fraction"], row["variant"], row["repetition"])
        groups.setdefault(key, []).append(row)
    for run in groups.values():
        run.sort(key=lambda r: int(r["iteration"]))
    return groups


def _improvements(history: list[IterationRecord], final: float) -> tuple[float, float]:
    try:
        rel = relative_improvement(history, final_accuracy=final)
    except IliError as e:
        logger.warning("%s", e)
        rel = float("nan")
    return rel, absolute_improvement(history, final_accuracy=final)


def summarize(rows: Sequence[dict[str, str]]) -> ReportSummary:
    """Aggregate formatted iteration rows into one SummaryRow per (fraction, variant)."""
    groups = _group(rows)

    order: list[tuple[str, str]] = []
    for fraction, variant, _rep in groups:
        if is_baseline(variant) or variant.endswith(FINAL_TRAINING_SUFFIX):
            continue
        if (fraction, variant) not in order:
            order.append((fraction, variant))

    out = []
    for fraction, variant in order:
        reps = sorted({rep for f, v, rep in groups if f == fraction and v == variant}, key=int)
        baseline_acc, label_acc, finals, rels, abss = [], [], [], [], []
        for rep in reps:
            history = [row_to_record(r) for r in groups[(fraction, variant, rep)]]
            ft_rows = groups.get((fraction, variant + FINAL_TRAINING_SUFFIX, rep))
            final = float(ft_rows[-1]["test_accuracy"]) if ft_rows else history[-1].test_accuracy
            finals.append(final)
            rel, ab = _improvements(history, final)
            rels.append(rel)
            abss.append(ab)

            base_rows = (
                groups.get((fraction, baseline_variant(variant), rep))
                or groups.get((fraction, BASELINE_VARIANT, rep))
            )
            if base_rows:
                base = row_to_record(base_rows[0])
                baseline_acc.append(base.test_accuracy)
                if base.train_label_accuracy_vs_clean is not None:
                    label_acc.append(base.train_label_accuracy_vs_clean)

        if not baseline_acc:
            raise DataError(f"no baseline rows for noise fraction {fraction}")
        base_mean, base_sigma = mean_sigma(baseline_acc)
        final_mean, final_sigma = mean_sigma(finals)
        noisy_label = float(np.mean(label_acc)) if label_acc else None
        out.append(SummaryRow(
            noise_fraction=float(fraction),
            variant=variant,
            repetitions=len(reps),
            baseline_mean=base_mean,
            baseline_sigma=base_sigma,
            final_mean=final_mean,
            final_sigma=final_sigma,
            rel_improvement_pct=float(np.mean(rels)),
            abs_improvement_pp=float(np.mean(abss)),
            noisy_label_accuracy=noisy_label,
            prerequisite_met=None if noisy_label is None else base_mean > noisy_label,
        ))
    return ReportSummary(rows=out)


def format_summary_markdown(summary: ReportSummary) -> str:
    """Markdown table of a summary, one line per row."""
    lines = [
        "| f | variant | baseline | final | rel % | abs pp | prerequisite |",
        "|---|---|---|---|---|---|---|",
    ]
    for r in summary.rows:
        base = f"{r.baseline_mean:.4f}" + (f" ± {r.baseline_sigma:.4f}" if r.baseline_sigma is not None else "")
        final = f"{r.final_mean:.4f}" + (f" ± {r.final_sigma:.4f}" if r.final_sigma is not None else "")
        prereq = {True: "yes", False: "NO", None: "-"}[r.prerequisite_met]
        lines.append(
            f"| {r.noise_fraction:.2f} | {r.variant} | {base} | {final} "
            f"| {r.rel_improvement_pct:+.2f} | {r.abs_improvement_pp:+.2f} | {prereq} |"
        )
    return "\n".join(lines)
