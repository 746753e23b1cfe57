"""
Result files of an experiment run:

    <output_dir>/
    ├── iterations.csv   # one row per (variant, fraction, repetition, iteration)
    ├── summary.csv      # one row per (fraction, variant)
    ├── summary.json     # summary.csv plus repetitions and prerequisite flags
    └── config.echo      # fully resolved config as YAML
"""

import csv
import json
import logging
from pathlib import Path
from typing import Sequence

from .config import ExperimentConfig, dump_config
from .errors import DataError, IliError
from .scoring import ITERATION_COLUMNS, SUMMARY_COLUMNS, ReportSummary

logger = logging.getLogger(__name__)

ITERATIONS_FILE = "iterations.csv"
SUMMARY_CSV = "summary.csv"
SUMMARY_JSON = "summary.json"
CONFIG_ECHO = "config.echo"


def _write_csv(path: Path, columns: list[str], rows: Sequence[dict[str, str]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def write_summary(summary: ReportSummary, output_dir: Path, experiment: str | None = None) -> None:
    _write_csv(output_dir / SUMMARY_CSV, SUMMARY_COLUMNS, [r.csv_row() for r in summary.rows])
    payload = {"experiment": experiment, **summary.to_dict()}
    with open(output_dir / SUMMARY_JSON, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def emit_reports(
    rows: Sequence[dict[str, str]],
    summary: ReportSummary,
    output_dir: str | Path,
    config: ExperimentConfig,
) -> list[Path]:
    """Write all result files and return their paths."""
    output_dir = Path(output_dir)
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(output_dir / ITERATIONS_FILE, ITERATION_COLUMNS, rows)
        write_summary(summary, output_dir, experiment=config.name)
        (output_dir / CONFIG_ECHO).write_text(dump_config(config))
    except OSError as e:
        raise IliError(f"cannot write reports to {output_dir}: {e}") from e

    written = [output_dir / n for n in (ITERATIONS_FILE, SUMMARY_CSV, SUMMARY_JSON, CONFIG_ECHO)]
    logger.info("Wrote %d iteration rows and %d summary rows to %s", len(rows), len(summary.rows), output_dir)
    return written


def read_iterations(run_dir: str | Path) -> list[dict[str, str]]:
    path = Path(run_dir) / ITERATIONS_FILE
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != ITERATION_COLUMNS:
                raise DataError(f"{path}: unexpected header {reader.fieldnames}")
            return list(reader)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
