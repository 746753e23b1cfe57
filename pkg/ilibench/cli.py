"""
CLI for ilibench.

Thin wrapper around the YAML-configured experiment runner. Library errors
become exit codes: 1 config, 2 data, 3 numerical failure.
"""

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

import numpy as np
import typer
import yaml
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .config import load_config, validate_config
from .dataset import IDX_LABELS_MAGIC, load_idx_labels, make_blobs
from .errors import ConfigError, DataError, IliError
from .noise import NoiseSpec, label_accuracy, parse_mapping
from .reports import CONFIG_ECHO, read_iterations, write_summary
from .runner import cell_seed, prepare_data, run_baseline, run_experiment
from .scoring import ReportSummary, summarize

app = typer.Typer(help="ilibench - Iterative Label Improvement experiments")
console = Console()
err_console = Console(stderr=True)

ROOT_DIR = Path(__file__).resolve().parent.parent
CONFIGS_DIR = ROOT_DIR / "configs"


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False)],
    )


@contextmanager
def _exit_on_error() -> Iterator[None]:
    try:
        yield
    except IliError as e:
        err_console.print(f"[red]{type(e).__name__}:[/red] {e}")
        raise typer.Exit(e.exit_code)
    except OSError as e:
        err_console.print(f"[red]I/O error:[/red] {e}")
        raise typer.Exit(1)


def _resolve_config(name_or_path: str) -> Path:
    """A config path, or the name of a file under configs/."""
    path = Path(name_or_path)
    if not path.exists():
        path = CONFIGS_DIR / f"{name_or_path}.yaml"
    if not path.exists():
        available = [p.stem for p in sorted(CONFIGS_DIR.glob("*.yaml"))]
        raise ConfigError(f"config not found: {name_or_path} (available: {available})")
    return path


def _summary_table(summary: ReportSummary, title: str) -> Table:
    table = Table(title=title)
    table.add_column("f", justify="right")
    table.add_column("Variant", style="cyan")
    table.add_column("Baseline", justify="right")
    table.add_column("Final", justify="right")
    table.add_column("Rel %", justify="right")
    table.add_column("Abs pp", justify="right")
    table.add_column("Prereq")

    def pm(mean: float, sigma: float | None) -> str:
        return f"{mean:.4f}" if sigma is None else f"{mean:.4f} ± {sigma:.4f}"

    for r in summary.rows:
        prereq = {True: "[green]yes[/green]", False: "[red]no[/red]", None: "-"}[r.prerequisite_met]
        table.add_row(
            f"{r.noise_fraction:.2f}",
            r.variant,
            pm(r.baseline_mean, r.baseline_sigma),
            pm(r.final_mean, r.final_sigma),
            f"{r.rel_improvement_pct:+.2f}",
            f"{r.abs_improvement_pp:+.2f}",
            prereq,
        )
    return table


@app.command()
def run(
    config: str = typer.Argument(..., help="Config name or path to YAML file"),
    output_dir: Path = typer.Option(None, "--output-dir", "-o", help="Override the config's output_dir"),
    workers: int = typer.Option(None, help="Override the config's worker count"),
):
    """Run a full experiment and write iterations/summary files."""
    with _exit_on_error():
        cfg = load_config(_resolve_config(config))
        if workers is not None:
            cfg = cfg.model_copy(update={"workers": max(1, workers)})
        out = output_dir or cfg.output_dir
        console.print(f"[bold blue]Running:[/bold blue] {cfg.name} -> {out}")
        summary = run_experiment(cfg, output_dir=out)
    console.print(_summary_table(summary, cfg.name))
    if summary.failure_regime:
        console.print("[yellow]Baseline does not beat the noisy labels for some rows; "
                      "no improvement is expected there.[/yellow]")


@app.command()
def baseline(config: str = typer.Argument(..., help="Config name or path to YAML file")):
    """Train only the noisy baselines of every sweep cell."""
    with _exit_on_error():
        cfg = load_config(_resolve_config(config))
        data = prepare_data(cfg)
        table = Table(title=f"{cfg.name}: noisy baseline")
        table.add_column("f", justify="right")
        table.add_column("Rep", justify="right")
        table.add_column("Val", justify="right")
        table.add_column("Test", justify="right")
        table.add_column("Label acc", justify="right")
        for fi, fraction in enumerate(cfg.noise.fractions):
            for rep in range(cfg.repetitions):
                rec = run_baseline(cfg, fraction, cell_seed(cfg.base_seed, fi, rep), data=data)
                table.add_row(
                    f"{fraction:.2f}", str(rep), f"{rec.val_accuracy:.4f}", f"{rec.test_accuracy:.4f}",
                    f"{rec.train_label_accuracy_vs_clean:.4f}",
                )
    console.print(table)


def _read_labels(path: Path) -> np.ndarray:
    try:
        head = path.read_bytes()[:4]
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if head == IDX_LABELS_MAGIC.to_bytes(4, "big"):
        return load_idx_labels(path)
    try:
        return np.array([int(line) for line in path.read_text().split()], dtype=np.int64)
    except ValueError as e:
        raise DataError(f"{path}: expected one integer label per line ({e})") from e


@app.command()
def inject(
    labels: Path = typer.Argument(..., help="IDX label file or text file with one label per line"),
    fraction: float = typer.Option(..., help="Noise fraction in [0, 1]"),
    kind: str = typer.Option("random", help="random or bias"),
    map_: list[str] = typer.Option([], "--map", help="Bias mapping a:b (repeatable)"),
    seed: int = typer.Option(0, help="Noise seed"),
    num_classes: int = typer.Option(None, help="Number of classes (default: max label + 1)"),
    output: Path = typer.Option(None, "--output", "-o", help="Write noisy labels here (default: stdout)"),
):
    """Corrupt a label vector and write the noisy labels one per line."""
    with _exit_on_error():
        clean = _read_labels(labels)
        if clean.size == 0:
            raise DataError(f"{labels} holds no labels")
        try:
            spec = NoiseSpec(kind=kind, mapping=parse_mapping(map_), fraction=fraction, seed=seed)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        k = num_classes or max(2, int(clean.max()) + 1)
        noisy = spec.apply(clean, k)
        text = "\n".join(str(int(v)) for v in noisy.labels) + "\n"
        if output is None:
            typer.echo(text, nl=False)
        else:
            output.write_text(text)
    err_console.print(
        f"changed {noisy.changed_count}/{clean.size} labels, "
        f"label accuracy {label_accuracy(noisy.labels, clean):.4f}"
    )


@app.command()
def report(
    run_dir: Path = typer.Argument(..., help="Directory holding iterations.csv"),
    write: bool = typer.Option(False, help="Rewrite summary.csv/summary.json from iterations.csv"),
):
    """Recompute the summary of a finished run from iterations.csv."""
    with _exit_on_error():
        summary = summarize(read_iterations(run_dir))
        if write:
            echo = run_dir / CONFIG_ECHO
            name = load_config(echo).name if echo.exists() else None
            write_summary(summary, run_dir, experiment=name)
    console.print(_summary_table(summary, str(run_dir)))


@app.command()
def blobs(
    output: Path = typer.Argument(..., help="CSV file to write"),
    num_classes: int = typer.Option(3, help="Number of classes"),
    per_class: int = typer.Option(400, help="Samples per class"),
    dim: int = typer.Option(2, help="Feature dimension"),
    separation: float = typer.Option(6.0, help="Distance between the closest pair of means"),
    variance: float = typer.Option(1.0, help="Per-axis variance"),
    seed: int = typer.Option(0, help="Sampling seed"),
):
    """Export a synthetic Gaussian-blob dataset as CSV."""
    with _exit_on_error():
        dataset, oracle = make_blobs(num_classes, per_class, dim, separation, seed, variance)
        dataset.to_csv(output)
        acc = float(np.mean(oracle.classify(dataset.features) == dataset.labels))
    console.print(f"Wrote {len(dataset)} samples to {output} (Bayes classifier accuracy {acc:.4f})")


@app.command()
def validate(config: str = typer.Argument(..., help="Config name or path to YAML file")):
    """Validate a config file without running anything."""
    with _exit_on_error():
        path = _resolve_config(config)
        try:
            raw = yaml.safe_load(path.read_text())
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read {path}: {e}") from e
    errors = validate_config(raw)
    if errors:
        for err in errors:
            console.print(f"[red]  error:[/red] {err}")
        raise typer.Exit(1)
    console.print(f"[green]OK[/green] {path}")


if __name__ == "__main__":
    app()
