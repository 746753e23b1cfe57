"""
Experiment configuration: YAML files validated into pydantic models.

Unknown keys anywhere in the tree are errors. ``validate_config`` reports
problems as strings naming the dotted field path; ``load_config`` raises
ConfigError with the same messages.
"""

from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dataset import SplitPlan
from .engine import IliConfig
from .errors import ConfigError
from .noise import NoiseSpec
from .scoring import is_baseline


class BlobSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_classes: int = Field(default=3, ge=2)
    per_class: int = Field(default=400, ge=1)
    dim: int = Field(default=2, ge=1)
    separation: float = Field(default=6.0, gt=0)
    variance: float = Field(default=1.0, gt=0)
    seed: int = Field(default=0, ge=0)


class DatasetSource(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["idx", "blobs", "csv"] = "blobs"
    images: Path | None = None
    labels: Path | None = None
    test_images: Path | None = None
    test_labels: Path | None = None
    csv: Path | None = None
    num_classes: int | None = Field(default=None, ge=2)
    blobs: BlobSource = Field(default_factory=BlobSource)

    @model_validator(mode="after")
    def _check_paths(self) -> "DatasetSource":
        if self.kind == "idx" and (self.images is None or self.labels is None):
            raise ValueError("idx datasets need 'images' and 'labels' paths")
        if (self.test_images is None) != (self.test_labels is None):
            raise ValueError("'test_images' and 'test_labels' go together")
        if self.kind == "csv" and self.csv is None:
            raise ValueError("csv datasets need a 'csv' path")
        return self

    @property
    def has_test_files(self) -> bool:
        return self.kind == "idx" and self.test_images is not None


class SubsetCap(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train: int | None = Field(default=10_000, ge=1)
    val: int | None = Field(default=2_000, ge=1)
    test: int | None = Field(default=None, ge=1)


class NoiseSection(NoiseSpec):
    sweep: list[float] | None = None

    @field_validator("sweep")
    @classmethod
    def _check_sweep(cls, v: list[float] | None) -> list[float] | None:
        if v is not None:
            if not v:
                raise ValueError("sweep must list at least one fraction")
            bad = [f for f in v if not 0.0 <= f <= 1.0]
            if bad:
                raise ValueError(f"sweep fractions must lie in [0, 1], got {bad}")
        return v

    @property
    def fractions(self) -> list[float]:
        return list(self.sweep) if self.sweep is not None else [self.fraction]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    dataset: DatasetSource = Field(default_factory=DatasetSource)
    split: SplitPlan = Field(default_factory=lambda: SplitPlan(fractions=[0.6, 0.2, 0.2]))
    subset_cap: SubsetCap = Field(default_factory=SubsetCap)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    noisy_validation: bool = False
    labelled_fraction: float = Field(default=0.5, gt=0.0, lt=1.0)
    noisy_reference: bool = True
    ili: list[IliConfig] = Field(default_factory=lambda: [IliConfig()])
    repetitions: int = Field(default=5, ge=1)
    base_seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    output_dir: Path = Path("results")

    @field_validator("ili", mode="before")
    @classmethod
    def _one_or_many(cls, v: Any) -> Any:
        return [v] if isinstance(v, dict) else v

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if not self.ili:
            raise ValueError("ili must list at least one configuration")
        labels = [c.label for c in self.ili]
        dupes = sorted({x for x in labels if labels.count(x) > 1})
        if dupes:
            raise ValueError(f"ili configurations need unique names, duplicated: {dupes}")
        reserved = [x for x in labels if is_baseline(x)]
        if reserved:
            raise ValueError(f"'baseline' labels are reserved for the noisy baseline rows: {reserved}")
        want = 2 if self.dataset.has_test_files else 3
        if len(self.split.fractions) != want:
            raise ValueError(
                f"split.fractions needs {want} entries "
                f"({'train, val' if want == 2 else 'train, val, test'})"
            )
        return self


def _format_errors(err: ValidationError) -> list[str]:
    out = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        out.append(f"{loc}: {e['msg']}")
    return out


def validate_config(raw: dict) -> list[str]:
    """Validate a config dict and return a list of error strings (empty = valid)."""
    if not isinstance(raw, dict):
        return ["config must be a mapping at the top level"]
    try:
        ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        return _format_errors(e)
    return []


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError("invalid config:\n  " + "\n  ".join(_format_errors(e))) from e


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"{path} is not valid YAML: {e}") from e
    return parse_config(raw)


def dump_config(config: ExperimentConfig) -> str:
    """YAML text that parse_config() turns back into an equal config."""
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)
