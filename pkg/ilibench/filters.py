"""
Label filters: decide per sample whether a model's pseudo-label replaces the
label from the previous ILI iteration.

``replaced_count`` counts different things per mode: labels that changed when
unfiltered, predictions accepted (including ones equal to the previous label)
under the confidence filter.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DataError
from .learner import PredictionResult

DEFAULT_THRESHOLD = 0.3


class FilterSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["unfiltered", "confidence"] = "unfiltered"
    threshold: float = Field(default=DEFAULT_THRESHOLD, ge=0.0, le=1.0)

    @property
    def label(self) -> str:
        if self.mode == "unfiltered":
            return "unfiltered"
        return f"conf{self.threshold:g}"


UNFILTERED = FilterSpec()


@dataclass(frozen=True)
class FilterOutcome:
    labels: np.ndarray
    from_prediction: np.ndarray
    replaced_count: int
    kept_count: int


def apply_filter(spec: FilterSpec, prediction: PredictionResult, prev_labels: np.ndarray) -> FilterOutcome:
    """Unfiltered: take every prediction. Confidence: take a prediction only when
    its confidence is strictly above the threshold, else keep prev_labels."""
    prev_labels = np.asarray(prev_labels, dtype=np.int64)
    if prev_labels.shape[0] != len(prediction):
        raise DataError(f"{len(prediction)} predictions but {prev_labels.shape[0]} previous labels")

    predicted = prediction.predicted.astype(np.int64)
    if spec.mode == "unfiltered":
        # kept_count only counts accidental agreement with the previous labels
        kept = int(np.count_nonzero(predicted == prev_labels))
        return FilterOutcome(
            labels=predicted.copy(),
            from_prediction=np.ones(predicted.shape[0], dtype=bool),
            replaced_count=predicted.shape[0] - kept,
            kept_count=kept,
        )

    take = prediction.confidence > spec.threshold
    replaced = int(np.count_nonzero(take))
    return FilterOutcome(
        labels=np.where(take, predicted, prev_labels),
        from_prediction=take,
        replaced_count=replaced,
        kept_count=predicted.shape[0] - replaced,
    )
