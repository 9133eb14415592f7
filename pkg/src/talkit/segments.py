"""1-D segment geometry: the value types every other module builds on."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True, order=True)
class Segment:
    """A half-open-in-spirit time span in seconds with ``end > start``."""

    start: float
    end: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValidationError(f"segment endpoints must be finite, got ({self.start}, {self.end})")
        if self.start < 0:
            raise ValidationError(f"segment start must be non-negative, got {self.start}")
        if not self.end > self.start:
            raise ValidationError(f"segment end must exceed start, got ({self.start}, {self.end})")

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class ActionInstance:
    """A ground-truth action occurrence: a segment plus its class index."""

    segment: Segment
    label: int

    def __post_init__(self) -> None:
        if self.label < 0:
            raise ValidationError(f"label must be a non-negative class index, got {self.label}")


@dataclass(frozen=True)
class Prediction:
    """A model output: segment, class index, and confidence in [0, 1]."""

    segment: Segment
    label: int
    score: float

    def __post_init__(self) -> None:
        if self.label < 0:
            raise ValidationError(f"label must be a non-negative class index, got {self.label}")
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValidationError(f"score must lie in [0, 1], got {self.score}")


def iou_1d(a: Segment, b: Segment) -> float:
    """Intersection-over-union of two segments; 0 when disjoint, symmetric."""
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    union = (a.end - a.start) + (b.end - b.start) - inter
    return inter / union


def interval_iou(a_start: float, a_end: float, b_start: float, b_end: float) -> float:
    """IoU on raw endpoint pairs, for hot loops that bypass Segment objects."""
    inter = min(a_end, b_end) - max(a_start, b_start)
    if inter <= 0:
        return 0.0
    return inter / ((a_end - a_start) + (b_end - b_start) - inter)
