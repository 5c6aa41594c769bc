"""Column-wise intersection-over-union between two images.

Each column of ground truth and prediction is reduced to the 1-d row
interval spanned by its "on" pixels, and the two intervals are compared
with IoU over inclusive pixel rows.  Model outputs are soft (every
pixel positive), so "on" needs a threshold rule; the default keeps
pixels at or above 0.2 of the column maximum, which reduces to the
plain non-zero rule on sparse ground-truth columns and adapts to how
sharp the prediction is.  An absolute above-uniform rule is available
behind the same switch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .raster import SeriesImage


@dataclass(frozen=True)
class ThresholdRule:
    """Selects which pixels of a column count as part of the curve.

    kind "relative": on iff value >= fraction * column max.
    kind "absolute": on iff value > 1 / height (above uniform mass).
    """

    kind: str = "relative"
    fraction: float = 0.2

    def __post_init__(self):
        if self.kind not in ("relative", "absolute"):
            raise ParameterError(f"unknown threshold kind {self.kind!r}")
        if not (0.0 < self.fraction <= 1.0):
            raise ParameterError(f"fraction must be in (0, 1], got {self.fraction}")

    def on_mask(self, column: np.ndarray) -> np.ndarray:
        if self.kind == "relative":
            peak = column.max()
            if peak <= 0.0:
                return np.zeros(column.shape, dtype=bool)
            return column >= self.fraction * peak
        return column > 1.0 / column.size


@dataclass(frozen=True)
class RowInterval:
    """Inclusive [lo, hi] row interval; lo=None marks the empty interval."""

    lo: int | None
    hi: int | None

    def __post_init__(self):
        if (self.lo is None) != (self.hi is None):
            raise ParameterError("lo and hi must both be set or both be None")
        if self.lo is not None:
            if self.lo < 0 or self.hi < self.lo:
                raise ParameterError(f"bad interval [{self.lo}, {self.hi}]")

    @property
    def is_empty(self) -> bool:
        return self.lo is None

    @property
    def size(self) -> int:
        return 0 if self.is_empty else self.hi - self.lo + 1


EMPTY_INTERVAL = RowInterval(None, None)


@dataclass(frozen=True)
class IoUProfile:
    """Per-column IoU values plus the overlap fraction for region splits."""

    per_column: np.ndarray
    c: float = 0.75

    def __post_init__(self):
        values = np.asarray(self.per_column, dtype=np.float64)
        if values.ndim != 1:
            raise ParameterError(f"profile must be 1-d, got shape {values.shape}")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ParameterError("IoU values must lie in [0, 1]")
        if not (0.0 <= self.c < 1.0):
            raise ParameterError(f"overlap fraction must be in [0, 1), got {self.c}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "per_column", values)

    @property
    def width(self) -> int:
        return self.per_column.size

    @property
    def prediction_columns(self) -> int:
        n_pred = (1.0 - self.c) * self.width
        if abs(n_pred - round(n_pred)) > 1e-9:
            raise ParameterError(f"width * (1 - c) must be integral, got {n_pred}")
        return round(n_pred)


def column_bbox(column: np.ndarray, rule: ThresholdRule = ThresholdRule()) -> RowInterval:
    """Smallest row interval covering all pixels the rule deems on."""
    column = np.asarray(column, dtype=np.float64)
    if column.ndim != 1:
        raise ParameterError(f"column must be 1-d, got shape {column.shape}")
    on = rule.on_mask(column)
    idx = np.flatnonzero(on)
    if idx.size == 0:
        return EMPTY_INTERVAL
    return RowInterval(int(idx[0]), int(idx[-1]))


def column_iou(a: RowInterval, b: RowInterval) -> float:
    """IoU of two row intervals, counting inclusive pixel rows.

    Two empty intervals agree perfectly (1.0); one empty against one
    occupied scores 0.
    """
    if a.is_empty and b.is_empty:
        return 1.0
    if a.is_empty or b.is_empty:
        return 0.0
    inter = max(0, min(a.hi, b.hi) - max(a.lo, b.lo) + 1)
    union = a.size + b.size - inter
    return inter / union


def image_iou_profile(
    gt: SeriesImage,
    pred: SeriesImage,
    rule: ThresholdRule = ThresholdRule(),
    c: float = 0.75,
) -> IoUProfile:
    """Per-column IoU of the bounding intervals of two images."""
    if gt.pixels.shape != pred.pixels.shape:
        raise ParameterError(f"image shape mismatch: {gt.pixels.shape} vs {pred.pixels.shape}")
    ious = np.array(
        [
            column_iou(column_bbox(gt.pixels[:, i], rule), column_bbox(pred.pixels[:, i], rule))
            for i in range(gt.width)
        ]
    )
    return IoUProfile(per_column=ious, c=c)


def region_scores(profile: IoUProfile) -> tuple[float, float]:
    """Mean IoU over the reconstruction and prediction column regions.

    The first c * width columns reconstruct the input tail, the last
    (1 - c) * width columns are the genuine forecast.
    """
    n_pred = profile.prediction_columns
    split = profile.width - n_pred
    recon = float(profile.per_column[:split].mean()) if split else float("nan")
    pred = float(profile.per_column[split:].mean()) if n_pred else float("nan")
    return recon, pred
