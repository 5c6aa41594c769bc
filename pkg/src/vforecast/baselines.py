"""Random-walk-without-drift forecasting and numeric-to-image conversion.

The random walk assumes first differences are time-independent Gaussian
steps.  Its step scale is the root mean square of the observed first
differences, and the distribution of the value k steps ahead is normal
around the last observed value with standard deviation sqrt(k) times
the step scale.  The mean path (a flat line at the anchor) is the
default point forecast; a sampled path is available for studying how a
single realization rasterizes.

numeric_to_image is the single code path through which any numeric
forecast, from this baseline or the numeric autoencoder, becomes an
image: metric comparisons against rendered ground truth therefore never
favor one prediction source over another.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError
from .raster import RenderSpec, SeriesImage, WindowSpec, render
from .seriesgen import TimeSeries

_MODES = ("mean", "sample")


@dataclass(frozen=True)
class RandomWalkModel:
    """Fitted step scale and anchor for a driftless random walk."""

    sigma_hat: float
    anchor: float
    mode: str = "mean"

    def __post_init__(self):
        if self.sigma_hat < 0:
            raise ParameterError(f"sigma_hat must be non-negative, got {self.sigma_hat}")
        if self.mode not in _MODES:
            raise ParameterError(f"mode must be one of {_MODES}, got {self.mode!r}")


def rw_fit(series: TimeSeries | np.ndarray, mode: str = "mean") -> RandomWalkModel:
    """Estimate the walk: sigma_hat = RMS of first differences, anchor = last value."""
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    if values.size < 2:
        raise DataError(f"random walk fit needs at least 2 samples, got {values.size}")
    diffs = np.diff(values)
    sigma_hat = float(np.sqrt(np.mean(diffs**2)))
    return RandomWalkModel(sigma_hat=sigma_hat, anchor=float(values[-1]), mode=mode)


def rw_predict(model: RandomWalkModel, horizon: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Forecast `horizon` future values.

    Mean mode returns the anchor at every step (the predictive mean of
    a driftless walk).  Sample mode draws one path of cumulative
    Gaussian increments, so the value at step k is distributed
    N(anchor, sqrt(k) * sigma_hat); it requires an explicit generator.
    """
    if horizon < 1:
        raise ParameterError(f"horizon must be >= 1, got {horizon}")
    if model.mode == "mean" or model.sigma_hat == 0.0:
        return np.full(horizon, model.anchor, dtype=np.float64)
    if rng is None:
        raise ParameterError("sample mode needs an explicit random generator")
    steps = rng.normal(0.0, model.sigma_hat, size=horizon)
    return model.anchor + np.cumsum(steps)


def numeric_to_image(
    input_series: TimeSeries,
    prediction: np.ndarray,
    wspec: WindowSpec = WindowSpec(),
    rspec: RenderSpec = RenderSpec(),
) -> SeriesImage:
    """Render a numeric forecast as the target-window image.

    The target window consists of the last c * L input samples (reused
    verbatim) followed by the (1 - c) * L predicted samples; the
    assembled window is rasterized against its own value bounds, the
    same way ground-truth windows are.
    """
    prediction = np.asarray(prediction, dtype=np.float64)
    if len(input_series) != wspec.input_len:
        raise DataError(f"input window must have {wspec.input_len} samples, got {len(input_series)}")
    if prediction.ndim != 1 or prediction.size != wspec.shift:
        raise DataError(f"prediction must have {wspec.shift} samples, got {prediction.size}")
    assembled = np.concatenate([input_series.values[wspec.shift :], prediction])
    window = TimeSeries(assembled, dt=input_series.dt, origin="forecast")
    return render(window, rspec)
