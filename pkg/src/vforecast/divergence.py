"""Distribution distances between image columns, plus the Huber loss.

Images are compared column by column: each column is a discrete
probability distribution over row positions, and the image-level loss
is the sum of per-column distances.  The Jensen-Shannon divergence is
the training distance of choice; it is symmetric, bounded by ln 2, and
defined even when supports do not overlap.  A smoothed Kullback-Leibler
divergence is kept for standalone reporting.  All logarithms are
natural.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ParameterError
from .raster import SeriesImage

LN2 = float(np.log(2.0))
KLD_SMOOTHING = 1e-8


def _as_dist(x) -> np.ndarray:
    p = np.asarray(x, dtype=np.float64)
    if p.ndim != 1:
        raise ParameterError(f"distribution must be 1-d, got shape {p.shape}")
    return p


def _xlogx_ratio(p: np.ndarray, q: np.ndarray) -> float:
    # sum of p * ln(p/q) with the 0 * ln 0 = 0 convention
    mask = p > 0.0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kld(p, q, smoothing: float = KLD_SMOOTHING) -> float:
    """Kullback-Leibler divergence of p from q, in nats.

    Both distributions receive additive smoothing and are renormalized
    before the sum, so zero-support mismatches stay finite.  Pass
    smoothing=0 to evaluate the raw definition.
    """
    p, q = _as_dist(p), _as_dist(q)
    if p.shape != q.shape:
        raise ParameterError(f"shape mismatch: {p.shape} vs {q.shape}")
    if smoothing:
        p = (p + smoothing) / (p + smoothing).sum()
        q = (q + smoothing) / (q + smoothing).sum()
    return _xlogx_ratio(p, q)


def jsd(p, q) -> float:
    """Jensen-Shannon divergence, in nats; symmetric, in [0, ln 2].

    Computed against the mixture m = (p + q) / 2, which is positive
    wherever either input is, so no smoothing is needed.
    """
    p, q = _as_dist(p), _as_dist(q)
    if p.shape != q.shape:
        raise ParameterError(f"shape mismatch: {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    return 0.5 * _xlogx_ratio(p, m) + 0.5 * _xlogx_ratio(q, m)


def jsd_grad_q(p, q) -> np.ndarray:
    """Analytic gradient of jsd(p, q) with respect to q.

    Equals ln(q/m) / 2 elementwise with m the even mixture; zero
    exactly when q = p.  Entries of q must be positive.
    """
    p, q = _as_dist(p), _as_dist(q)
    if np.any(q <= 0.0):
        raise ParameterError("gradient needs strictly positive q")
    m = 0.5 * (p + q)
    return 0.5 * np.log(q / m)


_DISTANCES: dict[str, Callable] = {"jsd": jsd, "kld": kld}


def resolve_distance(d) -> Callable:
    """Map a distance selector (callable or 'jsd'/'kld') to a callable."""
    if callable(d):
        return d
    try:
        return _DISTANCES[d]
    except KeyError:
        raise ParameterError(f"unknown distance {d!r}; expected one of {sorted(_DISTANCES)}") from None


def columnwise_loss(y: SeriesImage | np.ndarray, yhat: SeriesImage | np.ndarray, d="jsd") -> float:
    """Sum of per-column distances between two equally sized images."""
    a = y.pixels if isinstance(y, SeriesImage) else np.asarray(y, dtype=np.float64)
    b = yhat.pixels if isinstance(yhat, SeriesImage) else np.asarray(yhat, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"image shape mismatch: {a.shape} vs {b.shape}")
    dist = resolve_distance(d)
    return float(sum(dist(a[:, i], b[:, i]) for i in range(a.shape[1])))


def jsd_profile(y: np.ndarray, yhat: np.ndarray) -> np.ndarray:
    """Per-column JSD between two images, vectorized over columns.

    Agrees with calling :func:`jsd` column by column; zero exactly for
    identical columns.
    """
    p = np.asarray(y, dtype=np.float64)
    q = np.asarray(yhat, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2:
        raise ParameterError(f"need two equal 2-d images, got {p.shape} and {q.shape}")
    m = 0.5 * (p + q)
    log_m = np.log(np.where(m > 0.0, m, 1.0))

    def half(x):
        log_x = np.log(np.where(x > 0.0, x, 1.0))
        return np.where(x > 0.0, x * (log_x - log_m), 0.0).sum(axis=0)

    return 0.5 * half(p) + 0.5 * half(q)


def huber(a, b, delta: float = 1.0) -> float:
    """Mean elementwise Huber penalty between two equal-length series.

    Quadratic (r^2 / 2) within delta of zero residual, linear
    (delta * (|r| - delta/2)) outside.
    """
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ParameterError(f"length mismatch: {x.size} vs {y.size}")
    r = np.abs(x - y)
    quad = 0.5 * r**2
    lin = delta * (r - 0.5 * delta)
    return float(np.mean(np.where(r <= delta, quad, lin)))
