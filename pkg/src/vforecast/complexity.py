"""Weighted permutation entropy for ranking series complexity.

Each sliding triplet of consecutive samples is reduced to its ordinal
pattern (one of the 3! = 6 orderings) and weighted by the triplet's
population variance, so flat stretches contribute little and energetic
ones dominate.  The entropy of the weighted pattern distribution,
normalized by ln 6, lands in [0, 1]: 0 for a monotone ramp, near 1 for
white noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError
from .seriesgen import TimeSeries

EMBED_DIM = 3
N_PATTERNS = 6  # 3! orderings of a triplet


@dataclass(frozen=True)
class WpeConfig:
    """Ordinal-window settings; the window length is fixed at 3."""

    embed_dim: int = EMBED_DIM
    tie_epsilon: float = 0.0

    def __post_init__(self):
        if self.embed_dim != EMBED_DIM:
            raise ParameterError(f"embed_dim is fixed at {EMBED_DIM}, got {self.embed_dim}")
        if self.tie_epsilon < 0:
            raise ParameterError(f"tie_epsilon must be non-negative, got {self.tie_epsilon}")


def _pattern_ids_exact(triplets: np.ndarray) -> np.ndarray:
    # Stable argsort orders exact ties by index, the declared tie rule.
    order = np.argsort(triplets, axis=1, kind="stable")
    return order[:, 0] * 9 + order[:, 1] * 3 + order[:, 2]


def _pattern_id_with_ties(triplet: np.ndarray, eps: float) -> int:
    order = list(np.argsort(triplet, kind="stable"))
    # Merge adjacent sorted values within eps into tie groups, then put
    # each group back in index order.
    merged: list[int] = []
    group = [order[0]]
    for idx in order[1:]:
        if triplet[idx] - triplet[group[-1]] <= eps:
            group.append(idx)
        else:
            merged.extend(sorted(group))
            group = [idx]
    merged.extend(sorted(group))
    return merged[0] * 9 + merged[1] * 3 + merged[2]


def wpe(series: TimeSeries | np.ndarray, config: WpeConfig = WpeConfig()) -> float:
    """Weighted permutation entropy of a series, normalized into [0, 1].

    Requires at least 4 samples (two triplets).  A constant series has
    zero total weight and returns 0.
    """
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    if values.ndim != 1 or values.size < 4:
        raise ParameterError(f"wpe needs a 1-d series of at least 4 samples, got shape {values.shape}")

    triplets = sliding_window_view(values, EMBED_DIM)
    weights = np.var(triplets, axis=1)
    total = float(weights.sum())
    if total <= 0.0:
        return 0.0

    if config.tie_epsilon == 0.0:
        ids = _pattern_ids_exact(triplets)
    else:
        ids = np.array([_pattern_id_with_ties(t, config.tie_epsilon) for t in triplets])

    mass = np.bincount(ids, weights=weights, minlength=27)
    p = mass[mass > 0] / total
    entropy = float(-(p * np.log(p)).sum())
    return entropy / math.log(N_PATTERNS)
