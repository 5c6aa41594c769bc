"""Synthetic series generators, CSV ingestion, and dataset splits.

Two generators are provided: a two-timescale harmonic signal (cyclic,
low complexity) and a mean-reverting Ornstein-Uhlenbeck process (noisy,
high complexity).  Real series enter through headerless CSV files.  All
randomness flows through explicit substreams of a master seed (see
:mod:`vforecast.rng`), one substream per example, so splits are
reproducible and disjoint by construction.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, ParameterError
from .rng import substream

# One minute expressed in nanoseconds; the default OU sampling interval.
MINUTE_NS = 6.0e10

_MAX_RESAMPLE = 1000


@dataclass(frozen=True)
class TimeSeries:
    """An ordered, uniformly sampled real-valued series.

    Attributes
    ----------
    values : np.ndarray
        1-d float array of samples.  Must be finite and hold at least 4
        samples (the minimum both windowing and ordinal-pattern entropy
        can work with).
    dt : float
        Time step in abstract units (seconds, days, minutes, ...).
    origin : str or None
        Optional tag recording where the series came from.
    """

    values: np.ndarray
    dt: float = 1.0
    origin: str | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ParameterError(f"series must be 1-d, got shape {values.shape}")
        if values.size < 4:
            raise ParameterError(f"series needs at least 4 samples, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise DataError("series contains non-finite values")
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class HarmonicParams:
    """Parameters of the additive two-timescale harmonic generator.

    The signal at integer time t (1-based) is

        (a1 + b1*t) * sin(2*pi*t/t1 + phi1) + (a2 + b2*t) * sin(2*pi*t/t2 + phi2)

    a1, a2 scale the oscillations, b1, b2 add linear amplitude trends,
    t1, t2 are the short and long driving periods, phi1, phi2 the phase
    shifts, and length the number of samples.
    """

    a1: float
    a2: float
    b1: float
    b2: float
    t1: float
    t2: float
    phi1: float
    phi2: float
    length: int = 200

    def __post_init__(self):
        if not (self.t1 > 0 and self.t2 > 0):
            raise ParameterError(f"periods must be positive, got t1={self.t1}, t2={self.t2}")
        if self.length < 4:
            raise ParameterError(f"length must be at least 4, got {self.length}")


@dataclass(frozen=True)
class OUParams:
    """Parameters of the discretely sampled Ornstein-Uhlenbeck process.

    gamma is the mean-reversion rate in 1/ns, sigma the volatility, mu
    the level the process reverts to, and s0 the starting value (mu when
    omitted).  step_ns is the sampling interval in nanoseconds; the
    default is one minute.  n is the number of generated samples.
    """

    mu: float = 0.0
    gamma: float = 8.0e-8
    sigma: float = 1.0e-2
    s0: float | None = None
    step_ns: float = MINUTE_NS
    n: int = 200

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.sigma < 0:
            raise ParameterError(f"sigma must be non-negative, got {self.sigma}")
        if not self.step_ns > 0:
            raise ParameterError(f"step_ns must be positive, got {self.step_ns}")
        if self.n < 4:
            raise ParameterError(f"n must be at least 4, got {self.n}")

    @property
    def start(self) -> float:
        return self.mu if self.s0 is None else self.s0


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test collections plus the master seed."""

    train: tuple[TimeSeries, ...]
    validation: tuple[TimeSeries, ...]
    test: tuple[TimeSeries, ...]
    seed: int = 0


def gen_harmonic(params: HarmonicParams) -> TimeSeries:
    """Evaluate the harmonic generator; deterministic in its parameters."""
    t = np.arange(1, params.length + 1, dtype=np.float64)
    values = (params.a1 + params.b1 * t) * np.sin(2.0 * np.pi * t / params.t1 + params.phi1) + (
        params.a2 + params.b2 * t
    ) * np.sin(2.0 * np.pi * t / params.t2 + params.phi2)
    return TimeSeries(values, dt=1.0, origin="harmonic")


def _positive_normal(rng: np.random.Generator, mean: float, std: float) -> float:
    # Rejection sampling keeps the stated distribution conditioned on > 0.
    for _ in range(_MAX_RESAMPLE):
        x = rng.normal(mean, std)
        if x > 0:
            return float(x)
    raise ParameterError(f"could not draw a positive normal({mean}, {std}) value")


def sample_harmonic_params(rng: np.random.Generator, length: int = 200) -> HarmonicParams:
    """Draw harmonic parameters from their generating distributions.

    Amplitudes are normal around 1 (std 0.5), trend slopes uniform in
    [-1/length, 1/length], the short period normal around length/5 and
    the long one around length, phases uniform in [0, 2*pi).  Periods
    are redrawn until positive.
    """
    if length < 4:
        raise ParameterError(f"length must be at least 4, got {length}")
    t_total = float(length)
    return HarmonicParams(
        a1=float(rng.normal(1.0, 0.5)),
        a2=float(rng.normal(1.0, 0.5)),
        b1=float(rng.uniform(-1.0 / t_total, 1.0 / t_total)),
        b2=float(rng.uniform(-1.0 / t_total, 1.0 / t_total)),
        t1=_positive_normal(rng, t_total / 5.0, t_total / 10.0),
        t2=_positive_normal(rng, t_total, t_total / 2.0),
        phi1=float(rng.uniform(0.0, 2.0 * np.pi)),
        phi2=float(rng.uniform(0.0, 2.0 * np.pi)),
        length=length,
    )


def gen_ou(params: OUParams, rng: np.random.Generator) -> TimeSeries:
    """Simulate the OU process by its exact one-step Gaussian transition.

    Each step decays the deviation from mu by exp(-gamma*step_ns) and
    adds Gaussian noise with the matching stationary-consistent variance
    sigma^2/(2*gamma) * (1 - exp(-2*gamma*step_ns)).  The returned
    series holds the n samples after the starting value.
    """
    decay = math.exp(-params.gamma * params.step_ns)
    step_var = (params.sigma**2) / (2.0 * params.gamma) * (1.0 - math.exp(-2.0 * params.gamma * params.step_ns))
    step_std = math.sqrt(step_var)

    noise = rng.standard_normal(params.n) if step_std > 0 else np.zeros(params.n)
    values = np.empty(params.n, dtype=np.float64)
    prev = params.start - params.mu
    for i in range(params.n):
        prev = prev * decay + step_std * noise[i]
        values[i] = params.mu + prev
    return TimeSeries(values, dt=params.step_ns / MINUTE_NS, origin="ou")


def sample_ou_params(rng: np.random.Generator, n: int = 200) -> OUParams:
    """Draw OU parameters: gamma ~ N(8e-8, 4e-8) 1/ns, sigma ~ N(1e-2, 5e-3).

    Non-positive draws are rejected and redrawn.  The reversion level mu
    is held at 0: every window is rendered against its own value bounds
    downstream, so the absolute level carries no information.
    """
    return OUParams(
        mu=0.0,
        gamma=_positive_normal(rng, 8.0e-8, 4.0e-8),
        sigma=_positive_normal(rng, 1.0e-2, 5.0e-3),
        s0=None,
        step_ns=MINUTE_NS,
        n=n,
    )


def standardize(series: TimeSeries) -> TimeSeries:
    """Shift and scale to mean 0 and population standard deviation 1."""
    mean = float(np.mean(series.values))
    std = float(np.std(series.values))
    if std == 0.0:
        raise DataError("cannot standardize a zero-variance series")
    return TimeSeries((series.values - mean) / std, dt=series.dt, origin=series.origin)


def load_series_csv(
    path: str | os.PathLike,
    segment_len: int | None = None,
    stride: int | None = None,
    dt: float = 1.0,
) -> list[TimeSeries]:
    """Read series from a headerless CSV of comma-separated numbers.

    With segment_len unset, each row becomes one series.  With it set,
    every row is cut into sliding segments of that length, advancing by
    `stride` samples (default: segment_len, i.e. non-overlapping); a
    single long row with a stride therefore expands into many series.

    Raises DataError for a missing file, a non-numeric cell, or a row
    shorter than segment_len; messages carry the 1-based row index.
    """
    if segment_len is not None and segment_len < 4:
        raise ParameterError(f"segment_len must be at least 4, got {segment_len}")
    if stride is not None and stride < 1:
        raise ParameterError(f"stride must be positive, got {stride}")
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")

    out: list[TimeSeries] = []
    with open(path, newline="") as fh:
        for row_idx, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row if c.strip() != ""]
            if not cells:
                continue
            try:
                values = np.array([float(c) for c in cells], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"row {row_idx}: non-numeric cell ({exc})") from None
            if not np.all(np.isfinite(values)):
                raise DataError(f"row {row_idx}: non-finite value")
            if segment_len is None:
                if values.size < 4:
                    raise DataError(f"row {row_idx}: fewer than 4 samples")
                out.append(TimeSeries(values, dt=dt, origin=f"{path}:{row_idx}"))
            else:
                if values.size < segment_len:
                    raise DataError(
                        f"row {row_idx}: {values.size} samples, shorter than segment_len={segment_len}"
                    )
                step = stride if stride is not None else segment_len
                for off in range(0, values.size - segment_len + 1, step):
                    out.append(
                        TimeSeries(
                            values[off : off + segment_len],
                            dt=dt,
                            origin=f"{path}:{row_idx}+{off}",
                        )
                    )
    return out


_GENERATORS = ("harmonic", "ou")


def _generate_one(generator: str, rng: np.random.Generator, series_len: int, overrides: dict) -> TimeSeries:
    if generator == "harmonic":
        params = sample_harmonic_params(rng, length=series_len)
        if overrides:
            params = replace(params, **overrides)
        return gen_harmonic(params)
    params = sample_ou_params(rng, n=series_len)
    if overrides:
        params = replace(params, **overrides)
    return gen_ou(params, rng)


def make_splits(
    generator: str,
    counts: tuple[int, int, int],
    seed: int,
    series_len: int = 200,
    param_overrides: dict | None = None,
) -> DatasetSplit:
    """Generate disjoint train/validation/test sets of synthetic series.

    Example i of split s draws from the substream (seed, s, i), so the
    three splits can never share an example and regeneration with the
    same seed is bit-identical.  `param_overrides` pins selected
    generator parameters to fixed values instead of sampling them.
    """
    if generator not in _GENERATORS:
        raise ParameterError(f"unknown generator {generator!r}; expected one of {_GENERATORS}")
    if len(counts) != 3 or any(c <= 0 for c in counts):
        raise ParameterError(f"counts must be three positive integers, got {counts}")
    overrides = dict(param_overrides or {})

    def build(split_name: str, count: int) -> tuple[TimeSeries, ...]:
        return tuple(
            _generate_one(generator, substream(seed, split_name, i), series_len, overrides)
            for i in range(count)
        )

    return DatasetSplit(
        train=build("train", counts[0]),
        validation=build("validation", counts[1]),
        test=build("test", counts[2]),
        seed=seed,
    )
