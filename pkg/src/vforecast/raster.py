"""Series-to-image rasterization, decoding, and window pairing.

A series is drawn as a polyline into a fixed-size grayscale grid, curve
bright on dark, and every column is normalized into a discrete
probability distribution over row positions.  Row 0 is the top of the
image and holds the largest values.  Decoding inverts the argmax row of
each column through the value bounds stored on the image.

The drawing scheme: the series is resampled to one sample per column,
each sample deposits unit intensity split linearly between the two rows
bracketing its continuous row coordinate (vertical anti-aliasing), and
steep segments additionally mark the rows the connecting line passes
through at a fixed sub-peak intensity so the curve stays visually
connected.  The sub-peak fill (0.4) never exceeds the anti-aliased peak
(at least 0.5), which keeps the per-column argmax on the sample itself.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError
from .seriesgen import TimeSeries

COLUMN_SUM_TOL = 1e-6
_FILL_INTENSITY = 0.4

VFIM_MAGIC = b"VFIM"
VFIM_VERSION = 1


@dataclass(frozen=True)
class RenderSpec:
    """Pixel grid and margin settings for rasterization."""

    width: int = 64
    height: int = 64
    epsilon: float = 1e-6
    antialias: bool = True

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ParameterError(f"image must be at least 2x2, got {self.height}x{self.width}")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class WindowSpec:
    """Overlapped forecasting window geometry.

    input_len (L) samples feed the forecaster; the target window starts
    k = (1 - c) * L samples later and also spans L samples, so a
    fraction c of the target reconstructs the tail of the input and the
    remaining 1 - c is genuine future.
    """

    c: float = 0.75
    input_len: int = 160

    def __post_init__(self):
        if not (0.0 <= self.c < 1.0):
            raise ParameterError(f"overlap fraction must be in [0, 1), got {self.c}")
        if self.input_len < 4:
            raise ParameterError(f"input_len must be at least 4, got {self.input_len}")
        k = (1.0 - self.c) * self.input_len
        if abs(k - round(k)) > 1e-9 or round(k) < 1:
            raise ParameterError(
                f"(1 - c) * input_len must be a positive integer, got {k} for c={self.c}, L={self.input_len}"
            )

    @property
    def shift(self) -> int:
        """k, the number of genuinely new samples in the target window."""
        return round((1.0 - self.c) * self.input_len)

    @property
    def total_len(self) -> int:
        """Series length consumed by one window pair."""
        return self.input_len + self.shift


@dataclass(frozen=True)
class SeriesImage:
    """A column-stochastic image plus the axis bounds used to draw it.

    pixels is a height x width matrix; every column is a probability
    distribution over rows (entries in [0, 1] summing to 1).  value_lo
    and value_hi are the y-axis bounds, t_lo and t_hi the x-axis bounds,
    kept so decoding can map rows back to values.
    """

    pixels: np.ndarray
    value_lo: float
    value_hi: float
    t_lo: float
    t_hi: float

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise ParameterError(f"pixels must be 2-d, got shape {pixels.shape}")
        pixels = pixels.copy()
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)
        if not self.value_lo < self.value_hi:
            raise ParameterError(f"need value_lo < value_hi, got [{self.value_lo}, {self.value_hi}]")
        self.validate()

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def validate(self) -> None:
        """Check the column-stochastic invariant; raise DataError if broken."""
        p = self.pixels
        if p.min() < 0.0 or p.max() > 1.0 + 1e-12:
            raise DataError("pixel values outside [0, 1]")
        sums = p.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > COLUMN_SUM_TOL):
            worst = float(np.abs(sums - 1.0).max())
            raise DataError(f"column sums deviate from 1 by up to {worst:.3g}")


def _continuous_rows(values: np.ndarray, lo: float, hi: float, height: int) -> np.ndarray:
    # Row r covers the value slab [hi-(r+1)*bin, hi-r*bin]; its center
    # maps to coordinate r, so larger values land on smaller rows.
    return (hi - values) / (hi - lo) * height - 0.5


def render(series: TimeSeries, spec: RenderSpec = RenderSpec()) -> SeriesImage:
    """Rasterize a series into a column-stochastic image.

    The y-axis spans [min - epsilon, max + epsilon] of this series (a
    constant series is legal, the margin keeps the range non-empty), the
    x-axis spans the sample index range with the same margin.  Series
    longer or shorter than the image width are linearly resampled to one
    sample per column before drawing.
    """
    values = series.values
    if values.size < 2:
        raise ParameterError("render needs at least 2 samples")
    h, w = spec.height, spec.width
    lo = float(values.min()) - spec.epsilon
    hi = float(values.max()) + spec.epsilon

    if values.size == w:
        cols = values.astype(np.float64)
    else:
        xs = np.linspace(0.0, values.size - 1.0, w)
        cols = np.interp(xs, np.arange(values.size), values)

    rho = _continuous_rows(cols, lo, hi, h)
    img = np.zeros((h, w), dtype=np.float64)

    if spec.antialias:
        base = np.floor(rho).astype(np.int64)
        frac = rho - base
        col_idx = np.arange(w)
        for rows, weights in ((base, 1.0 - frac), (base + 1, frac)):
            ok = (rows >= 0) & (rows < h)
            img[rows[ok], col_idx[ok]] = np.maximum(img[rows[ok], col_idx[ok]], weights[ok])
        # Connect steep segments: rows crossed between a sample and the
        # midpoint toward each neighbor get sub-peak intensity.
        for i in range(w):
            for j in (i - 1, i + 1):
                if not 0 <= j < w:
                    continue
                a, b = rho[i], 0.5 * (rho[i] + rho[j])
                r_lo, r_hi = int(np.ceil(min(a, b))), int(np.floor(max(a, b)))
                for r in range(max(r_lo, 0), min(r_hi, h - 1) + 1):
                    if min(a, b) < r < max(a, b):
                        img[r, i] = max(img[r, i], _FILL_INTENSITY)
    else:
        rows = np.clip(np.rint(rho).astype(np.int64), 0, h - 1)
        img[rows, np.arange(w)] = 1.0

    sums = img.sum(axis=0)
    blank = sums <= 0.0
    sums[blank] = 1.0
    img /= sums
    img[:, blank] = 1.0 / h

    return SeriesImage(
        pixels=img,
        value_lo=lo,
        value_hi=hi,
        t_lo=-spec.epsilon * series.dt,
        t_hi=(values.size - 1 + spec.epsilon) * series.dt,
    )


def normalize_columns(
    raw: np.ndarray,
    value_lo: float = 0.0,
    value_hi: float = 1.0,
    t_lo: float = 0.0,
    t_hi: float | None = None,
) -> SeriesImage:
    """Turn an 8-bit plot (dark curve on white, 0..255) into a SeriesImage.

    Intensities are scaled to [0, 1] and negated (1 - v/255) so the
    curve becomes bright, then each column is divided by its sum.  An
    all-background column maps to the uniform distribution, keeping
    every column a valid probability vector.  Axis bounds are not
    recoverable from raw pixels, so callers may supply them; defaults
    are the unit value range and the pixel index range.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ParameterError(f"raw image must be 2-d, got shape {raw.shape}")
    if raw.min() < 0 or raw.max() > 255:
        raise ParameterError("raw intensities must lie in [0, 255]")
    bright = 1.0 - raw / 255.0
    sums = bright.sum(axis=0)
    blank = sums <= 0.0
    sums = np.where(blank, 1.0, sums)
    pixels = bright / sums
    pixels[:, blank] = 1.0 / raw.shape[0]
    return SeriesImage(
        pixels=pixels,
        value_lo=value_lo,
        value_hi=value_hi,
        t_lo=t_lo,
        t_hi=float(raw.shape[1]) if t_hi is None else t_hi,
    )


def decode(image: SeriesImage) -> TimeSeries:
    """Read the series back: per column, the center value of the argmax row.

    Ties take the smaller row index (the larger value).  The result has
    one sample per column and is accurate to one vertical bin for any
    image produced by :func:`render`.
    """
    rows = np.argmax(image.pixels, axis=0)
    bin_height = (image.value_hi - image.value_lo) / image.height
    values = image.value_hi - (rows + 0.5) * bin_height
    dt = (image.t_hi - image.t_lo) / max(image.width - 1, 1)
    return TimeSeries(values, dt=dt, origin="decoded")


def window_pair(series: TimeSeries, wspec: WindowSpec = WindowSpec()) -> tuple[TimeSeries, TimeSeries]:
    """Split a series into aligned (input, target) forecasting windows.

    The series must hold exactly input_len + shift samples.  The input
    is the first L samples, the target the L samples starting at the
    shift k, so the two overlap in c * L samples.
    """
    n = len(series)
    needed = wspec.total_len
    if n < needed:
        raise DataError(f"series too short: {n} samples, window pair needs {needed}")
    if n > needed:
        raise DataError(f"series length {n} does not match window length {needed}")
    k, L = wspec.shift, wspec.input_len
    inp = TimeSeries(series.values[:L], dt=series.dt, origin=series.origin)
    tgt = TimeSeries(series.values[k : k + L], dt=series.dt, origin=series.origin)
    return inp, tgt


def _display_bytes(image: SeriesImage) -> np.ndarray:
    # Per-column display normalization: the brightest pixel of each
    # column maps to 255 regardless of how diffuse the distribution is.
    p = image.pixels
    col_max = p.max(axis=0)
    col_max = np.where(col_max <= 0.0, 1.0, col_max)
    return np.rint(255.0 * p / col_max).astype(np.uint8)


def write_pgm(path: str | os.PathLike, image: SeriesImage) -> None:
    """Write the image as binary 8-bit PGM (P5), row 0 at the top."""
    data = _display_bytes(image)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def write_png(path: str | os.PathLike, image: SeriesImage) -> None:
    """Write the image as 8-bit grayscale PNG with the PGM quantization."""
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.image as mpimg

    mpimg.imsave(path, _display_bytes(image), cmap="gray", vmin=0, vmax=255, format="png")


def write_vfim(path: str | os.PathLike, image: SeriesImage) -> None:
    """Write the exact distributions: 16-byte header then float32 LE pixels.

    Header: magic "VFIM", u32 version, u32 height, u32 width, all
    little-endian; pixel data row-major.
    """
    header = VFIM_MAGIC + struct.pack("<III", VFIM_VERSION, image.height, image.width)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(image.pixels.astype("<f4").tobytes())


def read_vfim(
    path: str | os.PathLike,
    value_lo: float = 0.0,
    value_hi: float = 1.0,
    t_lo: float = 0.0,
    t_hi: float | None = None,
) -> SeriesImage:
    """Read a VFIM file back into a SeriesImage.

    Columns are renormalized to absorb float32 quantization.  Axis
    bounds are not stored in the file; callers supply them when the
    decoded value scale matters.
    """
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != VFIM_MAGIC:
            raise DataError(f"not a VFIM file: {path}")
        version, height, width = struct.unpack("<III", header[4:])
        if version != VFIM_VERSION:
            raise DataError(f"unsupported VFIM version {version}")
        payload = fh.read(4 * height * width)
        if len(payload) != 4 * height * width:
            raise DataError(f"truncated VFIM payload in {path}")
    pixels = np.frombuffer(payload, dtype="<f4").reshape(height, width).astype(np.float64)
    sums = pixels.sum(axis=0)
    sums = np.where(sums <= 0.0, 1.0, sums)
    pixels = pixels / sums
    return SeriesImage(
        pixels=pixels,
        value_lo=value_lo,
        value_hi=value_hi,
        t_lo=t_lo,
        t_hi=float(width) if t_hi is None else t_hi,
    )
