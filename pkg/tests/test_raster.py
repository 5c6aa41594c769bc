import numpy as np
import pytest

from vforecast.errors import DataError, ParameterError
from vforecast.raster import (
    RenderSpec,
    SeriesImage,
    WindowSpec,
    decode,
    normalize_columns,
    read_vfim,
    render,
    window_pair,
    write_pgm,
    write_vfim,
)
from vforecast.rng import substream
from vforecast.seriesgen import TimeSeries


def random_series(rng, n):
    return TimeSeries(rng.normal(0.0, 1.0, size=n))


class TestSeriesImageInvariants:
    def test_rejects_bad_column_sums(self):
        pixels = np.full((4, 4), 0.3)
        with pytest.raises(DataError):
            SeriesImage(pixels, 0.0, 1.0, 0.0, 4.0)

    def test_rejects_negative_pixels(self):
        pixels = np.zeros((4, 4))
        pixels[0, :] = 1.2
        pixels[1, :] = -0.2
        with pytest.raises(DataError):
            SeriesImage(pixels, 0.0, 1.0, 0.0, 4.0)

    def test_rejects_inverted_bounds(self):
        pixels = np.full((4, 4), 0.25)
        with pytest.raises(ParameterError):
            SeriesImage(pixels, 1.0, 0.0, 0.0, 4.0)


class TestRender:
    def test_constant_series_centers_mass(self):
        img = render(TimeSeries(np.full(64, 3.0)), RenderSpec(width=64, height=64))
        np.testing.assert_allclose(img.pixels.sum(axis=0), 1.0, atol=1e-9)
        rows = np.argmax(img.pixels, axis=0)
        assert np.all((rows == 31) | (rows == 32))

    def test_linear_ramp_argmax_is_monotone(self):
        # brute-force check: larger values sit on smaller row indices
        n = 64
        img = render(TimeSeries(np.linspace(-1.0, 1.0, n)), RenderSpec(width=n, height=64))
        rows = np.argmax(img.pixels, axis=0)
        assert rows[0] == 63 or rows[0] == 62
        assert rows[-1] in (0, 1)
        assert np.all(np.diff(rows) <= 0)

    def test_column_stochastic_for_random_series(self):
        rng = substream(41, "render")
        for _ in range(100):
            n = int(rng.integers(8, 300))
            img = render(random_series(rng, n))
            assert img.pixels.min() >= 0.0
            np.testing.assert_allclose(img.pixels.sum(axis=0), 1.0, atol=1e-9)

    def test_antialiasing_gives_multiple_bright_pixels(self):
        rng = substream(42, "steep")
        img = render(random_series(rng, 64))
        nonzero_per_column = (img.pixels > 0).sum(axis=0)
        assert nonzero_per_column.max() > 1

    def test_antialias_off_gives_single_pixel_columns(self):
        rng = substream(43, "hard")
        img = render(random_series(rng, 64), RenderSpec(antialias=False))
        np.testing.assert_array_equal((img.pixels > 0).sum(axis=0), np.ones(64))

    def test_affine_value_invariance(self):
        # bounds absorb a positive affine transform; the fixed epsilon
        # margin leaves only a vanishing residual
        rng = substream(44, "affine")
        series = random_series(rng, 64)
        img = render(series)
        img2 = render(TimeSeries(3.7 * series.values - 2.0))
        np.testing.assert_allclose(img2.pixels, img.pixels, atol=1e-4)
        np.testing.assert_array_equal(np.argmax(img2.pixels, axis=0), np.argmax(img.pixels, axis=0))

    def test_orientation_larger_values_on_smaller_rows(self):
        series = TimeSeries(np.array([0.0, 1.0, 2.0, 3.0]))
        img = render(series, RenderSpec(width=4, height=8))
        rows = np.argmax(img.pixels, axis=0)
        assert rows[-1] < rows[0]


class TestDecode:
    def test_round_trip_within_one_bin(self):
        rng = substream(45, "roundtrip")
        spec = RenderSpec(width=64, height=64)
        for _ in range(200):
            n = int(rng.integers(8, 200))
            series = random_series(rng, n)
            img = render(series, spec)
            decoded = decode(img)
            resampled = np.interp(np.linspace(0, n - 1, spec.width), np.arange(n), series.values)
            bin_height = (img.value_hi - img.value_lo) / spec.height
            assert np.max(np.abs(decoded.values - resampled)) <= bin_height

    def test_argmax_row_zero_decodes_to_top_of_range(self):
        pixels = np.zeros((64, 64))
        pixels[0, :] = 1.0
        img = SeriesImage(pixels, 0.0, 63.0, 0.0, 64.0)
        decoded = decode(img)
        assert np.all(decoded.values == pytest.approx(63.0 - 0.5 * 63.0 / 64.0))

    def test_constant_round_trip(self):
        series = TimeSeries(np.full(64, -1.25))
        img = render(series)
        decoded = decode(img)
        bin_height = (img.value_hi - img.value_lo) / img.height
        assert np.max(np.abs(decoded.values - (-1.25))) <= bin_height

    def test_tie_takes_smaller_row(self):
        pixels = np.zeros((4, 4))
        pixels[1, :] = 0.5
        pixels[2, :] = 0.5
        img = SeriesImage(pixels, 0.0, 4.0, 0.0, 4.0)
        decoded = decode(img)
        np.testing.assert_allclose(decoded.values, 4.0 - 1.5)  # row 1 center


class TestNormalizeColumns:
    def test_eight_bit_pipeline_hand_case(self):
        raw = np.array([[255.0], [127.5], [0.0], [255.0]])
        img = normalize_columns(raw)
        np.testing.assert_allclose(img.pixels[:, 0], [0.0, 1.0 / 3.0, 2.0 / 3.0, 0.0], atol=1e-12)

    def test_single_on_pixel(self):
        raw = np.array([[255.0], [255.0], [0.0], [255.0]])
        img = normalize_columns(raw)
        np.testing.assert_allclose(img.pixels[:, 0], [0.0, 0.0, 1.0, 0.0], atol=1e-12)

    def test_blank_column_becomes_uniform(self):
        raw = np.full((4, 2), 255.0)
        img = normalize_columns(raw)
        np.testing.assert_allclose(img.pixels, 0.25, atol=1e-12)

    def test_quantization_round_trip(self):
        # Quantize a stochastic image to 8 bits and run it back through
        # the pipeline.  The dequantized intensities are within half a
        # level (1/510) of the originals; renormalization then only
        # rescales each column by its sum, which stays within the
        # accumulated quantization budget.
        rng = substream(46, "quant")
        pixels = rng.random((16, 8))
        pixels /= pixels.sum(axis=0)
        raw = np.rint(255.0 * (1.0 - pixels))
        img = normalize_columns(raw)
        dequantized = 1.0 - raw / 255.0
        assert np.max(np.abs(dequantized - pixels)) <= 1.0 / 510.0 + 1e-12
        sums = dequantized.sum(axis=0)
        assert np.max(np.abs(sums - 1.0)) <= 16.0 / 510.0 + 1e-12
        np.testing.assert_allclose(img.pixels, dequantized / sums, atol=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ParameterError):
            normalize_columns(np.full((2, 2), 300.0))


class TestWindowPair:
    def test_shift_arithmetic(self):
        # 100 samples, c = 0.75, L = 80 -> k = 20
        wspec = WindowSpec(c=0.75, input_len=80)
        assert wspec.shift == 20
        series = TimeSeries(np.arange(100.0))
        inp, tgt = window_pair(series, wspec)
        np.testing.assert_array_equal(inp.values, np.arange(80.0))
        np.testing.assert_array_equal(tgt.values, np.arange(20.0, 100.0))

    def test_zero_overlap_gives_disjoint_windows(self):
        wspec = WindowSpec(c=0.0, input_len=8)
        series = TimeSeries(np.arange(16.0))
        inp, tgt = window_pair(series, wspec)
        assert set(inp.values).isdisjoint(set(tgt.values))

    def test_full_overlap_excluded_by_invariant(self):
        with pytest.raises(ParameterError):
            WindowSpec(c=1.0, input_len=8)

    def test_non_integral_shift_rejected(self):
        with pytest.raises(ParameterError):
            WindowSpec(c=0.7, input_len=8)

    def test_too_short_series_rejected(self):
        wspec = WindowSpec(c=0.75, input_len=80)
        with pytest.raises(DataError, match="too short"):
            window_pair(TimeSeries(np.arange(50.0)), wspec)

    def test_wrong_length_rejected(self):
        wspec = WindowSpec(c=0.75, input_len=80)
        with pytest.raises(DataError):
            window_pair(TimeSeries(np.arange(150.0)), wspec)


class TestImageFiles:
    def test_pgm_header_and_payload(self, tmp_path):
        rng = substream(47, "pgm")
        img = render(random_series(rng, 64))
        path = tmp_path / "img.pgm"
        write_pgm(path, img)
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n64 64\n255\n")
        assert len(blob) == len(b"P5\n64 64\n255\n") + 64 * 64
        # brightest pixel of every column must display at full scale
        data = np.frombuffer(blob[len(b"P5\n64 64\n255\n") :], dtype=np.uint8).reshape(64, 64)
        assert np.all(data.max(axis=0) == 255)

    def test_vfim_round_trip(self, tmp_path):
        rng = substream(48, "vfim")
        img = render(random_series(rng, 100))
        path = tmp_path / "img.vfim"
        write_vfim(path, img)
        assert path.read_bytes()[:4] == b"VFIM"
        assert len(path.read_bytes()) == 16 + 4 * 64 * 64
        back = read_vfim(path, value_lo=img.value_lo, value_hi=img.value_hi)
        np.testing.assert_allclose(back.pixels, img.pixels, atol=1e-6)
        np.testing.assert_allclose(back.pixels.sum(axis=0), 1.0, atol=1e-9)

    def test_vfim_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.vfim"
        path.write_bytes(b"NOPE" + b"\0" * 20)
        with pytest.raises(DataError):
            read_vfim(path)
