import math

import numpy as np
import pytest

from vforecast.errors import DataError, ParameterError
from vforecast.rng import substream
from vforecast.seriesgen import (
    HarmonicParams,
    OUParams,
    TimeSeries,
    gen_harmonic,
    gen_ou,
    load_series_csv,
    make_splits,
    sample_harmonic_params,
    sample_ou_params,
    standardize,
)


class TestTimeSeries:
    def test_rejects_short_series(self):
        with pytest.raises(ParameterError):
            TimeSeries(np.array([1.0, 2.0, 3.0]))

    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            TimeSeries(np.array([1.0, np.nan, 3.0, 4.0]))

    def test_values_are_read_only(self):
        series = TimeSeries(np.arange(5.0))
        with pytest.raises(ValueError):
            series.values[0] = 99.0


class TestGenHarmonic:
    def test_zero_amplitudes_give_zero_series(self):
        params = HarmonicParams(a1=0, a2=0, b1=0, b2=0, t1=3, t2=7, phi1=0.4, phi2=1.1, length=10)
        series = gen_harmonic(params)
        assert len(series) == 10
        np.testing.assert_array_equal(series.values, np.zeros(10))

    def test_hand_evaluated_cosine_case(self):
        # sin(pi/2 * t + pi/2) = cos(pi/2 * t) for t = 1..4 gives 0, -1, 0, 1
        params = HarmonicParams(a1=1, a2=0, b1=0, b2=0, t1=4, t2=10, phi1=np.pi / 2, phi2=0, length=4)
        series = gen_harmonic(params)
        np.testing.assert_allclose(series.values, [0.0, -1.0, 0.0, 1.0], atol=1e-12)

    def test_pure_function_of_params(self):
        params = HarmonicParams(a1=1.3, a2=0.7, b1=0.01, b2=-0.02, t1=11, t2=90, phi1=1.0, phi2=2.0, length=100)
        np.testing.assert_array_equal(gen_harmonic(params).values, gen_harmonic(params).values)

    def test_formula_matches_scalar_oracle(self):
        params = HarmonicParams(a1=0.9, a2=1.4, b1=0.004, b2=-0.003, t1=40, t2=180, phi1=0.3, phi2=5.1, length=50)
        series = gen_harmonic(params)
        for i in (0, 17, 49):
            t = i + 1
            expected = (params.a1 + params.b1 * t) * math.sin(2 * math.pi * t / params.t1 + params.phi1) + (
                params.a2 + params.b2 * t
            ) * math.sin(2 * math.pi * t / params.t2 + params.phi2)
            assert series.values[i] == pytest.approx(expected, abs=1e-12)

    def test_invalid_period_rejected(self):
        with pytest.raises(ParameterError):
            HarmonicParams(a1=1, a2=1, b1=0, b2=0, t1=-3, t2=10, phi1=0, phi2=0, length=10)


class TestSampleHarmonicParams:
    def test_deterministic_per_substream(self):
        a = sample_harmonic_params(substream(11, "x"), length=200)
        b = sample_harmonic_params(substream(11, "x"), length=200)
        assert a == b

    def test_amplitude_mean_matches_distribution(self):
        # law of large numbers: mean of a1 over 10k draws within 3 standard errors of 1
        rng = substream(3, "lln")
        draws = np.array([sample_harmonic_params(rng, 200).a1 for _ in range(10_000)])
        assert abs(draws.mean() - 1.0) < 3.0 * 0.5 / math.sqrt(10_000)

    def test_periods_always_positive(self):
        rng = substream(4, "pos")
        for _ in range(2_000):
            p = sample_harmonic_params(rng, 200)
            assert p.t1 > 0 and p.t2 > 0

    def test_trend_slopes_within_uniform_bounds(self):
        rng = substream(5, "trend")
        for _ in range(500):
            p = sample_harmonic_params(rng, 200)
            assert -1 / 200 <= p.b1 <= 1 / 200
            assert -1 / 200 <= p.b2 <= 1 / 200


class TestGenOU:
    def test_noiseless_decay_matches_closed_form(self):
        # with sigma = 0 the transition is pure decay: s_n = s0 * exp(-n * gamma * dt)
        step = 6.0e10
        params = OUParams(mu=0.0, gamma=math.log(2) / step, sigma=0.0, s0=1.0, step_ns=step, n=4)
        series = gen_ou(params, substream(0, "unused"))
        np.testing.assert_allclose(series.values, [0.5, 0.25, 0.125, 0.0625], rtol=1e-12)

    def test_sigma_zero_at_mean_is_constant(self):
        params = OUParams(mu=2.5, gamma=1e-8, sigma=0.0, n=20)
        series = gen_ou(params, substream(0, "unused"))
        np.testing.assert_array_equal(series.values, np.full(20, 2.5))

    def test_deterministic_per_substream(self):
        params = OUParams(n=50)
        a = gen_ou(params, substream(9, "ou", 1))
        b = gen_ou(params, substream(9, "ou", 1))
        np.testing.assert_array_equal(a.values, b.values)

    def test_values_finite_for_paper_defaults(self):
        rng = substream(10, "finite")
        for i in range(50):
            params = sample_ou_params(rng, n=200)
            series = gen_ou(params, substream(10, "path", i))
            assert np.all(np.isfinite(series.values))

    def test_stationary_variance(self):
        # Sample variance of the settled tail, averaged over seeds, must
        # sit near the fixed point sigma^2 / (2 gamma) of the one-step
        # variance recursion.
        step = 6.0e10
        gamma = 0.1 / step  # moderate per-step correlation
        sigma = 1e-2
        params = OUParams(mu=0.0, gamma=gamma, sigma=sigma, step_ns=step, n=10_000)
        target = sigma**2 / (2 * gamma)
        variances = []
        for seed in range(200):
            path = gen_ou(params, substream(77, "stationary", seed)).values
            variances.append(np.var(path[7_500:]))
        assert abs(np.mean(variances) - target) / target < 0.15

    def test_mean_reversion_to_mu(self):
        step = 6.0e10
        params = OUParams(mu=5.0, gamma=0.1 / step, sigma=1e-2, step_ns=step, n=1_000)
        finals = np.array([gen_ou(params, substream(78, "revert", s)).values[-1] for s in range(1_000)])
        se = finals.std() / math.sqrt(len(finals))
        assert abs(finals.mean() - 5.0) < 4.0 * se


class TestSampleOUParams:
    def test_deterministic(self):
        assert sample_ou_params(substream(1, "p")) == sample_ou_params(substream(1, "p"))

    def test_gamma_mean_matches_distribution(self):
        # Redrawing non-positive values keeps the distribution conditioned
        # on positivity, so the oracle is the zero-truncated normal mean
        # mu + sigma * phi(-mu/sigma) / Phi(mu/sigma), not the raw mean:
        # at 10k draws the truncation shift (~0.055 sigma) is resolvable.
        rng = substream(2, "gamma")
        gammas = np.array([sample_ou_params(rng).gamma for _ in range(10_000)])
        mu, sigma = 8e-8, 4e-8
        alpha = -mu / sigma
        phi = math.exp(-0.5 * alpha**2) / math.sqrt(2 * math.pi)
        big_phi = 0.5 * (1 + math.erf(-alpha / math.sqrt(2)))
        truncated_mean = mu + sigma * phi / big_phi
        se = gammas.std() / math.sqrt(len(gammas))
        assert abs(gammas.mean() - truncated_mean) < 3.0 * se

    def test_rates_always_positive(self):
        rng = substream(3, "pos")
        for _ in range(2_000):
            p = sample_ou_params(rng)
            assert p.gamma > 0 and p.sigma > 0


class TestStandardize:
    def test_zero_variance_rejected(self):
        with pytest.raises(DataError):
            standardize(TimeSeries(np.ones(5)))

    def test_two_point_case(self):
        # mean 1, population std 1 -> [-1, 1]; padded to meet the length floor
        series = TimeSeries(np.array([0.0, 2.0, 0.0, 2.0]))
        np.testing.assert_allclose(standardize(series).values, [-1.0, 1.0, -1.0, 1.0], atol=1e-12)

    def test_output_moments(self):
        series = TimeSeries(substream(6, "std").normal(3.0, 2.5, size=400))
        out = standardize(series)
        assert out.values.mean() == pytest.approx(0.0, abs=1e-12)
        assert out.values.std() == pytest.approx(1.0, abs=1e-12)

    def test_idempotent(self):
        series = TimeSeries(substream(7, "idem").normal(0, 1, size=100))
        once = standardize(series)
        twice = standardize(once)
        np.testing.assert_allclose(twice.values, once.values, atol=1e-12)


class TestLoadSeriesCsv:
    def test_single_row(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("1,2,3,4\n")
        series = load_series_csv(path, segment_len=4)
        assert len(series) == 1
        np.testing.assert_array_equal(series[0].values, [1, 2, 3, 4])

    def test_sliding_segments(self, tmp_path):
        path = tmp_path / "long.csv"
        path.write_text("1,2,3,4,5,6\n")
        series = load_series_csv(path, segment_len=4, stride=2)
        assert len(series) == 2
        np.testing.assert_array_equal(series[0].values, [1, 2, 3, 4])
        np.testing.assert_array_equal(series[1].values, [3, 4, 5, 6])

    def test_non_numeric_cell_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,x,3\n")
        with pytest.raises(DataError, match="row 1"):
            load_series_csv(path)

    def test_short_row_names_row(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("1,2,3,4,5\n1,2\n")
        with pytest.raises(DataError, match="row 2"):
            load_series_csv(path, segment_len=5)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_series_csv(tmp_path / "nope.csv")

    def test_whole_rows_without_segment_len(self, tmp_path):
        path = tmp_path / "rows.csv"
        path.write_text("1,2,3,4\n5,6,7,8,9\n")
        series = load_series_csv(path)
        assert [len(s) for s in series] == [4, 5]


class TestMakeSplits:
    def test_exact_counts(self):
        split = make_splits("harmonic", (100, 10, 20), seed=7, series_len=20)
        assert (len(split.train), len(split.validation), len(split.test)) == (100, 10, 20)

    def test_bit_identical_for_same_seed(self):
        a = make_splits("ou", (5, 4, 4), seed=13, series_len=30)
        b = make_splits("ou", (5, 4, 4), seed=13, series_len=30)
        for sa, sb in zip(a.train + a.validation + a.test, b.train + b.validation + b.test):
            np.testing.assert_array_equal(sa.values, sb.values)

    def test_different_seed_differs(self):
        a = make_splits("harmonic", (4, 4, 4), seed=1, series_len=20)
        b = make_splits("harmonic", (4, 4, 4), seed=2, series_len=20)
        assert not np.array_equal(a.train[0].values, b.train[0].values)

    def test_splits_disjoint_across_substreams(self):
        split = make_splits("ou", (6, 6, 6), seed=3, series_len=20)
        train0 = split.train[0].values
        for other in split.validation + split.test:
            assert not np.array_equal(train0, other.values)

    def test_param_overrides_pin_values(self):
        split = make_splits("harmonic", (4, 4, 4), seed=5, series_len=20, param_overrides={"b1": 0.0, "b2": 0.0})
        assert len(split.train) == 4

    def test_unknown_generator_rejected(self):
        with pytest.raises(ParameterError):
            make_splits("brownian", (4, 4, 4), seed=0)
