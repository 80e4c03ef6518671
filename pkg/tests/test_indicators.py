import numpy as np
import pytest

from alphaforge import indicators as ind

nan = np.nan


class TestRolling:
    def test_sma_window_two(self):
        np.testing.assert_allclose(ind.sma([1.0, 2.0, 3.0], 2), [nan, 1.5, 2.5])

    def test_sma_full_window(self):
        np.testing.assert_allclose(ind.sma([2.0, 4.0, 6.0, 8.0], 4), [nan, nan, nan, 5.0])

    def test_sma_of_constant(self):
        out = ind.sma(np.full(30, 7.25), 10)
        np.testing.assert_allclose(out[9:], 7.25)
        assert np.isnan(out[:9]).all()

    def test_window_longer_than_history(self):
        assert np.isnan(ind.sma([1.0, 2.0], 5)).all()

    def test_nan_inside_window_propagates(self):
        out = ind.sma([1.0, nan, 3.0, 4.0, 5.0], 2)
        np.testing.assert_allclose(out, [nan, nan, nan, 3.5, 4.5])

    def test_population_std(self):
        np.testing.assert_allclose(ind.rolling_std([1.0, 3.0], 2), [nan, 1.0])

    def test_std_needs_two_points(self):
        with pytest.raises(ValueError):
            ind.rolling_std([1.0, 2.0], 1)

    def test_matrix_columns_are_independent(self):
        x = np.column_stack([np.arange(10.0), np.arange(10.0) ** 2])
        out = ind.sma(x, 3)
        np.testing.assert_allclose(out[:, 0], ind.sma(x[:, 0], 3))
        np.testing.assert_allclose(out[:, 1], ind.sma(x[:, 1], 3))

    def test_no_look_ahead(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=60)
        base = ind.sma(x, 5)
        bumped = x.copy()
        bumped[40] += 100.0
        np.testing.assert_array_equal(ind.sma(bumped, 5)[:40], base[:40])

    @pytest.mark.parametrize("window", [2, 5, 20, 200])
    def test_agrees_with_loop_recomputation(self, window):
        x = 100.0 + np.cumsum(np.random.default_rng(window).normal(size=1000))
        mean = np.full(1000, nan)
        std = np.full(1000, nan)
        for t in range(window - 1, 1000):
            chunk = x[t - window + 1:t + 1]
            mean[t] = sum(chunk) / window
            std[t] = (sum((v - mean[t]) ** 2 for v in chunk) / window) ** 0.5
        np.testing.assert_allclose(ind.sma(x, window), mean, rtol=0, atol=1e-10)
        np.testing.assert_allclose(ind.rolling_std(x, window), std, rtol=0, atol=1e-10)


class TestEma:
    def test_seeded_with_first_value(self):
        out = ind.ema([10.0, 20.0], 3)
        np.testing.assert_allclose(out, [10.0, 15.0])

    def test_nan_keeps_state(self):
        out = ind.ema([10.0, nan, 20.0], 3)
        np.testing.assert_allclose(out, [10.0, nan, 15.0])


class TestMacd:
    def test_constant_close_is_zero(self):
        out = ind.macd_diff(np.full(80, 42.0))
        assert np.isnan(out[:34]).all()
        np.testing.assert_allclose(out[34:], 0.0, atol=1e-12)

    def test_short_history_undefined(self):
        assert np.isnan(ind.macd_diff(np.linspace(1, 2, 30))).all()

    def test_linear_ramp_histogram_decays(self):
        close = 100.0 + np.arange(500.0)
        line = ind.ema(close, 12) - ind.ema(close, 26)
        hist = ind.macd_diff(close)
        assert line[-1] > 0
        assert abs(hist[-1]) < 1e-6

    def test_final_jump_gives_positive_histogram(self):
        close = np.full(60, 10.0)
        close[-1] = 15.0
        assert ind.macd_diff(close)[-1] > 0


class TestRsi:
    def test_increasing_is_100(self):
        out = ind.rsi(np.arange(1.0, 40.0), 14)
        assert np.isnan(out[:14]).all()
        np.testing.assert_allclose(out[14:], 100.0)

    def test_decreasing_is_0(self):
        out = ind.rsi(np.arange(40.0, 1.0, -1.0), 14)
        np.testing.assert_allclose(out[14:], 0.0)

    def test_constant_is_50(self):
        out = ind.rsi(np.full(30, 3.0), 14)
        np.testing.assert_allclose(out[14:], 50.0)

    def test_bounded(self):
        rng = np.random.default_rng(3)
        close = 100 * np.exp(np.cumsum(0.02 * rng.normal(size=400)))
        out = ind.rsi(close, 14)
        defined = out[np.isfinite(out)]
        assert ((defined >= 0) & (defined <= 100)).all()

    def test_wilder_seed_and_smoothing(self):
        # changes +1, -1 alternating over window 2, then +2
        close = np.array([10.0, 11.0, 10.0, 12.0])
        out = ind.rsi(close, 2)
        # seed: gain 0.5, loss 0.5 -> 50; next: gain (0.5 + 2) / 2, loss 0.25
        np.testing.assert_allclose(out[2], 50.0)
        np.testing.assert_allclose(out[3], 100.0 - 100.0 / (1.0 + 1.25 / 0.25))


class TestBollingerVwap:
    def test_constant_bands_collapse(self):
        mid, upper, lower = ind.bollinger(np.full(25, 4.0), 20, 2.0)
        np.testing.assert_allclose(mid[19:], 4.0)
        np.testing.assert_allclose(upper[19:], 4.0)
        np.testing.assert_allclose(lower[19:], 4.0)

    def test_two_point_bands(self):
        mid, upper, lower = ind.bollinger([1.0, 3.0], 2, 2.0)
        assert (mid[1], upper[1], lower[1]) == pytest.approx((2.0, 4.0, 0.0))

    def test_band_order_on_random_input(self):
        x = np.exp(np.random.default_rng(3).normal(size=(500, 4)))
        mid, upper, lower = ind.bollinger(x, 20, 2.0)
        defined = ~np.isnan(mid)
        assert defined[19:].all()
        assert (upper[defined] >= mid[defined]).all()
        assert (mid[defined] >= lower[defined]).all()

    def test_vwap_single_bar_is_typical_price(self):
        out = ind.rolling_vwap([12.0], [9.0], [12.0], [500.0], 1)
        np.testing.assert_allclose(out, [11.0])

    def test_vwap_weights(self):
        # typical prices 10 and 20
        out = ind.rolling_vwap([10.0, 20.0], [10.0, 20.0], [10.0, 20.0], [1.0, 3.0], 2)
        np.testing.assert_allclose(out[1], 17.5)

    def test_vwap_zero_volume_undefined(self):
        out = ind.rolling_vwap([10.0, 20.0], [10.0, 20.0], [10.0, 20.0], [0.0, 0.0], 2)
        assert np.isnan(out[1])


class TestCrossSection:
    def test_rank_scaling(self):
        np.testing.assert_allclose(ind.cross_rank([3.0, 1.0, 2.0]), [1.0, 0.0, 0.5])

    def test_ties(self):
        np.testing.assert_allclose(ind.cross_rank([5.0, 5.0]), [0.5, 0.5])

    def test_singleton(self):
        np.testing.assert_allclose(ind.cross_rank([7.0]), [0.5])

    def test_nan_is_skipped(self):
        np.testing.assert_allclose(ind.cross_rank([2.0, nan, 1.0]), [1.0, nan, 0.0])

    def test_all_missing(self):
        assert np.isnan(ind.cross_rank([nan, nan])).all()

    def test_rows_ranked_independently(self):
        out = ind.cross_rank_rows(np.array([[1.0, 2.0], [9.0, 3.0]]))
        np.testing.assert_allclose(out, [[0.0, 1.0], [1.0, 0.0]])


class TestElementwise:
    def test_shift(self):
        np.testing.assert_allclose(ind.shift([1.0, 2.0, 3.0], 1), [nan, 1.0, 2.0])

    def test_negative_shift_rejected(self):
        with pytest.raises(ValueError):
            ind.shift([1.0, 2.0], -1)

    def test_diff(self):
        np.testing.assert_allclose(ind.diff([5.0, 7.0, 4.0]), [nan, 2.0, -3.0])

    def test_sign(self):
        np.testing.assert_array_equal(ind.sign([-0.2, 0.0, 3.0]), [-1.0, 0.0, 1.0])

    def test_params_validation(self):
        with pytest.raises(ValueError):
            ind.IndicatorParams(macd_fast=30, macd_slow=26).validate()
