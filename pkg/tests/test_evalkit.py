import json

import numpy as np
import pytest

from alphaforge.dataset import forward_returns
from alphaforge.errors import DataError, MissingArtifactError
from alphaforge.evalkit import (SignalFrame, _select, backtest_matrix, cumulative, evaluate_signals,
                                ic_summary, long_short_backtest, max_drawdown, pearson_ic, sharpe,
                                spearman_ic, write_metrics)


def brute_force_spearman(a, b):
    def ranks(x):
        return np.array([1.0 + sum(y < v for y in x) + 0.5 * (sum(y == v for y in x) - 1) for v in x])

    ra, rb = ranks(a), ranks(b)
    ra, rb = ra - ra.mean(), rb - rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    return np.nan if denom == 0.0 else (ra * rb).sum() / denom


def full_signal(panel, matrix):
    t_idx, s_idx = np.nonzero(np.isfinite(matrix))
    return SignalFrame(panel.dates[t_idx], panel.symbols[s_idx], matrix[t_idx, s_idx])


@pytest.fixture
def ladder_panel(panel_builder):
    # symbol s gains s% on the second day, then prices stay flat
    n = 10
    close = np.full((4, n), 100.0)
    close[1:] *= 1.0 + 0.01 * np.arange(n)
    return panel_builder(close)


class TestRankIC:
    def test_monotone(self):
        assert spearman_ic([0.1, 0.2, 0.3, 0.4, 0.5], [0.01, 0.02, 0.03, 0.04, 0.05]) == pytest.approx(1.0)

    def test_reversed(self):
        assert spearman_ic([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)

    def test_rank_not_value(self):
        assert spearman_ic([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 400.0]) == pytest.approx(1.0)
        assert pearson_ic([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 400.0]) < 1.0

    def test_ties_use_average_ranks(self):
        assert spearman_ic([1.0, 1.0, 2.0], [1.0, 2.0, 3.0]) == pytest.approx(np.sqrt(3.0) / 2.0)

    def test_too_few_pairs(self):
        assert np.isnan(spearman_ic([1.0, 2.0, np.nan], [1.0, 2.0, 3.0]))

    def test_constant_scores(self):
        assert np.isnan(spearman_ic([5.0, 5.0, 5.0, 5.0], [1.0, 2.0, 3.0, 4.0]))

    def test_three_point_example(self):
        assert spearman_ic([1.0, 2.0, 3.0], [3.0, 1.0, 2.0]) == pytest.approx(-0.5, abs=1e-15)

    def test_matches_brute_force_ranks(self):
        rng = np.random.default_rng(2024)
        for trial in range(1000):
            n = int(rng.integers(3, 30))
            if trial % 2:
                a, b = rng.integers(0, 5, size=n).astype(float), rng.integers(0, 5, size=n).astype(float)
            else:
                a, b = rng.normal(size=n), rng.normal(size=n)
            expected = brute_force_spearman(a, b)
            if np.isnan(expected):
                assert np.isnan(spearman_ic(a, b))
            else:
                assert spearman_ic(a, b) == pytest.approx(expected, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        a, b = rng.normal(size=20), rng.normal(size=20)
        base = spearman_ic(a, b)
        assert spearman_ic(np.exp(a), b) == pytest.approx(base)
        assert spearman_ic(a, 3.0 * b - 1.0) == pytest.approx(base)


class TestSummaries:
    def test_icir(self):
        summary = ic_summary([0.1, 0.3])
        assert (summary.ic_mean, summary.ic_std, summary.icir) == pytest.approx((0.2, 0.1, 2.0))
        assert summary.defined and summary.ir == summary.icir

    def test_two_day_example(self):
        summary = ic_summary([0.2, 0.0])
        assert (summary.ic_mean, summary.ic_std, summary.icir) == pytest.approx((0.1, 0.1, 1.0))

    def test_negated_ic_negates_icir(self):
        assert ic_summary([-0.1, -0.3]).icir == pytest.approx(-ic_summary([0.1, 0.3]).icir)

    def test_flat_ic_is_undefined(self):
        summary = ic_summary([0.05, 0.05, 0.05])
        assert not summary.defined
        assert np.isnan(summary.icir)

    def test_single_day_is_undefined(self):
        assert not ic_summary([0.2]).defined

    def test_day_count_can_be_given(self):
        summary = ic_summary([0.1, np.nan, 0.3], n_days=4)
        assert summary.n_days == 4
        assert summary.ic_mean == pytest.approx(0.2)

    def test_sharpe(self):
        r = np.array([0.01, -0.01, 0.02])
        stats = sharpe(r)
        assert stats.ann_return == pytest.approx(r.mean() * 252)
        assert stats.ann_vol == pytest.approx(r.std() * np.sqrt(252))
        assert stats.sharpe == pytest.approx(r.mean() / r.std() * np.sqrt(252))

    def test_annualisation_example(self):
        stats = sharpe([0.011, -0.009])
        assert stats.ann_return == pytest.approx(0.252)
        assert stats.sharpe == pytest.approx(1.58745, abs=1e-5)

    def test_constant_returns_have_no_sharpe(self):
        stats = sharpe([0.01, 0.01, 0.01])
        assert not stats.defined
        assert np.isnan(stats.sharpe)

    def test_cumulative(self):
        np.testing.assert_allclose(cumulative([0.1, -0.5]), [0.1, -0.45])

    def test_drawdown_from_peak(self):
        assert max_drawdown(cumulative([0.1, -0.5])) == pytest.approx(0.5)

    def test_drawdown_counts_initial_wealth(self):
        assert max_drawdown(cumulative([-0.2, 0.1])) == pytest.approx(0.2)

    def test_no_drawdown(self):
        assert max_drawdown(cumulative([0.01, 0.02])) == 0.0


class TestBacktest:
    def test_top_and_bottom_baskets(self, ladder_panel):
        matrix = np.full((4, 10), np.nan)
        matrix[0] = np.arange(10.0)
        result = backtest_matrix(matrix, ladder_panel.close, ladder_panel.dates, k=2)
        assert len(result.dates) == 1
        assert result.top[0] == pytest.approx(0.085)
        assert result.bottom[0] == pytest.approx(0.005)
        assert result.long_short[0] == pytest.approx(0.08)

    def test_four_stock_example(self, panel_builder):
        panel = panel_builder([[100.0, 100.0, 100.0, 100.0], [102.0, 100.0, 99.0, 105.0]],
                              symbols=["A", "B", "C", "D"])
        matrix = np.array([[3.0, 1.0, 2.0, 0.0], [np.nan] * 4])
        result = backtest_matrix(matrix, panel.close, panel.dates, k=1)
        assert result.top[0] == pytest.approx(0.02)
        assert result.bottom[0] == pytest.approx(0.05)
        assert result.long_short[0] == pytest.approx(-0.03)

    def test_matches_hand_computation_on_small_panels(self, random_panel_factory):
        rng = np.random.default_rng(9)
        for seed in range(40):
            n_days, n_symbols = int(rng.integers(2, 11)), int(rng.integers(2, 6))
            close = random_panel_factory(seed, n_days=n_days, n_symbols=n_symbols).close
            scores = rng.integers(0, 3, size=(n_days, n_symbols)).astype(float)
            result = backtest_matrix(scores, close, np.arange(n_days), k=1)

            expected = []
            for t in range(n_days - 1):
                ret = close[t + 1] / close[t] - 1.0
                best = max(range(n_symbols), key=lambda s: (scores[t, s], -s))
                worst = min(range(n_symbols), key=lambda s: (scores[t, s], s))
                expected.append((ret[best], ret[worst]))
            assert list(zip(result.top, result.bottom)) == expected
            np.testing.assert_array_equal(result.long_short, result.top - result.bottom)

    def test_flat_prices_give_flat_legs(self, panel_builder):
        panel = panel_builder(np.full((5, 4), 10.0))
        result = backtest_matrix(np.arange(20.0).reshape(5, 4), panel.close, panel.dates, k=2)
        np.testing.assert_array_equal(result.long_short, np.zeros(4))

    def test_ties_go_to_the_earlier_symbol(self):
        top, bottom = _select(np.zeros(6), np.ones(6, dtype=bool), 2)
        np.testing.assert_array_equal(top, [0, 1])
        np.testing.assert_array_equal(bottom, [0, 1])

    def test_day_with_too_few_candidates_is_skipped(self, ladder_panel):
        matrix = np.full((4, 10), np.nan)
        matrix[0, :3] = [1.0, 2.0, 3.0]
        result = backtest_matrix(matrix, ladder_panel.close, ladder_panel.dates, k=2)
        assert result.skipped_days == 1
        assert len(result.dates) == 0

    def test_last_day_has_no_next_return(self, ladder_panel):
        matrix = np.full((4, 10), np.nan)
        matrix[3] = np.arange(10.0)
        result = backtest_matrix(matrix, ladder_panel.close, ladder_panel.dates, k=2)
        assert result.skipped_days == 1

    def test_overlapping_holding(self, random_panel_factory):
        panel = random_panel_factory(4, n_days=6, n_symbols=10)
        rng = np.random.default_rng(0)
        matrix = np.full((6, 10), np.nan)
        matrix[:2] = rng.normal(size=(2, 10))
        single = backtest_matrix(matrix, panel.close, panel.dates, k=3, holding=1)
        double = backtest_matrix(matrix, panel.close, panel.dates, k=3, holding=2)
        assert len(single.dates) == 2
        assert list(double.dates) == list(panel.dates[:3])
        assert double.top[0] == pytest.approx(single.top[0])

        next_ret = panel.close[2] / panel.close[1] - 1.0
        first = np.argsort(-matrix[0], kind="stable")[:3]
        second = np.argsort(-matrix[1], kind="stable")[:3]
        assert double.top[1] == pytest.approx(0.5 * (next_ret[first].mean() + next_ret[second].mean()))
        assert double.top[2] == pytest.approx((panel.close[3] / panel.close[2] - 1.0)[second].mean())

    def test_negated_signal_swaps_legs(self, synthetic_panel):
        rng = np.random.default_rng(1)
        signals = full_signal(synthetic_panel, rng.normal(size=synthetic_panel.close.shape))
        base = long_short_backtest(signals, synthetic_panel, k=5)
        flipped = long_short_backtest(signals.negated(), synthetic_panel, k=5)
        np.testing.assert_allclose(flipped.top, base.bottom)
        np.testing.assert_allclose(flipped.long_short, -base.long_short)

    def test_bad_parameters(self, ladder_panel):
        with pytest.raises(ValueError):
            backtest_matrix(np.zeros((4, 10)), ladder_panel.close, ladder_panel.dates, k=0)


class TestSignalFrame:
    def test_sorted_by_date_then_symbol(self):
        frame = SignalFrame(["2022-01-04", "2022-01-03", "2022-01-03"], ["A", "B", "A"], [1.0, 2.0, 3.0])
        assert list(frame.symbols) == ["A", "B", "A"]
        np.testing.assert_array_equal(frame.scores, [3.0, 2.0, 1.0])

    def test_duplicate_pair(self):
        with pytest.raises(DataError, match="more than one score"):
            SignalFrame(["2022-01-03", "2022-01-03"], ["A", "A"], [1.0, 2.0])

    def test_non_finite_score(self):
        with pytest.raises(DataError, match="finite"):
            SignalFrame(["2022-01-03"], ["A"], [np.nan])

    def test_unknown_date(self, ladder_panel):
        frame = SignalFrame(["2030-01-01"], ["S00"], [1.0])
        with pytest.raises(DataError, match="2030-01-01"):
            frame.to_matrix(ladder_panel.dates, ladder_panel.symbols)

    def test_unknown_symbol(self, ladder_panel):
        frame = SignalFrame([ladder_panel.dates[0]], ["ZZZ"], [1.0])
        with pytest.raises(DataError, match="ZZZ"):
            frame.to_matrix(ladder_panel.dates, ladder_panel.symbols)

    def test_csv(self, tmp_path):
        frame = SignalFrame(["2022-01-03", "2022-01-03"], ["A", "B"], [0.1, 1.0 / 3.0])
        loaded = SignalFrame.load_csv(frame.export_csv(tmp_path / "signals.csv"))
        np.testing.assert_array_equal(loaded.scores, frame.scores)
        assert list(loaded.symbols) == ["A", "B"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifactError, match="signals.csv"):
            SignalFrame.load_csv(tmp_path / "signals.csv")

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "signals.csv"
        path.write_text("date,ticker,score\n2022-01-03,A,1\n", encoding="utf-8")
        with pytest.raises(DataError, match="header"):
            SignalFrame.load_csv(path)


class TestEvaluateSignals:
    def test_perfect_foresight(self, synthetic_panel):
        future = forward_returns(synthetic_panel.close, 5)
        report, ic_frame, _ = evaluate_signals(full_signal(synthetic_panel, future), synthetic_panel)
        np.testing.assert_allclose(ic_frame["ic"], 1.0)
        assert report.ic.n_days == synthetic_panel.n_dates - 5
        assert report.to_dict()["icir"] is None

    def test_negation_flips_ic(self, synthetic_panel):
        rng = np.random.default_rng(2)
        signals = full_signal(synthetic_panel, rng.normal(size=synthetic_panel.close.shape))
        base, _, _ = evaluate_signals(signals, synthetic_panel)
        flipped, _, _ = evaluate_signals(signals.negated(), synthetic_panel)
        assert flipped.ic.ic_mean == pytest.approx(-base.ic.ic_mean)

    def test_metrics_json(self, tmp_path, synthetic_panel):
        rng = np.random.default_rng(3)
        signals = full_signal(synthetic_panel, rng.normal(size=synthetic_panel.close.shape))
        report, _, _ = evaluate_signals(signals, synthetic_panel, k=5, holding=1)
        data = json.loads(write_metrics(report, tmp_path / "metrics.json").read_text(encoding="utf-8"))
        assert set(data["legs"]) == {"top", "bottom", "long_short"}
        assert data["k"] == 5 and data["horizon_days"] == 5
        assert data["icir_defined"] is True
        assert data["backtest_days"] == synthetic_panel.n_dates - 1

    def test_random_scores_have_no_ic(self, random_panel_factory):
        panel = random_panel_factory(11, n_days=260, n_symbols=20)
        scores = np.random.default_rng(12).normal(size=panel.close.shape)
        scores[250:] = np.nan
        report, ic_frame, _ = evaluate_signals(full_signal(panel, scores), panel)
        assert len(ic_frame) == 250
        assert abs(report.ic.ic_mean) < 0.1

    def test_ic_days_count_scored_days(self, synthetic_panel):
        scores = np.full(synthetic_panel.close.shape, np.nan)
        scores[0] = 1.0
        scores[1, :2] = [0.3, 0.7]
        scores[2:10] = np.random.default_rng(4).normal(size=(8, synthetic_panel.n_symbols))
        report, ic_frame, _ = evaluate_signals(full_signal(synthetic_panel, scores), synthetic_panel)
        # day 0 is scored but has no rank variance, day 1 has too few symbols
        assert len(ic_frame) == 8
        assert report.ic.n_days == 9
        assert report.to_dict()["ic_days"] == 9
