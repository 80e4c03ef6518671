import numpy as np
import pytest

from alphaforge.errors import ConfigError, MissingArtifactError, PanelValidationError
from alphaforge.panel import load_csv
from alphaforge.synthetic import PlantedSignal, SyntheticSpec, generate_synthetic, symbol_names

HEADER = "date,symbol,open,high,low,close,volume\n"


def write(tmp_path, name, rows):
    path = tmp_path / name
    path.write_text(HEADER + "".join(row + "\n" for row in rows), encoding="utf-8")
    return path


class TestLoadCsv:
    def test_single_row_becomes_one_bar(self, tmp_path):
        panel = load_csv(write(tmp_path, "p.csv", ["2022-01-03,AAPL,100,102,99,101,5000000"]))
        bar = panel.bar(0, 0)
        assert (panel.n_dates, panel.n_symbols) == (1, 1)
        assert bar.symbol == "AAPL"
        assert bar.close == 101.0
        assert bar.volume == 5_000_000.0

    def test_row_order_does_not_matter(self, tmp_path):
        rows = [
            "2022-01-03,MSFT,50,51,49,50.5,100",
            "2022-01-04,AAPL,101,103,100,102,200",
            "2022-01-03,AAPL,100,102,99,101,300",
            "2022-01-04,MSFT,50.5,52,50,51,400",
        ]
        a = load_csv(write(tmp_path, "a.csv", rows))
        b = load_csv(write(tmp_path, "b.csv", rows[::-1]))
        assert a.equals(b)
        assert list(a.symbols) == ["AAPL", "MSFT"]

    def test_high_below_low_names_the_cell(self, tmp_path):
        path = write(tmp_path, "bad.csv", ["2022-01-03,AAPL,100,98,99,99,10"])
        with pytest.raises(PanelValidationError, match="2022-01-03/AAPL"):
            load_csv(path)

    def test_duplicate_bar_rejected(self, tmp_path):
        rows = ["2022-01-03,AAPL,100,102,99,101,1", "2022-01-03,AAPL,100,102,99,101,1"]
        with pytest.raises(PanelValidationError, match="duplicate"):
            load_csv(write(tmp_path, "dup.csv", rows))

    def test_malformed_number_reports_line(self, tmp_path):
        rows = ["2022-01-03,AAPL,100,102,99,101,1", "2022-01-04,AAPL,abc,102,99,101,1"]
        with pytest.raises(PanelValidationError, match="line 3"):
            load_csv(write(tmp_path, "bad.csv", rows))

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("date,ticker,open,high,low,close,volume\n", encoding="utf-8")
        with pytest.raises(PanelValidationError, match="header"):
            load_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifactError, match="panel.csv"):
            load_csv(tmp_path / "panel.csv")

    def test_missing_symbol_on_a_date_stays_nan(self, tmp_path):
        rows = [
            "2022-01-03,AAPL,100,102,99,101,1",
            "2022-01-04,AAPL,100,102,99,101,1",
            "2022-01-04,MSFT,50,51,49,50,1",
        ]
        panel = load_csv(write(tmp_path, "gap.csv", rows))
        assert np.isnan(panel.close[0, 1])
        assert panel.present().sum() == 3

    def test_export_then_load_is_identical(self, tmp_path, small_panel):
        path = small_panel.export_csv(tmp_path / "panel.csv")
        assert load_csv(path).equals(small_panel)


class TestPanel:
    def test_fields_are_read_only(self, small_panel):
        with pytest.raises(ValueError):
            small_panel.close[0, 0] = 1.0

    def test_unsorted_symbols_rejected(self, panel_builder):
        with pytest.raises(PanelValidationError, match="sorted"):
            panel_builder(np.ones((3, 2)), symbols=["B", "A"])

    def test_date_position(self, small_panel):
        assert small_panel.date_position(small_panel.dates[10]) == 10


class TestSynthetic:
    def test_same_seed_gives_identical_panels(self):
        spec = SyntheticSpec(n_symbols=5, n_days=260, seed=9)
        assert generate_synthetic(spec).equals(generate_synthetic(spec))

    def test_different_seed_differs(self):
        a = generate_synthetic(SyntheticSpec(n_symbols=5, n_days=260, seed=1))
        b = generate_synthetic(SyntheticSpec(n_symbols=5, n_days=260, seed=2))
        assert not a.equals(b)

    def test_short_history_rejected(self):
        with pytest.raises(ConfigError, match="250"):
            generate_synthetic(SyntheticSpec(n_days=100))

    def test_symbol_names_sort_in_numeric_order(self):
        names = symbol_names(120)
        assert names == sorted(names)
        assert names[0] == "S000"

    def test_unknown_planted_factor_rejected(self):
        spec = SyntheticSpec(n_symbols=5, n_days=260, planted_signal=PlantedSignal({"alpha_rsi_vs_50": 1.0}))
        with pytest.raises(ConfigError, match="alpha_rsi_vs_50"):
            generate_synthetic(spec)

    def test_noiseless_planted_signal_drives_forward_return(self):
        signal = PlantedSignal({"alpha_kline_body_strength": 0.02}, noise_std=0.0, anchor=0.0)
        panel = generate_synthetic(SyntheticSpec(n_symbols=8, n_days=260, seed=4, planted_signal=signal))
        t = 100
        expected = signal.expected_return(panel.open[t], panel.high[t], panel.low[t], panel.close[t])
        realised = panel.close[t + 5] / panel.close[t] - 1.0
        np.testing.assert_allclose(realised, expected, rtol=1e-9, atol=1e-12)

    def test_planted_interaction_is_centred_each_day(self):
        signal = PlantedSignal({"alpha_kline_body_strength": 0.0, "alpha_close_median_dev_ratio": 0.0},
                               interaction=0.25, noise_std=0.0, anchor=0.0)
        panel = generate_synthetic(SyntheticSpec(n_symbols=10, n_days=260, seed=6, planted_signal=signal))
        realised = panel.close[105:] / panel.close[100:-5] - 1.0
        np.testing.assert_allclose(realised.mean(axis=1), 0.0, atol=1e-12)
        assert ((realised > 0).any(axis=1) & (realised < 0).any(axis=1)).all()
