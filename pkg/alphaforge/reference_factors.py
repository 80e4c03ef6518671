"""Hand-coded versions of a few bundled factors, used to cross-check the DSL evaluator"""
import numpy as np

from alphaforge import indicators


def kline_body_strength(open_, high, low, close):
    return (close - open_) / (high - low + 0.001)


def close_near_low(open_, high, low, close):
    return (high - close) / (high - low + 0.001)


def close_median_dev_ratio(open_, high, low, close):
    return (close - (high + low) / 2) / (high - low + 0.001)


# factors whose value on a date depends on that date's bar alone
BAR_LOCAL_KERNELS = {
    "alpha_kline_body_strength": kline_body_strength,
    "alpha_close_near_low": close_near_low,
    "alpha_close_median_dev_ratio": close_median_dev_ratio,
}


def rsi_vs_50(panel, rsi_window=14):
    return indicators.rsi(panel.close, rsi_window) - 50.0


def volume_spike_ratio(panel):
    avg = indicators.sma(panel.volume, 5)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = panel.volume / avg
    return np.where(avg == 0, np.nan, ratio)


def close_delta_1d(panel):
    return -1.0 * indicators.diff(panel.close)


REFERENCE_FACTORS = {
    "alpha_kline_body_strength": lambda p: kline_body_strength(p.open, p.high, p.low, p.close),
    "alpha_close_near_low": lambda p: close_near_low(p.open, p.high, p.low, p.close),
    "alpha_rsi_vs_50": rsi_vs_50,
    "alpha_volume_spike_ratio": volume_spike_ratio,
    "alpha_close_delta_1d": close_delta_1d,
}
