"""
Rolling and cross-sectional kernels the factor language is built from

Every kernel takes either one series (length T) or a T x S matrix with one
column per symbol, and returns the same shape. Undefined entries are NaN.
Output at index t only ever reads inputs at indices <= t.
"""
import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndicatorParams:
    rsi_window: int = 14
    macd_fast: int = 12
    macd_slow: int = 26
    macd_signal: int = 9
    vwap_window: int = 5
    boll_window: int = 20
    boll_k: float = 2.0

    def validate(self):
        for name in ("rsi_window", "macd_fast", "macd_slow", "macd_signal", "vwap_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.boll_window < 2:
            raise ValueError("boll_window must be >= 2")
        if self.macd_fast >= self.macd_slow:
            raise ValueError("macd_fast must be shorter than macd_slow")


def _columns(series):
    """Return a 2-D float view plus a flag telling whether to squeeze back"""
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim == 1:
        return arr[:, None], True
    if arr.ndim != 2:
        raise ValueError(f"expected a series or a T x S matrix, got shape {arr.shape}")
    return arr, False


def _restore(out, squeeze):
    return out[:, 0] if squeeze else out


def _check_window(window, minimum=1):
    if int(window) != window or window < minimum:
        raise ValueError(f"window must be an integer >= {minimum}, got {window}")
    return int(window)


def _rolling(series, window, reducer):
    x, squeeze = _columns(series)
    out = np.full(x.shape, np.nan)
    if window <= x.shape[0]:
        windows = sliding_window_view(x, window, axis=0)
        out[window - 1:] = reducer(windows, axis=-1)
    return _restore(out, squeeze)


def sma(series, window):
    window = _check_window(window)
    return _rolling(series, window, np.mean)


def rolling_sum(series, window):
    window = _check_window(window)
    return _rolling(series, window, np.sum)


def rolling_std(series, window):
    """Population standard deviation over the trailing window"""
    window = _check_window(window, minimum=2)
    return _rolling(series, window, np.std)


def ema(series, span):
    """
    Exponential moving average with alpha = 2 / (span + 1)

    Seeded with the first defined value of each column. A NaN input gives a
    NaN output at that index and leaves the running state untouched.
    """
    span = _check_window(span)
    alpha = 2.0 / (span + 1.0)
    x, squeeze = _columns(series)
    out = np.full(x.shape, np.nan)
    state = np.full(x.shape[1], np.nan)
    for t in range(x.shape[0]):
        value = x[t]
        ok = np.isfinite(value)
        seed = ok & np.isnan(state)
        state = np.where(seed, value, np.where(ok, state + alpha * (value - state), state))
        out[t] = np.where(ok, state, np.nan)
    return _restore(out, squeeze)


def _defined_count(x):
    return np.cumsum(np.isfinite(x), axis=0)


def macd_diff(close, fast=12, slow=26, signal=9):
    """
    MACD histogram: (EMA_fast - EMA_slow) - EMA_signal(EMA_fast - EMA_slow)

    The first slow + signal - 1 defined closes of each column are warm-up and
    come out NaN, so a column with fewer than slow + signal closes is all NaN.
    """
    x, squeeze = _columns(close)
    line = ema(x, fast) - ema(x, slow)
    hist = line - ema(line, signal)
    hist[_defined_count(x) < slow + signal] = np.nan
    return _restore(hist, squeeze)


def _rsi_from_averages(avg_gain, avg_loss):
    with np.errstate(divide="ignore", invalid="ignore"):
        value = 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    value = np.where(avg_loss == 0, 100.0, value)
    return np.where((avg_gain == 0) & (avg_loss == 0), 50.0, value)


def rsi(close, window=14):
    """
    Wilder RSI

    Averages are seeded with the plain mean of the first `window` gains and
    losses, then smoothed as avg = (avg * (window - 1) + x) / window.
    Defined from the `window`-th price change onwards; 50 when both averages
    are zero, 100 when only the average loss is zero.
    """
    window = _check_window(window)
    x, squeeze = _columns(close)
    T, S = x.shape
    out = np.full(x.shape, np.nan)
    prev = np.full(S, np.nan)
    n_changes = np.zeros(S, dtype=np.int64)
    sum_gain = np.zeros(S)
    sum_loss = np.zeros(S)
    avg_gain = np.full(S, np.nan)
    avg_loss = np.full(S, np.nan)

    for t in range(T):
        value = x[t]
        ok = np.isfinite(value)
        has_prev = ok & np.isfinite(prev)
        delta = np.where(has_prev, value - prev, 0.0)
        gain = np.maximum(delta, 0.0)
        loss = np.maximum(-delta, 0.0)
        n_changes += has_prev

        seeding = has_prev & (n_changes <= window)
        sum_gain += np.where(seeding, gain, 0.0)
        sum_loss += np.where(seeding, loss, 0.0)
        seeded = has_prev & (n_changes == window)
        avg_gain = np.where(seeded, sum_gain / window, avg_gain)
        avg_loss = np.where(seeded, sum_loss / window, avg_loss)

        smoothing = has_prev & (n_changes > window)
        avg_gain = np.where(smoothing, (avg_gain * (window - 1) + gain) / window, avg_gain)
        avg_loss = np.where(smoothing, (avg_loss * (window - 1) + loss) / window, avg_loss)

        defined = has_prev & (n_changes >= window)
        out[t] = np.where(defined, _rsi_from_averages(avg_gain, avg_loss), np.nan)
        prev = np.where(ok, value, prev)

    return _restore(out, squeeze)


def bollinger(close, window=20, k=2.0):
    """Returns (mid, upper, lower) with population-std bands"""
    window = _check_window(window, minimum=2)
    mid = sma(close, window)
    width = k * rolling_std(close, window)
    return mid, mid + width, mid - width


def rolling_vwap(high, low, close, volume, window=5):
    """Trailing VWAP of the typical price (high + low + close) / 3"""
    window = _check_window(window)
    typical = (np.asarray(high, dtype=np.float64) + np.asarray(low, dtype=np.float64)
               + np.asarray(close, dtype=np.float64)) / 3.0
    volume = np.asarray(volume, dtype=np.float64)
    weighted = rolling_sum(typical * volume, window)
    total = rolling_sum(volume, window)
    with np.errstate(divide="ignore", invalid="ignore"):
        vwap = weighted / total
    return np.where(total == 0, np.nan, vwap)


def cross_rank(values):
    """
    Average-tie rank of one cross-section scaled to [0, 1] by (rank - 1) / (N - 1)

    N counts the defined entries only; a single defined entry ranks 0.5.
    """
    values = np.asarray(values, dtype=np.float64)
    out = np.full(values.shape, np.nan)
    ok = np.isfinite(values)
    n = int(ok.sum())
    if n == 1:
        out[ok] = 0.5
    elif n > 1:
        out[ok] = (rankdata(values[ok], method="average") - 1.0) / (n - 1.0)
    return out


def cross_rank_rows(matrix):
    """cross_rank applied to every date (row) of a T x S matrix"""
    matrix = np.asarray(matrix, dtype=np.float64)
    return np.vstack([cross_rank(row) for row in matrix]) if len(matrix) else matrix.copy()


def shift(series, k=1):
    """Move values k slots forward in time, leaving k leading NaN"""
    if int(k) != k or k < 0:
        raise ValueError(f"shift needs a non-negative integer lag, got {k}")
    k = int(k)
    x = np.asarray(series, dtype=np.float64)
    out = np.full(x.shape, np.nan)
    if k == 0:
        out[:] = x
    elif k < len(x):
        out[k:] = x[:-k]
    return out


def diff(series):
    return np.asarray(series, dtype=np.float64) - shift(series, 1)


def sign(series):
    return np.sign(np.asarray(series, dtype=np.float64))
