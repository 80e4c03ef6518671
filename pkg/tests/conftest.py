import numpy as np
import pandas as pd
import pytest

from alphaforge.dataset import TrainingDataset
from alphaforge.panel import PricePanel
from alphaforge.synthetic import SyntheticSpec, generate_synthetic


def build_panel(close, open_=None, high=None, low=None, volume=None, start="2022-01-03", symbols=None):
    """PricePanel around a close matrix; missing fields are derived so every bar is valid"""
    close = np.asarray(close, dtype=np.float64)
    if close.ndim == 1:
        close = close[:, None]
    open_ = close if open_ is None else np.asarray(open_, dtype=np.float64).reshape(close.shape)
    top = np.maximum(open_, close)
    bottom = np.minimum(open_, close)
    high = top * 1.01 if high is None else np.asarray(high, dtype=np.float64).reshape(close.shape)
    low = bottom * 0.99 if low is None else np.asarray(low, dtype=np.float64).reshape(close.shape)
    volume = np.full(close.shape, 1e6) if volume is None else np.asarray(volume, dtype=np.float64).reshape(close.shape)
    dates = pd.bdate_range(start, periods=close.shape[0]).to_numpy(dtype="datetime64[D]")
    symbols = symbols or [f"S{i:02d}" for i in range(close.shape[1])]
    return PricePanel(dates, symbols, {"open": open_, "high": high, "low": low, "close": close, "volume": volume})


def random_panel(seed, n_days=300, n_symbols=8):
    """Random-walk OHLCV panel drawn from its own PCG64 stream"""
    rng = np.random.Generator(np.random.PCG64(seed))
    close = 50.0 * np.exp(np.cumsum(0.02 * rng.standard_normal((n_days, n_symbols)), axis=0))
    open_ = close * np.exp(0.005 * rng.standard_normal((n_days, n_symbols)))
    high = np.maximum(open_, close) * (1.0 + np.abs(0.01 * rng.standard_normal((n_days, n_symbols))))
    low = np.minimum(open_, close) * (1.0 - np.abs(0.01 * rng.standard_normal((n_days, n_symbols))))
    volume = np.round(np.exp(rng.normal(13.0, 0.4, size=(n_days, n_symbols))))
    return build_panel(close, open_, high, low, volume)


@pytest.fixture
def panel_builder():
    return build_panel


@pytest.fixture
def random_panel_factory():
    return random_panel


@pytest.fixture
def small_panel():
    return random_panel(5, n_days=260, n_symbols=6)


@pytest.fixture(scope="session")
def synthetic_panel():
    return generate_synthetic(SyntheticSpec(n_symbols=12, n_days=260, seed=3))


def toy_dataset(seed=0, n_dates=40, n_symbols=10, n_features=6, n_train_dates=30):
    """Sample table where the target follows the first feature; the last dates form the validation split"""
    rng = np.random.Generator(np.random.PCG64(seed))
    days = pd.bdate_range("2022-10-03", periods=n_dates).to_numpy(dtype="datetime64[D]")
    dates = np.repeat(days, n_symbols)
    symbols = np.tile(np.array([f"S{i:02d}" for i in range(n_symbols)], dtype=object), n_dates)
    X = rng.standard_normal((len(dates), n_features))
    y = 0.02 * X[:, 0] + 0.005 * rng.standard_normal(len(dates))
    cutoff = days[n_train_dates]
    return TrainingDataset(dates, symbols, X, y, (y > 0).astype(np.float64), dates < cutoff,
                           tuple(f"alpha_f{i}" for i in range(n_features)), cutoff)


@pytest.fixture(scope="session")
def toy_dataset_factory():
    return toy_dataset
