import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from alphaforge.errors import ConfigError
from alphaforge.panel import PricePanel
from alphaforge.reference_factors import BAR_LOCAL_KERNELS

logger = logging.getLogger(__name__)

MIN_DAYS = 250


@dataclass
class PlantedSignal:
    """
    Links bar-local factor values on date t to the return from t to t + horizon

    r_t = drift + sum(coef_i * f_i) + interaction * (f_1 * f_2 - mean_s(f_1 * f_2)) + noise_std * N(0, 1)
    where f_1, f_2 are the first two factors listed in `coefficients` and
    mean_s is the cross-sectional mean on day t.
    """

    coefficients: dict = field(default_factory=dict)
    interaction: float = 0.0
    noise_std: float = 0.0
    drift: float = 0.0
    # pulls each 5-day chain back towards its neighbours
    anchor: float = 0.1
    horizon: int = 5

    def validate(self):
        if not self.coefficients:
            raise ConfigError("planted signal needs at least one factor")
        for name in self.coefficients:
            if name not in BAR_LOCAL_KERNELS:
                raise ConfigError(
                    f"cannot plant {name}: supported factors are {', '.join(sorted(BAR_LOCAL_KERNELS))}")
        if self.interaction and len(self.coefficients) < 2:
            raise ConfigError("planted interaction needs two factors")
        if self.noise_std < 0:
            raise ConfigError("planted noise must be >= 0")
        if not 0 <= self.anchor < 1:
            raise ConfigError("planted anchor must be in [0, 1)")
        if self.horizon < 1:
            raise ConfigError("planted horizon must be >= 1")

    def expected_return(self, open_, high, low, close):
        """Noise-free planted return for one cross-section of bars"""
        values = [BAR_LOCAL_KERNELS[name](open_, high, low, close) for name in self.coefficients]
        r = np.full(np.shape(close), self.drift, dtype=np.float64)
        for coef, value in zip(self.coefficients.values(), values):
            r = r + coef * value
        if self.interaction:
            # centred per day
            product = values[0] * values[1]
            r = r + self.interaction * (product - np.nanmean(product))
        return r


@dataclass(frozen=True)
class SyntheticSpec:
    n_symbols: int = 100
    n_days: int = 750
    seed: int = 7
    planted_signal: Optional[PlantedSignal] = None
    start_date: str = "2021-01-04"
    daily_vol: float = 0.02
    gap_vol: float = 0.005
    range_vol: float = 0.01

    def validate(self):
        if self.n_symbols < 2:
            raise ConfigError(f"n_symbols must be >= 2, got {self.n_symbols}")
        if self.n_days < MIN_DAYS:
            raise ConfigError(f"n_days must be >= {MIN_DAYS} (ma200 history), got {self.n_days}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.planted_signal is not None:
            self.planted_signal.validate()


def symbol_names(n_symbols):
    width = len(str(n_symbols - 1))
    return [f"S{i:0{width}d}" for i in range(n_symbols)]


def generate_synthetic(spec):
    """
    Simulate a daily OHLCV panel from a PCG64 stream seeded with spec.seed

    Without a planted signal every close follows a geometric random walk.
    With one, close[t + h] is set from the bar on day t, so the planted factor
    combination predicts the h-day forward return up to the planted noise.
    All random draws happen up front in a fixed order.
    """
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    T, S = spec.n_days, spec.n_symbols

    start_price = rng.uniform(20.0, 200.0, size=S)
    vol = spec.daily_vol * rng.uniform(0.6, 1.4, size=S)
    shocks = rng.standard_normal((T, S))
    gaps = spec.gap_vol * rng.standard_normal((T, S))
    up = np.minimum(np.abs(spec.range_vol * rng.standard_normal((T, S))), 0.5)
    down = np.minimum(np.abs(spec.range_vol * rng.standard_normal((T, S))), 0.5)
    log_adv = rng.normal(np.log(1e6), 0.5, size=S)
    volume = np.round(np.exp(log_adv + 0.3 * rng.standard_normal((T, S))))
    noise = rng.standard_normal((T, S))

    planted = spec.planted_signal
    h = planted.horizon if planted else 0
    open_ = np.empty((T, S))
    high = np.empty((T, S))
    low = np.empty((T, S))
    close = np.empty((T, S))

    close[0] = start_price
    for t in range(T):
        if t > 0:
            if not planted or t < h:
                close[t] = close[t - 1] * np.exp(vol * shocks[t] - 0.5 * vol ** 2)
            open_[t] = close[t - 1] * np.exp(gaps[t])
        else:
            open_[0] = close[0] * np.exp(gaps[0])
        high[t] = np.maximum(open_[t], close[t]) * (1.0 + up[t])
        low[t] = np.minimum(open_[t], close[t]) * (1.0 - down[t])

        if planted and t + h < T:
            r = planted.expected_return(open_[t], high[t], low[t], close[t])
            r = r + planted.noise_std * noise[t]
            recent = np.log(close[max(0, t - h + 1):t + 1])
            r = r - planted.anchor * (recent[-1] - recent.mean(axis=0))
            # keeps prices positive under extreme draws
            close[t + h] = close[t] * np.maximum(1.0 + r, 0.05)

    dates = pd.bdate_range(spec.start_date, periods=T).to_numpy(dtype="datetime64[D]")
    panel = PricePanel(dates, symbol_names(S),
                       {"open": open_, "high": high, "low": low, "close": close, "volume": volume})
    logger.info("Generated synthetic %s (seed %d, planted=%s)", panel, spec.seed,
                ",".join(planted.coefficients) if planted else "none")
    return panel
