"""Signal evaluation: daily rank IC, ICIR, Sharpe and the top-K / bottom-K backtest"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from alphaforge.dataset import forward_returns
from alphaforge.errors import DataError, MissingArtifactError

logger = logging.getLogger(__name__)

MIN_IC_PAIRS = 3
STD_FLOOR = 1e-12
TRADING_DAYS = 252
LEGS = ("top", "bottom", "long_short")


class SignalFrame:
    """One finite score per (date, symbol), kept sorted by date then symbol"""

    COLUMNS = ("date", "symbol", "score")

    def __init__(self, dates, symbols, scores):
        frame = pd.DataFrame({
            "date": np.asarray(dates, dtype="datetime64[D]"),
            "symbol": np.asarray(symbols, dtype=object),
            "score": np.asarray(scores, dtype=np.float64),
        })
        if not np.all(np.isfinite(frame["score"].to_numpy())):
            raise DataError("signal scores must be finite")
        if frame.duplicated(subset=["date", "symbol"]).any():
            raise DataError("signal has more than one score for a (date, symbol) pair")
        self.frame = frame.sort_values(["date", "symbol"], kind="mergesort").reset_index(drop=True)

    def __len__(self):
        return len(self.frame)

    @property
    def dates(self):
        return self.frame["date"].to_numpy(dtype="datetime64[D]")

    @property
    def symbols(self):
        return self.frame["symbol"].to_numpy(dtype=object)

    @property
    def scores(self):
        return self.frame["score"].to_numpy(dtype=np.float64)

    def negated(self):
        return SignalFrame(self.dates, self.symbols, -self.scores)

    def to_matrix(self, dates, symbols):
        """Scores laid out on a panel's date x symbol grid, NaN where unscored"""
        dates = np.asarray(dates, dtype="datetime64[D]")
        t_idx = np.searchsorted(dates, self.dates)
        inside = (t_idx < len(dates)) & (dates[np.minimum(t_idx, len(dates) - 1)] == self.dates)
        if not inside.all():
            bad = self.dates[~inside][0]
            raise DataError(f"signal date {bad} is not a panel date")
        position = {s: i for i, s in enumerate(symbols)}
        unknown = [s for s in set(self.symbols) if s not in position]
        if unknown:
            raise DataError(f"signal symbol {sorted(unknown)[0]} is not in the panel")
        s_idx = np.array([position[s] for s in self.symbols], dtype=np.int64)
        matrix = np.full((len(dates), len(symbols)), np.nan)
        matrix[t_idx, s_idx] = self.scores
        return matrix

    def export_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        out = self.frame.assign(date=np.datetime_as_string(self.dates))
        out.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
        logger.info("Wrote %d signals to %s", len(self), path)
        return path

    @classmethod
    def load_csv(cls, path):
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(path.name, path)
        frame = pd.read_csv(path, dtype={"symbol": str}, float_precision="round_trip")
        if tuple(frame.columns) != cls.COLUMNS:
            raise DataError(f"{path} header must be {','.join(cls.COLUMNS)}")
        return cls(frame["date"].to_numpy(dtype="datetime64[D]"), frame["symbol"], frame["score"])


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        return np.nan
    return float(a @ b) / denom


def spearman_ic(scores, returns, min_pairs=MIN_IC_PAIRS):
    """Pearson correlation of average-tie ranks over finite pairs; NaN when the day is skipped"""
    scores = np.asarray(scores, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    ok = np.isfinite(scores) & np.isfinite(returns)
    if ok.sum() < min_pairs:
        return np.nan
    return _pearson(rankdata(scores[ok]), rankdata(returns[ok]))


def pearson_ic(scores, returns, min_pairs=MIN_IC_PAIRS):
    scores = np.asarray(scores, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    ok = np.isfinite(scores) & np.isfinite(returns)
    if ok.sum() < min_pairs:
        return np.nan
    return _pearson(scores[ok], returns[ok])


def daily_ic(signal_matrix, future_returns, dates):
    """Frame `date,ic,ic_pearson,n` over the days where the rank IC is defined"""
    rows = []
    skipped = 0
    for t, date in enumerate(dates):
        ic = spearman_ic(signal_matrix[t], future_returns[t])
        if np.isnan(ic):
            if np.isfinite(signal_matrix[t]).any():
                skipped += 1
            continue
        n = int((np.isfinite(signal_matrix[t]) & np.isfinite(future_returns[t])).sum())
        rows.append({"date": np.datetime_as_string(date), "ic": ic,
                     "ic_pearson": pearson_ic(signal_matrix[t], future_returns[t]), "n": n})
    if skipped:
        logger.info("Skipped %d scored days for IC (fewer than %d pairs or zero rank variance)",
                    skipped, MIN_IC_PAIRS)
    return pd.DataFrame(rows, columns=["date", "ic", "ic_pearson", "n"])


@dataclass
class ICSummary:
    ic_mean: float
    ic_std: float
    icir: float
    n_days: int
    defined: bool

    @property
    def ir(self):
        return self.icir


def scored_days(signal_matrix, min_scored=MIN_IC_PAIRS):
    """Number of days with at least `min_scored` scored symbols"""
    scored = np.isfinite(np.asarray(signal_matrix, dtype=np.float64)).sum(axis=1)
    return int((scored >= min_scored).sum())


def ic_summary(daily, n_days=None):
    """
    Mean, population std and mean/std of a daily IC series

    `n_days` is the scored-day count reported with the summary; it defaults
    to the number of finite IC values.
    """
    values = np.asarray(daily, dtype=np.float64)
    values = values[np.isfinite(values)]
    n = len(values)
    n_days = n if n_days is None else int(n_days)
    if n == 0:
        return ICSummary(np.nan, np.nan, np.nan, n_days, False)
    mean = float(values.mean())
    std = float(values.std())
    if n < 2 or std < STD_FLOOR:
        return ICSummary(mean, std, np.nan, n_days, False)
    return ICSummary(mean, std, mean / std, n_days, True)


@dataclass
class SharpeStats:
    ann_return: float
    ann_vol: float
    sharpe: float
    defined: bool


def sharpe(daily_returns, periods=TRADING_DAYS):
    """Arithmetic annualisation with zero risk-free rate; population std"""
    r = np.asarray(daily_returns, dtype=np.float64)
    if len(r) < 2:
        return SharpeStats(np.nan, np.nan, np.nan, False)
    ann_return = float(r.mean()) * periods
    std = float(r.std())
    ann_vol = std * np.sqrt(periods)
    if std < STD_FLOOR:
        return SharpeStats(ann_return, ann_vol, np.nan, False)
    return SharpeStats(ann_return, ann_vol, ann_return / ann_vol, True)


def cumulative(returns):
    return np.cumprod(1.0 + np.asarray(returns, dtype=np.float64)) - 1.0


def max_drawdown(cumulative_returns):
    """Largest peak-to-trough loss of the wealth curve 1 + cumulative, as a positive fraction"""
    wealth = 1.0 + np.asarray(cumulative_returns, dtype=np.float64)
    if len(wealth) == 0:
        return 0.0
    peak = np.maximum.accumulate(np.concatenate(([1.0], wealth)))[1:]
    return float(-(wealth / peak - 1.0).min())


@dataclass
class BacktestResult:
    dates: np.ndarray
    top: np.ndarray
    bottom: np.ndarray
    long_short: np.ndarray
    k: int
    holding: int
    skipped_days: int = 0

    def leg(self, name):
        return getattr(self, name)

    def cumulative(self, name):
        return cumulative(self.leg(name))

    def to_frame(self):
        return pd.DataFrame({
            "date": np.datetime_as_string(self.dates),
            "top": self.cumulative("top"),
            "bottom": self.cumulative("bottom"),
            "long_short": self.cumulative("long_short"),
        })


def _select(scores, candidates, k):
    """Indices of the k highest and k lowest scores, ties going to the earlier symbol"""
    idx = np.flatnonzero(candidates)
    values = scores[idx]
    top = idx[np.lexsort((idx, -values))][:k]
    bottom = idx[np.lexsort((idx, values))][:k]
    return top, bottom


def backtest_matrix(signal_matrix, close, dates, k=5, holding=1):
    """
    Equal-weight daily top-k / bottom-k portfolios on next-day simple returns

    A day needs at least 2k symbols with both a score and a next-day return.
    With holding > 1, each day's baskets are held for `holding` days and the
    leg return averages the live tranches.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if holding < 1:
        raise ValueError("holding must be >= 1")
    close = np.asarray(close, dtype=np.float64)
    next_ret = np.full(close.shape, np.nan)
    next_ret[:-1] = close[1:] / close[:-1] - 1.0

    baskets = {}
    skipped = 0
    for t in range(len(dates)):
        candidates = np.isfinite(signal_matrix[t]) & np.isfinite(next_ret[t])
        if not np.isfinite(signal_matrix[t]).any():
            continue
        if candidates.sum() < 2 * k:
            skipped += 1
            continue
        baskets[t] = _select(signal_matrix[t], candidates, k)
    if skipped:
        logger.info("Skipped %d backtest days with fewer than %d candidates", skipped, 2 * k)

    kept, top, bottom = [], [], []
    for t in range(len(dates)):
        tranches = [baskets[t - h] for h in range(holding) if (t - h) in baskets]
        if holding > 1:
            tranches = [(a, b) for a, b in tranches if np.isfinite(next_ret[t, a]).any()
                        and np.isfinite(next_ret[t, b]).any()]
        if not tranches:
            continue
        kept.append(t)
        top.append(np.mean([np.nanmean(next_ret[t, a]) for a, _ in tranches]))
        bottom.append(np.mean([np.nanmean(next_ret[t, b]) for _, b in tranches]))

    top = np.asarray(top, dtype=np.float64)
    bottom = np.asarray(bottom, dtype=np.float64)
    return BacktestResult(np.asarray(dates)[kept], top, bottom, top - bottom, k, holding, skipped)


def long_short_backtest(signals, panel, k=5, holding=1):
    """Backtest a SignalFrame against the closes of `panel`"""
    return backtest_matrix(signals.to_matrix(panel.dates, panel.symbols), panel.close, panel.dates,
                           k=k, holding=holding)


@dataclass
class MetricsReport:
    ic: ICSummary
    ic_pearson_mean: float
    legs: dict
    k: int
    holding: int
    horizon: int
    annualization: int
    backtest_days: int
    skipped_backtest_days: int
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        def clean(value):
            if isinstance(value, (float, np.floating)):
                return float(value) if np.isfinite(value) else None
            if isinstance(value, np.integer):
                return int(value)
            return value

        legs = {name: {key: clean(v) for key, v in leg.items()} for name, leg in self.legs.items()}
        out = {
            "ic_mean": clean(self.ic.ic_mean),
            "ic_std": clean(self.ic.ic_std),
            "icir": clean(self.ic.icir),
            "ir": clean(self.ic.ir),
            "icir_defined": self.ic.defined,
            "ic_days": self.ic.n_days,
            "ic_pearson_mean": clean(self.ic_pearson_mean),
            "k": self.k,
            "holding": self.holding,
            "horizon_days": self.horizon,
            "annualization": self.annualization,
            "backtest_days": self.backtest_days,
            "skipped_backtest_days": self.skipped_backtest_days,
            "legs": legs,
        }
        out.update({key: clean(v) for key, v in self.extra.items()})
        return out


def evaluate_signals(signals, panel, k=5, holding=1, horizon=5, annualization=TRADING_DAYS):
    """Returns (MetricsReport, daily IC frame, BacktestResult) for one SignalFrame"""
    matrix = signals.to_matrix(panel.dates, panel.symbols)
    future = forward_returns(panel.close, horizon)
    ic_frame = daily_ic(matrix, future, panel.dates)
    summary = ic_summary(ic_frame["ic"].to_numpy(), scored_days(matrix))
    pearson = ic_frame["ic_pearson"].to_numpy(dtype=np.float64)
    pearson = pearson[np.isfinite(pearson)]

    backtest = backtest_matrix(matrix, panel.close, panel.dates, k=k, holding=holding)
    legs = {}
    for name in LEGS:
        returns = backtest.leg(name)
        stats = sharpe(returns, annualization)
        curve = cumulative(returns)
        legs[name] = {
            "ann_return": stats.ann_return,
            "ann_vol": stats.ann_vol,
            "sharpe": stats.sharpe,
            "sharpe_defined": stats.defined,
            "cumulative_return": float(curve[-1]) if len(curve) else 0.0,
            "max_drawdown": max_drawdown(curve),
        }
    if not summary.defined:
        logger.warning("ICIR undefined: %d IC days, IC std %.3g", summary.n_days, summary.ic_std)

    report = MetricsReport(summary, float(pearson.mean()) if len(pearson) else np.nan, legs, k, holding,
                           horizon, annualization, len(backtest.dates), backtest.skipped_days)
    return report, ic_frame, backtest


def _prepare(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_ic_series(ic_frame, path):
    path = _prepare(path)
    ic_frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    return path


def write_metrics(report, path):
    path = _prepare(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_cumrets(backtest, path):
    path = _prepare(path)
    backtest.to_frame().to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    return path
