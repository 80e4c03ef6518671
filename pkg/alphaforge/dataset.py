import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from alphaforge.errors import DatasetError, MissingArtifactError

logger = logging.getLogger(__name__)

HORIZON_DAYS = 5
MIN_CLIP_SAMPLES = 20
STD_FLOOR = 1e-12


def forward_returns(close, horizon=HORIZON_DAYS):
    """Simple return close[t + h] / close[t] - 1; the last h dates are NaN"""
    close = np.asarray(close, dtype=np.float64)
    out = np.full(close.shape, np.nan)
    if horizon < len(close):
        out[:-horizon] = close[horizon:] / close[:-horizon] - 1.0
    return out


def forward_return_5(panel, horizon=HORIZON_DAYS):
    return forward_returns(panel.close, horizon)


def fit_clip_bounds(returns, lo_q=0.05, hi_q=0.95):
    """Linear-interpolation quantiles of the finite values in `returns`"""
    if not 0 <= lo_q < hi_q <= 1:
        raise DatasetError(f"clip quantiles must satisfy 0 <= lo < hi <= 1, got {lo_q}, {hi_q}")
    values = np.asarray(returns, dtype=np.float64).ravel()
    values = values[np.isfinite(values)]
    if values.size < MIN_CLIP_SAMPLES:
        raise DatasetError(f"need at least {MIN_CLIP_SAMPLES} returns to fit clip bounds, got {values.size}")
    return float(np.quantile(values, lo_q)), float(np.quantile(values, hi_q))


def clip_targets(returns, lo_q=0.05, hi_q=0.95, fit_mask=None, bounds=None):
    """
    Winsorise returns to fitted quantile bounds

    Bounds come from `bounds` when given, otherwise from the entries selected
    by `fit_mask` (all entries when None). NaN stays NaN.
    """
    returns = np.asarray(returns, dtype=np.float64)
    if bounds is None:
        fit_values = returns if fit_mask is None else returns[fit_mask]
        bounds = fit_clip_bounds(fit_values, lo_q, hi_q)
    lo, hi = bounds
    return np.clip(returns, lo, hi)


def zscore_values(values):
    """
    Cross-sectional z-score along axis 1 (symbols) of a T x S or T x S x F array

    Population std over the defined entries; a cross-section with std below
    1e-12 maps every defined entry to 0.
    """
    values = np.asarray(values, dtype=np.float64)
    defined = np.isfinite(values)
    count = defined.sum(axis=1, keepdims=True)
    filled = np.where(defined, values, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = filled.sum(axis=1, keepdims=True) / count
        centred = np.where(defined, values - mean, 0.0)
        std = np.sqrt((centred ** 2).sum(axis=1, keepdims=True) / count)
        z = centred / std
    z = np.where(std < STD_FLOOR, 0.0, z)
    return np.where(defined, z, np.nan)


def zscore_per_day(features):
    return features.with_values(zscore_values(features.values))


@dataclass
class TrainingDataset:
    """
    Flat sample table sorted by date then symbol

    X holds per-day standardised factor values; y the clipped forward return.
    """

    dates: np.ndarray
    symbols: np.ndarray
    X: np.ndarray
    y: np.ndarray
    label_up: np.ndarray
    is_train: np.ndarray
    factor_names: tuple
    cutoff_date: np.datetime64
    clip_bounds: tuple = (np.nan, np.nan)

    def __post_init__(self):
        self.factor_names = tuple(self.factor_names)
        n = len(self.y)
        if self.X.shape != (n, len(self.factor_names)):
            raise DatasetError(f"feature matrix has shape {self.X.shape}, expected {(n, len(self.factor_names))}")

    def __len__(self):
        return len(self.y)

    @property
    def n_features(self):
        return len(self.factor_names)

    def subset(self, mask):
        return TrainingDataset(self.dates[mask], self.symbols[mask], self.X[mask], self.y[mask],
                               self.label_up[mask], self.is_train[mask], self.factor_names,
                               self.cutoff_date, self.clip_bounds)

    def train(self):
        return self.subset(self.is_train)

    def validation(self):
        return self.subset(~self.is_train)

    def select(self, names):
        idx = [self.factor_names.index(n) for n in names]
        return TrainingDataset(self.dates, self.symbols, self.X[:, idx], self.y, self.label_up,
                               self.is_train, tuple(names), self.cutoff_date, self.clip_bounds)

    def counts(self):
        n_train = int(self.is_train.sum())
        return {"train": n_train, "validation": len(self) - n_train}

    def to_frame(self):
        frame = pd.DataFrame({
            "date": np.datetime_as_string(self.dates),
            "symbol": self.symbols,
            "y": self.y,
            "label_up": self.label_up.astype(np.int64),
        })
        for i in range(self.n_features):
            frame[f"f_{i:03d}"] = self.X[:, i]
        return frame

    def export_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
        logger.info("Wrote dataset %s (%s)", path, self.counts())
        return path

    @classmethod
    def load_csv(cls, path, factor_names, cutoff_date):
        """Reload an exported dataset; the split is re-derived from `cutoff_date`"""
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(path.name, path)
        frame = pd.read_csv(path, dtype={"symbol": str}, float_precision="round_trip")
        feature_cols = [c for c in frame.columns if c.startswith("f_")]
        if len(feature_cols) != len(factor_names):
            raise DatasetError(
                f"{path} has {len(feature_cols)} feature columns but {len(factor_names)} factors are configured")
        dates = frame["date"].to_numpy(dtype="datetime64[D]")
        cutoff = np.datetime64(cutoff_date, "D")
        return cls(dates, frame["symbol"].to_numpy(dtype=object), frame[feature_cols].to_numpy(dtype=np.float64),
                   frame["y"].to_numpy(dtype=np.float64), frame["label_up"].to_numpy(dtype=np.float64),
                   dates < cutoff, tuple(factor_names), cutoff)


def split_and_assemble(features, targets, cutoff_date, clip_lo=0.05, clip_hi=0.95, min_peers=2):
    """
    Build the training/validation sample table

    A (date, symbol) cell becomes a sample when every factor and the target
    are finite and at least `min_peers` symbols qualify on that date. Features
    are z-scored per day over the kept samples only. Clip bounds are fitted on
    train targets and applied to both splits.
    """
    dates = features.dates
    cutoff = np.datetime64(cutoff_date, "D")
    if not dates[0] < cutoff <= dates[-1]:
        raise DatasetError(f"cutoff {cutoff} must fall after {dates[0]} and no later than {dates[-1]}")

    targets = np.asarray(targets, dtype=np.float64)
    feature_ok = np.isfinite(features.values).all(axis=2)
    target_ok = np.isfinite(targets)
    dropped = int((target_ok & ~feature_ok).sum())
    if dropped:
        logger.info("Dropped %d samples with missing factor values", dropped)

    valid = feature_ok & target_ok
    thin = valid.sum(axis=1) < min_peers
    if (thin & valid.any(axis=1)).any():
        logger.info("Dropped %d dates with fewer than %d symbols", int((thin & valid.any(axis=1)).sum()), min_peers)
    valid &= ~thin[:, None]

    masked = np.where(valid[:, :, None], features.values, np.nan)
    standardised = zscore_values(masked)

    t_idx, s_idx = np.nonzero(valid)
    is_train = dates[t_idx] < cutoff
    if not is_train.any():
        raise DatasetError(f"no training samples before {cutoff}")
    if is_train.all():
        raise DatasetError(f"no validation samples on or after {cutoff}")

    raw_y = targets[t_idx, s_idx]
    bounds = fit_clip_bounds(raw_y[is_train], clip_lo, clip_hi)
    y = clip_targets(raw_y, bounds=bounds)

    dataset = TrainingDataset(
        dates=dates[t_idx],
        symbols=features.symbols[s_idx],
        X=standardised[t_idx, s_idx],
        y=y,
        label_up=(y > 0).astype(np.float64),
        is_train=is_train,
        factor_names=features.factor_names,
        cutoff_date=cutoff,
        clip_bounds=bounds,
    )
    counts = dataset.counts()
    logger.info("Assembled dataset: %d train, %d validation samples, clip bounds [%.6g, %.6g]",
                counts["train"], counts["validation"], *bounds)
    return dataset
