import logging

import numpy as np

from alphaforge.errors import ConfigError, FactorMismatchError, NumericalError
from alphaforge.evalkit import SignalFrame
from alphaforge.indicators import cross_rank

logger = logging.getLogger(__name__)

SIGNAL_MODES = ("reg", "cls", "mean")


def align_features(checkpoint, X, factor_names):
    """Reorder the columns of X to the checkpoint's factor order, matching by name"""
    factor_names = list(factor_names)
    expected = list(checkpoint.factor_names)
    if sorted(factor_names) != sorted(expected):
        missing = sorted(set(expected) - set(factor_names))
        extra = sorted(set(factor_names) - set(expected))
        raise FactorMismatchError(
            f"features do not match the checkpoint factors (missing: {missing or 'none'}, unexpected: {extra or 'none'})")
    return np.asarray(X, dtype=np.float64)[:, [factor_names.index(name) for name in expected]]


def _per_date_rank(values, dates):
    out = np.empty(len(values))
    for date in np.unique(dates):
        mask = dates == date
        out[mask] = cross_rank(values[mask])
    return out


def score(checkpoint, features, signal="reg"):
    """
    Score every sample of `features` (anything with dates, symbols, X, factor_names)

    signal = reg uses the regression output, cls the up-probability, and mean
    averages their per-date ranks.
    """
    if signal not in SIGNAL_MODES:
        raise ConfigError(f"signal must be one of {', '.join(SIGNAL_MODES)}, got {signal}")
    model = checkpoint.build_model()
    X = align_features(checkpoint, features.X, features.factor_names)
    if signal != "reg" and checkpoint.model_kind != "mlp":
        raise ConfigError(f"signal = {signal} needs the dual-task mlp, checkpoint holds {checkpoint.model_kind}")

    if signal == "reg":
        scores = model.predict(X)
    elif signal == "cls":
        scores = model.predict_proba(X)
    else:
        scores = 0.5 * (_per_date_rank(model.predict(X), features.dates)
                        + _per_date_rank(model.predict_proba(X), features.dates))

    if not np.all(np.isfinite(scores)):
        raise NumericalError("model produced non-finite scores")
    logger.info("Scored %d samples with the %s model (%s signal)", len(scores), checkpoint.model_kind, signal)
    return SignalFrame(features.dates, features.symbols, scores)
