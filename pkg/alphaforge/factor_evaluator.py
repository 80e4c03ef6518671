import logging
import operator
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from alphaforge import indicators
from alphaforge.alpha_parser import is_indicator
from alphaforge.errors import FactorReferenceError
from alphaforge.expr import BinaryOp, Call, Column, Constant, FactorRef, Indicator, Negate
from alphaforge.indicators import IndicatorParams

logger = logging.getLogger(__name__)

_ARITHMETIC = {"+": operator.add, "-": operator.sub, "*": operator.mul}
_COMPARE = {"<": operator.lt, ">": operator.gt, "<=": operator.le, ">=": operator.ge}


@dataclass
class FeatureFrame:
    """Evaluated factors as a T x S x F tensor, factor axis in file order"""

    dates: np.ndarray
    symbols: np.ndarray
    factor_names: tuple
    values: np.ndarray

    def __post_init__(self):
        self.factor_names = tuple(self.factor_names)
        expected = (len(self.dates), len(self.symbols), len(self.factor_names))
        if self.values.shape != expected:
            raise ValueError(f"feature values have shape {self.values.shape}, expected {expected}")

    @property
    def n_factors(self):
        return len(self.factor_names)

    def factor(self, name):
        return self.values[:, :, self.factor_names.index(name)]

    def select(self, names):
        idx = [self.factor_names.index(n) for n in names]
        return FeatureFrame(self.dates, self.symbols, tuple(names), self.values[:, :, idx])

    def with_values(self, values):
        return FeatureFrame(self.dates, self.symbols, self.factor_names, values)

    def to_frame(self, mask=None):
        """Long-form frame `date,symbol,<factor...>` for cells in `mask` (default: all)"""
        if mask is None:
            mask = np.ones(self.values.shape[:2], dtype=bool)
        t_idx, s_idx = np.nonzero(mask)
        frame = pd.DataFrame({
            "date": np.datetime_as_string(self.dates[t_idx]),
            "symbol": self.symbols[s_idx],
        })
        cells = self.values[t_idx, s_idx]
        for i, name in enumerate(self.factor_names):
            frame[name] = cells[:, i]
        return frame

    def export_csv(self, path, mask=None):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame(mask).to_csv(path, index=False, lineterminator="\n")
        logger.info("Wrote %d factors to %s", self.n_factors, path)
        return path


class FactorEvaluator:
    """
    Evaluates factor expressions on one panel

    Indicator series and function calls are cached by node, so a
    subexpression shared by several factors is computed once per panel.
    Unstabilised divisions by zero produce NaN and are counted per factor.
    """

    def __init__(self, panel, params=None):
        self.panel = panel
        self.params = params or IndicatorParams()
        self.params.validate()
        self.shape = (panel.n_dates, panel.n_symbols)
        self.zero_divisions = defaultdict(int)
        self._cache = {}
        self._factor_values = {}
        self._current = None

    def evaluate(self, definition, factor_set=None):
        """T x S values of one definition; referenced factors come from `factor_set`"""
        if definition.name in self._factor_values:
            return self._factor_values[definition.name]
        if factor_set is not None:
            for name in factor_set.dependency_order():
                if name in factor_set.dependencies(definition.name):
                    self.evaluate(factor_set[name], factor_set)
        previous, self._current = self._current, definition.name
        try:
            values = np.broadcast_to(self._eval(definition.expression), self.shape).astype(np.float64)
        finally:
            self._current = previous
        # inf only arises from overflow; treat it as undefined
        values[~np.isfinite(values)] = np.nan
        self._factor_values[definition.name] = values
        return values

    def evaluate_all(self, factor_set):
        for name in factor_set.dependency_order():
            self.evaluate(factor_set[name])
        values = np.stack([self._factor_values[name] for name in factor_set.names], axis=-1)
        frame = FeatureFrame(self.panel.dates, self.panel.symbols, factor_set.names, values)
        logger.info("Evaluated %d factors on %d dates x %d symbols",
                    frame.n_factors, self.panel.n_dates, self.panel.n_symbols)
        return frame

    def report(self, frame):
        """Per-factor defined-cell ratio and zero-division count"""
        present = self.panel.present()
        n_present = max(int(present.sum()), 1)
        rows = []
        for i, name in enumerate(frame.factor_names):
            defined = np.isfinite(frame.values[:, :, i]) & present
            rows.append({
                "factor": name,
                "defined_ratio": defined.sum() / n_present,
                "zero_divisions": self.zero_divisions.get(name, 0),
            })
        return pd.DataFrame(rows, columns=["factor", "defined_ratio", "zero_divisions"])

    def _eval(self, node):
        if isinstance(node, Constant):
            return node.value
        if isinstance(node, Column):
            return self.panel.field(node.name)
        if isinstance(node, FactorRef):
            try:
                return self._factor_values[node.name]
            except KeyError:
                raise FactorReferenceError(
                    f"{self._current} references {node.name}, which is not evaluated; pass its factor set") from None
        if isinstance(node, Negate):
            return -1.0 * self._eval(node.operand)
        if isinstance(node, BinaryOp):
            return self._binary(node)
        if isinstance(node, (Indicator, Call)):
            if node not in self._cache:
                self._cache[node] = self._compute(node)
            return self._cache[node]
        raise TypeError(f"cannot evaluate {node!r}")

    def _binary(self, node):
        left = self._eval(node.left)
        right = self._eval(node.right)
        if node.op in _ARITHMETIC:
            return _ARITHMETIC[node.op](left, right)
        if node.op == "/":
            return self._divide(left, right)
        left, right = np.broadcast_arrays(np.asarray(left, dtype=np.float64), np.asarray(right, dtype=np.float64))
        missing = np.isnan(left) | np.isnan(right)
        if node.op == "&":
            result = ((left != 0) & (right != 0)).astype(np.float64)
        else:
            result = _COMPARE[node.op](left, right).astype(np.float64)
        result[missing] = np.nan
        return result

    def _divide(self, numerator, denominator):
        numerator, denominator = np.broadcast_arrays(
            np.asarray(numerator, dtype=np.float64), np.asarray(denominator, dtype=np.float64))
        zero = denominator == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            result = numerator / denominator
        if zero.any():
            self.zero_divisions[self._current] += int(zero.sum())
            result = np.where(zero, np.nan, result)
        return result

    def _compute(self, node):
        panel, params = self.panel, self.params
        if isinstance(node, Indicator):
            name = node.name
            if name == "vwap":
                return indicators.rolling_vwap(panel.high, panel.low, panel.close, panel.volume,
                                               params.vwap_window)
            if name == "macd_diff":
                return indicators.macd_diff(panel.close, params.macd_fast, params.macd_slow, params.macd_signal)
            if name == "rsi_14":
                return indicators.rsi(panel.close, params.rsi_window)
            if name.startswith("boll_"):
                mid, upper, lower = indicators.bollinger(panel.close, params.boll_window, params.boll_k)
                return {"boll_mid": mid, "boll_upper": upper, "boll_lower": lower}[name]
            if is_indicator(name):
                return indicators.sma(panel.close, int(name[2:]))
            raise KeyError(f"unknown indicator {name}")

        func, args = node.func, node.args
        if func == "adv":
            return indicators.sma(panel.volume, int(args[0].value))
        x = np.broadcast_to(self._eval(args[0]), self.shape)
        if func == "rank":
            return indicators.cross_rank_rows(x)
        if func == "std":
            return indicators.rolling_std(x, int(args[1].value))
        if func in ("ma", "sma"):
            return indicators.sma(x, int(args[1].value))
        if func == "shift":
            return indicators.shift(x, int(args[1].value))
        if func == "diff":
            return indicators.diff(x)
        if func == "sign":
            return indicators.sign(x)
        if func == "I":
            return np.array(x, dtype=np.float64)
        raise KeyError(f"unknown function {func}")


def evaluate(definition, panel, factor_set=None, params=None):
    return FactorEvaluator(panel, params).evaluate(definition, factor_set)


def evaluate_all(factor_set, panel, params=None):
    return FactorEvaluator(panel, params).evaluate_all(factor_set)
