import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from alphaforge.errors import MissingArtifactError, PanelValidationError

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("date", "symbol", "open", "high", "low", "close", "volume")
FIELDS = ("open", "high", "low", "close", "volume")


@dataclass(frozen=True)
class Bar:
    """One daily OHLCV observation for one symbol"""

    date: np.datetime64
    symbol: str
    open: float
    high: float
    low: float
    close: float
    volume: float

    @property
    def label(self):
        return f"{np.datetime_as_string(np.datetime64(self.date, 'D'))}/{self.symbol}"

    def validate(self):
        if self.high < self.low:
            raise PanelValidationError(f"high < low for {self.label}")
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise PanelValidationError(f"non-positive price for {self.label}")
        if self.high < max(self.open, self.close):
            raise PanelValidationError(f"high below open/close for {self.label}")
        if self.low > min(self.open, self.close):
            raise PanelValidationError(f"low above open/close for {self.label}")
        if self.volume < 0:
            raise PanelValidationError(f"negative volume for {self.label}")


class PricePanel:
    """
    Date x symbol aligned OHLCV matrices
    Immutable after construction: every field array is read-only
    """

    def __init__(self, dates, symbols, fields):
        self.dates = np.asarray(dates, dtype="datetime64[D]")
        self.symbols = np.asarray([str(s) for s in symbols], dtype=object)

        if self.dates.ndim != 1 or len(self.dates) == 0:
            raise PanelValidationError("panel needs at least one date")
        if len(self.dates) > 1 and not np.all(self.dates[1:] > self.dates[:-1]):
            raise PanelValidationError("dates must be strictly increasing without duplicates")
        if len(set(self.symbols)) != len(self.symbols):
            raise PanelValidationError("symbols must be unique")
        if list(self.symbols) != sorted(self.symbols):
            raise PanelValidationError("symbols must be sorted lexicographically")

        shape = (len(self.dates), len(self.symbols))
        self._fields = {}
        for name in FIELDS:
            if name not in fields:
                raise PanelValidationError(f"missing field {name}")
            values = np.array(fields[name], dtype=np.float64)
            if values.shape != shape:
                raise PanelValidationError(f"field {name} has shape {values.shape}, expected {shape}")
            values.setflags(write=False)
            self._fields[name] = values

        self._check_cells()

    @property
    def n_dates(self):
        return len(self.dates)

    @property
    def n_symbols(self):
        return len(self.symbols)

    @property
    def open(self):
        return self._fields["open"]

    @property
    def high(self):
        return self._fields["high"]

    @property
    def low(self):
        return self._fields["low"]

    @property
    def close(self):
        return self._fields["close"]

    @property
    def volume(self):
        return self._fields["volume"]

    def field(self, name):
        try:
            return self._fields[name.lower()]
        except KeyError:
            raise KeyError(f"unknown panel field {name}") from None

    def present(self):
        """Boolean T x S mask of cells carrying a full bar"""
        return np.isfinite(self.close)

    def bar(self, t, s):
        return Bar(self.dates[t], self.symbols[s], *(float(self._fields[f][t, s]) for f in FIELDS))

    def date_position(self, date):
        """Index of the first date >= `date`"""
        return int(np.searchsorted(self.dates, np.datetime64(date, "D")))

    def _check_cells(self):
        finite = np.stack([np.isfinite(self._fields[f]) for f in FIELDS])
        partial = finite.any(axis=0) & ~finite.all(axis=0)
        if partial.any():
            t, s = np.argwhere(partial)[0]
            raise PanelValidationError(f"partially missing bar for {self._cell_label(t, s)}")

        present = finite.all(axis=0)
        o, h, l, c, v = (np.where(present, self._fields[f], 1.0) for f in FIELDS)
        checks = [
            (h < l, "high < low"),
            (np.minimum(np.minimum(o, h), np.minimum(l, c)) <= 0, "non-positive price"),
            (h < np.maximum(o, c), "high below open/close"),
            (l > np.minimum(o, c), "low above open/close"),
            (v < 0, "negative volume"),
        ]
        for bad, reason in checks:
            if bad.any():
                t, s = np.argwhere(bad)[0]
                raise PanelValidationError(f"{reason} for {self._cell_label(t, s)}")

    def _cell_label(self, t, s):
        return f"{np.datetime_as_string(self.dates[t])}/{self.symbols[s]}"

    def to_frame(self):
        """Long-form frame of present cells, sorted by date then symbol"""
        t_idx, s_idx = np.nonzero(self.present())
        frame = pd.DataFrame({
            "date": np.datetime_as_string(self.dates[t_idx]),
            "symbol": self.symbols[s_idx],
        })
        for name in FIELDS:
            frame[name] = self._fields[name][t_idx, s_idx]
        return frame

    def export_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, columns=list(CSV_COLUMNS), lineterminator="\n")
        logger.info("Wrote panel %s (%d dates x %d symbols)", path, self.n_dates, self.n_symbols)
        return path

    def equals(self, other):
        if not isinstance(other, PricePanel):
            return False
        if not np.array_equal(self.dates, other.dates) or list(self.symbols) != list(other.symbols):
            return False
        return all(np.array_equal(self._fields[f], other._fields[f], equal_nan=True) for f in FIELDS)

    @classmethod
    def from_frame(cls, frame):
        """Pivot a long-form frame (one row per bar) onto the union of dates"""
        dup = frame.duplicated(subset=["date", "symbol"])
        if dup.any():
            row = frame[dup].iloc[0]
            raise PanelValidationError(
                f"duplicate bar for {np.datetime_as_string(np.datetime64(row['date'], 'D'))}/{row['symbol']}")

        dates = np.unique(frame["date"].to_numpy(dtype="datetime64[D]"))
        symbols = np.array(sorted(set(frame["symbol"])), dtype=object)
        t_idx = np.searchsorted(dates, frame["date"].to_numpy(dtype="datetime64[D]"))
        s_pos = {sym: i for i, sym in enumerate(symbols)}
        s_idx = np.array([s_pos[sym] for sym in frame["symbol"]], dtype=np.int64)

        fields = {}
        for name in FIELDS:
            values = np.full((len(dates), len(symbols)), np.nan)
            values[t_idx, s_idx] = frame[name].to_numpy(dtype=np.float64)
            fields[name] = values
        return cls(dates, symbols, fields)

    def __repr__(self):
        return (f"PricePanel({self.n_dates} dates {self.dates[0]}..{self.dates[-1]}, "
                f"{self.n_symbols} symbols, {int(self.present().sum())} bars)")


def load_csv(path):
    """Load a `date,symbol,open,high,low,close,volume` file into a PricePanel"""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path.name, path)

    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise PanelValidationError(f"{path} is empty") from None
    except pd.errors.ParserError as exc:
        raise PanelValidationError(f"malformed row in {path}: {exc}") from None

    if tuple(raw.columns) != CSV_COLUMNS:
        raise PanelValidationError(
            f"{path} header must be {','.join(CSV_COLUMNS)}, got {','.join(map(str, raw.columns))}")

    parsed = pd.DataFrame({"symbol": raw["symbol"]})
    bad = raw.isna().any(axis=1) | (raw == "").any(axis=1)
    parsed["date"] = pd.to_datetime(raw["date"], format="%Y-%m-%d", errors="coerce")
    bad |= parsed["date"].isna()
    for name in FIELDS:
        parsed[name] = pd.to_numeric(raw[name], errors="coerce")
        bad |= ~np.isfinite(parsed[name].to_numpy(dtype=np.float64))

    if bad.any():
        # header is line 1
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        raise PanelValidationError(f"malformed row at line {line} of {path}")

    panel = PricePanel.from_frame(parsed)
    logger.info("Loaded %s from %s", panel, path)
    return panel
