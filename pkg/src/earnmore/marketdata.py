"""OHLCV ingestion, technical indicators, and rolling feature windows.

The dataset pipeline is: CSV bars -> per-ticker validated series aligned to
a trading calendar (gaps forward-filled and flagged) -> a feature panel of
raw OHLC, twelve technical indicators, and three calendar categories ->
rolling windows of ``window`` days with per-window price normalization
(each stock's OHLC divided by its close on the window's last day).

Indicator values need ten prior days to warm up, so the feature panel
starts ten calendar days into the loaded data; warm-up consumes days before
a split boundary rather than shrinking the split.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INDICATOR_NAMES = (
    "ret_1", "ret_5", "ret_10",
    "ma_5_ratio", "ma_10_ratio",
    "ret_std_5", "ret_std_10",
    "hl_spread", "co_spread", "hc_spread", "cl_spread",
    "max_10_ratio",
)
WARMUP_DAYS = 10
N_PRICE_FEATURES = 4   # normalized open, high, low, close
N_TEMPORAL_FEATURES = 3  # day_of_week 0-6, day_of_month 1-31, month 1-12

MAX_MISSING_FRACTION = 0.10


class MarketDataError(ValueError):
    """Raised for malformed input files or invariant violations."""


@dataclass(frozen=True)
class OhlcvBar:
    date: dt.date
    ticker: str
    open: float
    high: float
    low: float
    close: float
    volume: float
    filled: bool = False

    def validate(self) -> None:
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise MarketDataError(
                f"{self.ticker} {self.date}: non-positive price")
        if self.volume < 0:
            raise MarketDataError(f"{self.ticker} {self.date}: negative volume")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise MarketDataError(
                f"{self.ticker} {self.date}: low/high bounds violated "
                f"(o={self.open} h={self.high} l={self.low} c={self.close})")


@dataclass(frozen=True)
class TemporalFeatures:
    day_of_week: int
    day_of_month: int
    month: int

    @classmethod
    def from_date(cls, d: dt.date) -> "TemporalFeatures":
        return cls(day_of_week=d.weekday(), day_of_month=d.day, month=d.month)


@dataclass
class FeatureWindow:
    """An N x D x F slice of market history ending on ``days[-1]``.

    Price channels are normalized so each stock's last close is 1.
    ``feature_layout`` maps section name -> (start, stop) column slice.
    """
    tickers: list[str]
    days: list[dt.date]
    features: np.ndarray
    feature_layout: dict[str, tuple[int, int]]

    def section(self, name: str) -> np.ndarray:
        lo, hi = self.feature_layout[name]
        return self.features[:, :, lo:hi]


def load_ohlcv(path: str | Path, calendar: list[dt.date] | None = None
               ) -> dict[str, list[OhlcvBar]]:
    """Parse the input CSV into validated per-ticker bar series.

    Expected header: ``date,ticker,open,high,low,close,volume`` with
    ISO-8601 dates. Bars are grouped by ticker and sorted by date. Tickers
    missing days relative to the calendar are forward-filled at the prior
    close (flagged via ``filled``); tickers missing more than 10% of the
    calendar, or whose first bar is after the calendar start, are dropped.
    """
    path = Path(path)
    if not path.exists():
        raise MarketDataError(f"input file not found: {path}")
    # Tickers whose first bar postdates the calendar start cannot be
    # forward-filled and are dropped here; the >10% missing-day drop rule
    # applies at dataset build, where fill counts are known.
    by_ticker: dict[str, dict[dt.date, OhlcvBar]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["date", "ticker", "open", "high", "low", "close", "volume"]:
            raise MarketDataError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                raise MarketDataError(f"{path}:{lineno}: expected 7 fields, got {len(row)}")
            try:
                bar = OhlcvBar(
                    date=dt.date.fromisoformat(row[0]),
                    ticker=row[1],
                    open=float(row[2]), high=float(row[3]),
                    low=float(row[4]), close=float(row[5]),
                    volume=float(row[6]),
                )
            except (ValueError, TypeError) as exc:
                raise MarketDataError(f"{path}:{lineno}: parse error: {exc}") from exc
            bar.validate()
            series = by_ticker.setdefault(bar.ticker, {})
            if bar.date in series:
                raise MarketDataError(
                    f"{path}:{lineno}: duplicate bar for ({bar.ticker}, {bar.date})")
            series[bar.date] = bar

    if not by_ticker:
        raise MarketDataError(f"{path}: no data rows")
    if calendar is None:
        calendar = sorted({d for s in by_ticker.values() for d in s})
    else:
        calendar = sorted(calendar)

    out: dict[str, list[OhlcvBar]] = {}
    for ticker, series in by_ticker.items():
        if min(series) > calendar[0]:
            continue
        bars: list[OhlcvBar] = []
        prev: OhlcvBar | None = None
        for d in calendar:
            bar = series.get(d)
            if bar is None:
                assert prev is not None
                bar = OhlcvBar(date=d, ticker=ticker, open=prev.close,
                               high=prev.close, low=prev.close,
                               close=prev.close, volume=0.0, filled=True)
            bars.append(bar)
            prev = bar
        out[ticker] = bars
    if not out:
        raise MarketDataError("all tickers dropped by the missing-data rule")
    return out


def _rolling_stat(values: np.ndarray, k: int, fn) -> np.ndarray:
    """Trailing k-window statistic along the last axis (valid from index k-1)."""
    out = np.zeros_like(values)
    for t in range(values.shape[-1]):
        lo = max(0, t - k + 1)
        out[..., t] = fn(values[..., lo : t + 1])
    return out


def compute_indicator_panel(opens: np.ndarray, highs: np.ndarray,
                            lows: np.ndarray, closes: np.ndarray,
                            names: tuple[str, ...] = INDICATOR_NAMES) -> np.ndarray:
    """Indicator values over a (N, T) price panel, shape (N, T, K).

    k-day returns are zero-filled where fewer than k prior closes exist;
    entries before the warm-up boundary (t < 10) are not meaningful and are
    excluded by the dataset builder.
    """
    n, t = closes.shape
    ret1 = np.zeros_like(closes)
    ret1[:, 1:] = closes[:, 1:] / closes[:, :-1] - 1.0

    def kday_return(k):
        out = np.zeros_like(closes)
        out[:, k:] = closes[:, k:] / closes[:, :-k] - 1.0
        return out

    cols: dict[str, np.ndarray] = {}
    cols["ret_1"] = ret1
    cols["ret_5"] = kday_return(5)
    cols["ret_10"] = kday_return(10)
    cols["ma_5_ratio"] = _rolling_stat(closes, 5, lambda w: w.mean(axis=-1)) / closes
    cols["ma_10_ratio"] = _rolling_stat(closes, 10, lambda w: w.mean(axis=-1)) / closes
    cols["ret_std_5"] = _rolling_stat(ret1, 5, lambda w: w.std(axis=-1))
    cols["ret_std_10"] = _rolling_stat(ret1, 10, lambda w: w.std(axis=-1))
    cols["hl_spread"] = (highs - lows) / opens
    cols["co_spread"] = (closes - opens) / opens
    cols["hc_spread"] = (highs - closes) / opens
    cols["cl_spread"] = (closes - lows) / opens
    cols["max_10_ratio"] = _rolling_stat(closes, 10, lambda w: w.max(axis=-1)) / closes
    return np.stack([cols[name] for name in names], axis=-1)


def compute_indicators(bars: list[OhlcvBar],
                       names: tuple[str, ...] = INDICATOR_NAMES):
    """Per-day indicator vectors for one ticker, from the warm-up boundary on.

    Returns (dates, values) where values has shape (len(bars) - 10, K).
    """
    if len(bars) <= WARMUP_DAYS:
        raise MarketDataError(
            f"series of length {len(bars)} is shorter than the "
            f"{WARMUP_DAYS + 1} days needed for indicator warm-up")
    unknown = [n for n in names if n not in INDICATOR_NAMES]
    if unknown:
        raise MarketDataError(f"unknown indicators: {unknown}")
    o = np.array([[b.open for b in bars]])
    h = np.array([[b.high for b in bars]])
    l = np.array([[b.low for b in bars]])
    c = np.array([[b.close for b in bars]])
    panel = compute_indicator_panel(o, h, l, c, names)[0]
    dates = [b.date for b in bars[WARMUP_DAYS:]]
    values = panel[WARMUP_DAYS:]
    if not np.all(np.isfinite(values)):
        raise MarketDataError("non-finite indicator values after warm-up")
    return dates, values


@dataclass
class MarketDataset:
    """Aligned feature panel plus the raw closes needed for accounting.

    ``features`` covers the indicator-valid days only (shape N x T x F with
    raw OHLC in the price channels; windows normalize on slicing);
    ``closes`` covers the full calendar, offset by ``valid_offset``.
    """
    tickers: list[str]
    calendar: list[dt.date]
    valid_offset: int
    features: np.ndarray
    closes: np.ndarray
    window: int
    feature_layout: dict[str, tuple[int, int]]
    indicator_names: tuple[str, ...]
    splits: dict[str, tuple[dt.date, dt.date]]
    filled_days: dict[str, int] = field(default_factory=dict)

    @property
    def n_stocks(self) -> int:
        return len(self.tickers)

    @property
    def n_features(self) -> int:
        return self.features.shape[2]

    @property
    def valid_dates(self) -> list[dt.date]:
        return self.calendar[self.valid_offset:]

    def close_at(self, valid_index: int) -> np.ndarray:
        """Raw closes (N,) on feature day ``valid_index``."""
        return self.closes[:, valid_index + self.valid_offset]

    def window_at(self, valid_index: int) -> FeatureWindow:
        d = self.window
        if valid_index < d - 1 or valid_index >= self.features.shape[1]:
            raise MarketDataError(f"no full window ends at day index {valid_index}")
        feats = self.features[:, valid_index - d + 1 : valid_index + 1, :].copy()
        last_close = feats[:, -1, 3].copy()
        feats[:, :, :N_PRICE_FEATURES] /= last_close[:, None, None]
        return FeatureWindow(
            tickers=self.tickers,
            days=self.valid_dates[valid_index - d + 1 : valid_index + 1],
            features=feats,
            feature_layout=self.feature_layout,
        )

    def split_indices(self, split: str) -> list[int]:
        """Feature-day indices of the windows belonging to a split."""
        if split not in self.splits:
            raise MarketDataError(f"unknown split {split!r}; have {sorted(self.splits)}")
        start, end = self.splits[split]
        dates = self.valid_dates
        idx = [t for t, day in enumerate(dates)
               if start <= day <= end and t >= self.window - 1]
        if not idx:
            raise MarketDataError(
                f"split {split!r} ({start}..{end}) is outside data coverage "
                f"{dates[self.window - 1]}..{dates[-1]}")
        return idx

    def ticker_index(self, ticker: str) -> int:
        try:
            return self.tickers.index(ticker)
        except ValueError:
            raise MarketDataError(f"unknown ticker {ticker!r}") from None

    # -- persistence ----------------------------------------------------

    def manifest(self) -> dict:
        return {
            "tickers": self.tickers,
            "calendar_range": [self.calendar[0].isoformat(), self.calendar[-1].isoformat()],
            "n_days": len(self.calendar),
            "valid_offset": self.valid_offset,
            "window": self.window,
            "n_features": self.n_features,
            "feature_layout": {k: list(v) for k, v in self.feature_layout.items()},
            "indicator_names": list(self.indicator_names),
            "splits": {k: [a.isoformat(), b.isoformat()] for k, (a, b) in self.splits.items()},
            "filled_days": self.filled_days,
        }

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        np.save(out / "features.npy", self.features)
        np.save(out / "closes.npy", self.closes)
        (out / "calendar.json").write_text(
            json.dumps([d.isoformat() for d in self.calendar]))
        (out / "manifest.json").write_text(json.dumps(self.manifest(), indent=2))

    @classmethod
    def load(cls, in_dir: str | Path) -> "MarketDataset":
        src = Path(in_dir)
        man = json.loads((src / "manifest.json").read_text())
        calendar = [dt.date.fromisoformat(s) for s in json.loads((src / "calendar.json").read_text())]
        return cls(
            tickers=list(man["tickers"]),
            calendar=calendar,
            valid_offset=int(man["valid_offset"]),
            features=np.load(src / "features.npy"),
            closes=np.load(src / "closes.npy"),
            window=int(man["window"]),
            feature_layout={k: (v[0], v[1]) for k, v in man["feature_layout"].items()},
            indicator_names=tuple(man["indicator_names"]),
            splits={k: (dt.date.fromisoformat(a), dt.date.fromisoformat(b))
                    for k, (a, b) in man["splits"].items()},
            filled_days=dict(man.get("filled_days", {})),
        )


def build_dataset(series: dict[str, list[OhlcvBar]], window: int,
                  splits: dict[str, tuple[dt.date, dt.date]],
                  indicator_names: tuple[str, ...] = INDICATOR_NAMES) -> MarketDataset:
    """Assemble the aligned feature panel from loaded bar series.

    Tickers with more than 10% forward-filled days are dropped here.
    """
    series = {t: bars for t, bars in series.items()
              if sum(b.filled for b in bars) <= MAX_MISSING_FRACTION * len(bars)}
    if not series:
        raise MarketDataError("all tickers dropped by the missing-data rule")
    tickers = sorted(series)
    calendar = [b.date for b in series[tickers[0]]]
    for t in tickers:
        if [b.date for b in series[t]] != calendar:
            raise MarketDataError(f"ticker {t} is not aligned to the shared calendar")
    if len(calendar) <= WARMUP_DAYS + window:
        raise MarketDataError(
            f"need more than {WARMUP_DAYS + window} aligned days "
            f"(warm-up {WARMUP_DAYS} + window {window}), got {len(calendar)}")

    o = np.array([[b.open for b in series[t]] for t in tickers])
    h = np.array([[b.high for b in series[t]] for t in tickers])
    l = np.array([[b.low for b in series[t]] for t in tickers])
    c = np.array([[b.close for b in series[t]] for t in tickers])
    indicators = compute_indicator_panel(o, h, l, c, indicator_names)

    temporal = np.array([[d.weekday(), d.day, d.month] for d in calendar], dtype=float)

    n, t_cal = c.shape
    k = len(indicator_names)
    n_feat = N_PRICE_FEATURES + k + N_TEMPORAL_FEATURES
    feats = np.empty((n, t_cal - WARMUP_DAYS, n_feat))
    prices = np.stack([o, h, l, c], axis=-1)
    feats[:, :, :N_PRICE_FEATURES] = prices[:, WARMUP_DAYS:, :]
    feats[:, :, N_PRICE_FEATURES : N_PRICE_FEATURES + k] = indicators[:, WARMUP_DAYS:, :]
    feats[:, :, N_PRICE_FEATURES + k :] = temporal[None, WARMUP_DAYS:, :]
    if not np.all(np.isfinite(feats)):
        raise MarketDataError("non-finite feature values after warm-up")

    layout = {
        "prices": (0, N_PRICE_FEATURES),
        "indicators": (N_PRICE_FEATURES, N_PRICE_FEATURES + k),
        "temporal": (N_PRICE_FEATURES + k, n_feat),
    }
    filled = {t: sum(1 for b in series[t] if b.filled) for t in tickers}
    return MarketDataset(
        tickers=tickers, calendar=calendar, valid_offset=WARMUP_DAYS,
        features=feats, closes=c, window=window, feature_layout=layout,
        indicator_names=tuple(indicator_names), splits=dict(splits),
        filled_days=filled,
    )


def build_windows(dataset: MarketDataset, split: str):
    """Yield the FeatureWindow stream of a split in date order."""
    for t in dataset.split_indices(split):
        yield dataset.window_at(t)


def parse_splits(obj: dict) -> dict[str, tuple[dt.date, dt.date]]:
    """Parse {"name": ["iso-start", "iso-end"], ...} into date tuples."""
    out = {}
    for name, (a, b) in obj.items():
        start, end = dt.date.fromisoformat(a), dt.date.fromisoformat(b)
        if end < start:
            raise MarketDataError(f"split {name!r}: end {end} before start {start}")
        out[name] = (start, end)
    return out
