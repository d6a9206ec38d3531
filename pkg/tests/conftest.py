import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # expose oracles.py

from earnmore.marketdata import build_dataset, load_ohlcv, parse_splits

CSV_HEADER = "date,ticker,open,high,low,close,volume"


def write_csv(path: Path, rows: list[str]) -> Path:
    path.write_text("\n".join([CSV_HEADER, *rows]) + "\n")
    return path


def random_walk_rows(tickers, n_days, seed=0, start=dt.date(2020, 1, 1),
                     drift=0.0005, vol=0.01):
    """Geometric-random-walk bars, one row per (day, ticker)."""
    rng = np.random.default_rng(seed)
    rows = []
    closes = {t: 50.0 + 10.0 * i for i, t in enumerate(tickers)}
    for d in range(n_days):
        date = start + dt.timedelta(days=d)
        for t in tickers:
            prev = closes[t]
            close = prev * (1.0 + drift + vol * rng.standard_normal())
            close = max(close, 1.0)
            o = prev
            hi = max(o, close) * (1.0 + abs(0.2 * vol * rng.standard_normal()))
            lo = min(o, close) * (1.0 - abs(0.2 * vol * rng.standard_normal()))
            rows.append(f"{date.isoformat()},{t},{o:.6f},{hi:.6f},{lo:.6f},"
                        f"{close:.6f},{int(rng.integers(1000, 9999))}")
            closes[t] = close
    return rows


def drift_market_rows(n_days, start=dt.date(2020, 1, 1),
                      drift_ticker="UPUP", flat_tickers=("AAA", "BBB", "CCC"),
                      drift=0.001):
    """One deterministic-drift stock, the rest flat at constant prices."""
    rows = []
    c_drift = 100.0
    for d in range(n_days):
        date = start + dt.timedelta(days=d)
        rows.append(f"{date.isoformat()},{drift_ticker},{c_drift:.8f},"
                    f"{c_drift:.8f},{c_drift:.8f},{c_drift:.8f},1000")
        for i, t in enumerate(flat_tickers):
            p = 50.0 + 10.0 * i
            rows.append(f"{date.isoformat()},{t},{p},{p},{p},{p},1000")
        c_drift *= 1.0 + drift
    return rows


def build_from_rows(tmp_path: Path, rows, window=10, splits=None,
                    name="bars.csv"):
    csv_path = write_csv(tmp_path / name, rows)
    series = load_ohlcv(csv_path)
    if splits is None:
        dates = sorted({r.split(",")[0] for r in rows})
        splits = parse_splits({"all": [dates[0], dates[-1]]})
    return build_dataset(series, window=window, splits=splits)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """4 random-walk tickers, 170 days, train/test splits."""
    tmp = tmp_path_factory.mktemp("smalldata")
    rows = random_walk_rows(["AAA", "BBB", "CCC", "DDD"], 170, seed=7)
    start = dt.date(2020, 1, 1)
    splits = parse_splits({
        "train": [start.isoformat(), (start + dt.timedelta(days=129)).isoformat()],
        "test": [(start + dt.timedelta(days=130)).isoformat(),
                 (start + dt.timedelta(days=169)).isoformat()],
    })
    return build_from_rows(tmp, rows, window=10, splits=splits)


@pytest.fixture(scope="session")
def drift_dataset(tmp_path_factory):
    """Synthetic 4-stock market: one +0.1%/step drift asset, three flat."""
    tmp = tmp_path_factory.mktemp("driftdata")
    rows = drift_market_rows(190)
    start = dt.date(2020, 1, 1)
    splits = parse_splits({
        "train": [start.isoformat(), (start + dt.timedelta(days=149)).isoformat()],
        "test": [(start + dt.timedelta(days=150)).isoformat(),
                 (start + dt.timedelta(days=189)).isoformat()],
    })
    return build_from_rows(tmp, rows, window=10, splits=splits)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
