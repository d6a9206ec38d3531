"""Dataset pipeline walkthrough: CSV bars -> indicators -> feature windows.

Generates a toy two-ticker CSV (the exact format `earnmore data build`
expects), loads it with validation and gap forward-filling, and inspects
the resulting rolling windows.
"""
import datetime as dt
import tempfile
from pathlib import Path

import numpy as np

from earnmore import build_dataset, build_windows, load_ohlcv, parse_splits

rng = np.random.default_rng(0)
start = dt.date(2022, 1, 3)

rows = ["date,ticker,open,high,low,close,volume"]
prices = {"ACME": 50.0, "GLOBX": 120.0}
for day in range(60):
    date = start + dt.timedelta(days=day)
    for ticker, prev in prices.items():
        close = prev * (1 + rng.normal(0.0005, 0.01))
        hi = max(prev, close) * (1 + abs(rng.normal(0, 0.002)))
        lo = min(prev, close) * (1 - abs(rng.normal(0, 0.002)))
        rows.append(f"{date},{ticker},{prev:.4f},{hi:.4f},{lo:.4f},{close:.4f},"
                    f"{rng.integers(1_000, 50_000)}")
        prices[ticker] = close

csv_path = Path(tempfile.mkdtemp()) / "bars.csv"
csv_path.write_text("\n".join(rows) + "\n")
print(f"wrote {len(rows) - 1} bars to {csv_path}")

series = load_ohlcv(csv_path)
print(f"loaded tickers: {sorted(series)} ({len(series['ACME'])} days each)")

splits = parse_splits({"all": [str(start), str(start + dt.timedelta(days=59))]})
dataset = build_dataset(series, window=10, splits=splits)
print(f"feature panel: {dataset.features.shape} (stocks x days x features)")
print(f"feature layout: {dataset.feature_layout}")
print(f"indicators: {', '.join(dataset.indicator_names)}")

windows = list(build_windows(dataset, "all"))
w = windows[0]
print(f"\n{len(windows)} windows of shape {w.features.shape}; "
      f"first ends {w.days[-1]}")
print("normalized closes of window 0 (last day = 1 by construction):")
print(np.round(w.section("prices")[:, :, 3], 4))

out_dir = csv_path.parent / "dataset"
dataset.save(out_dir)
print(f"\nsaved dataset to {out_dir} (manifest.json + features.npy + closes.npy)")
