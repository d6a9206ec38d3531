"""Desk-scale end to end: train on a synthetic market, then backtest.

The market has one stock drifting +0.1% per step and three flat stocks, so
a working agent should concentrate on the drifter when it is in the pool
and retreat to cash when an investor masks it out. Takes a minute or two.
"""
import datetime as dt
import tempfile
from pathlib import Path

import numpy as np

from earnmore import (PoolEvent, TrainConfig, backtest, build_dataset,
                      load_ohlcv, parse_splits, run_baseline, train)

start = dt.date(2022, 1, 3)
rows = ["date,ticker,open,high,low,close,volume"]
drift_price = 100.0
for day in range(190):
    date = start + dt.timedelta(days=day)
    rows.append(f"{date},WINNR,{drift_price:.8f},{drift_price:.8f},"
                f"{drift_price:.8f},{drift_price:.8f},1000")
    for i, t in enumerate(("AAA", "BBB", "CCC")):
        p = 50.0 + 10 * i
        rows.append(f"{date},{t},{p},{p},{p},{p},1000")
    drift_price *= 1.001
path = Path(tempfile.mkdtemp()) / "bars.csv"
path.write_text("\n".join(rows) + "\n")

dataset = build_dataset(load_ohlcv(path), window=10, splits=parse_splits({
    "train": [str(start), str(start + dt.timedelta(days=149))],
    "test": [str(start + dt.timedelta(days=150)), str(start + dt.timedelta(days=189))],
}))
print(f"dataset: {dataset.tickers}, train/test splits ready")

config = TrainConfig(
    episodes=120, batch_size=64, horizon=64,
    lr=1e-3, warmup_episodes=10, warmup_start_lr=1e-5,
    decay_points=(90,), decay_factor=0.3,
    gamma=0.9, temperature=1.0, lambda_mask=1.0,
    mask_mu=0.4, mask_sigma=0.25, mask_a=0.05, mask_b=0.8,
    seed=0, capacity=20_000, warm_start_steps=500,
    embed_dim=32, hidden_dim=32, reward_scale=300.0, alpha_init=0.01,
)
print(f"training {config.episodes} episodes x {config.horizon} steps ...")
result = train(dataset, config)
last = result.log[-1]
print(f"done: {len(result.log)} gradient steps, "
      f"j_q={last['j_q']:.3e}, j_recon={last['j_recon']:.3e}, "
      f"alpha={last['alpha']:.2e}")

agent = backtest(result.params, dataset, "test", temperature=config.temperature)
market = run_baseline("market", dataset, "test")
print("\nmean test-split weights (cash first, then "
      f"{dataset.tickers}):\n  {np.round(agent.weights.mean(axis=0), 4)}")
for name, res in (("agent", agent), ("market", market)):
    m = res.metrics_or_partial(split="test", strategy=name)
    print(f"{name:>8}: arr={m.arr:+.4f} mdd={m.mdd:.4f}")

# now the investor removes the winner mid-run: allocation must retreat
dates = [dataset.valid_dates[i] for i in dataset.split_indices("test")]
events = [PoolEvent(date=dates[10], remove=("WINNR",))]
steered = backtest(result.params, dataset, "test", pool_events=events,
                   temperature=config.temperature)
slot = 1 + dataset.ticker_index("WINNR")
print(f"\nweight on the drifter before its removal: "
      f"{steered.weights[:10, slot].mean():.4f}")
print(f"weight on the drifter after removal at step 10: "
      f"{steered.weights[10:, slot].mean():.6f}")
