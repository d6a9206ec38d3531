"""Portfolio accounting in the trading environment.

Shows the value-evolution identity V' = V * (1 + sum_i w_i * ret_i), the
all-cash invariance, reward telescoping, and a manual cross-check against
explicit per-asset currency positions.
"""
import datetime as dt
import tempfile
from pathlib import Path

import numpy as np

from earnmore import (PoolMask, PortfolioEnv, PortfolioVector, build_dataset,
                      load_ohlcv, parse_splits)

# three stocks with different deterministic daily growth so returns are known
start = dt.date(2022, 1, 3)
rows = ["date,ticker,open,high,low,close,volume"]
prices = {"SLOW": 100.0, "FLAT": 100.0, "FAST": 100.0}
growth = {"SLOW": 0.999, "FLAT": 1.0, "FAST": 1.002}
for day in range(40):
    date = start + dt.timedelta(days=day)
    for t, p in prices.items():
        rows.append(f"{date},{t},{p:.6f},{p:.6f},{p:.6f},{p:.6f},1000")
        prices[t] = p * growth[t]
path = Path(tempfile.mkdtemp()) / "bars.csv"
path.write_text("\n".join(rows) + "\n")

dataset = build_dataset(load_ohlcv(path), window=10,
                        splits=parse_splits({"all": [str(start), str(start + dt.timedelta(days=39))]}))
env = PortfolioEnv(dataset, "all")
n = dataset.n_stocks
print(f"universe {dataset.tickers}, {env.n_windows} windows, "
      f"{env.max_steps} steps available")

# all cash: value never moves
state = env.reset(10_000.0, PoolMask.full(n), horizon=5)
for _ in range(5):
    state, reward = env.step(state, PortfolioVector.all_cash(n))
print(f"\nall-cash value after 5 steps: {state.portfolio_value:.2f} (reward 0 each step)")

# a 50% cash / 50% risky portfolio, tracked two ways
state = env.reset(10_000.0, PoolMask.full(n), horizon=10)
weights = np.array([0.5, 0.3, 0.1, 0.1])  # cash, FAST, FLAT, SLOW (sorted order)
cash = weights[0] * state.portfolio_value
positions = weights[1:] * state.portfolio_value
total_reward = 0.0
v0 = state.portfolio_value
for _ in range(10):
    closes_before = dataset.close_at(state.day_index)
    state, reward = env.step(state, PortfolioVector.from_array(weights))
    closes_after = dataset.close_at(state.day_index)
    positions = positions * closes_after / closes_before
    total_reward += reward
    value = cash + positions.sum()
    # rebalance the manual book to the same weights for the next step
    cash = weights[0] * value
    positions = weights[1:] * value

print(f"env value:        {state.portfolio_value:.6f}")
print(f"manual positions: {value:.6f}")
print(f"telescoped rewards: {total_reward:.6f} == V_T - V_0 = "
      f"{state.portfolio_value - v0:.6f}")
