"""Portfolio-management MDP over rolling feature windows.

States pair a FeatureWindow with a pool mask; actions are long-only weight
vectors (cash slot + one slot per stock) on the simplex. Value evolves by
marking each stock position to the next day's close:

    V_next = V * (1 + sum_i stock_weight_i * close_return_i)

which is the cash-plus-risky-sleeve accounting identity with the risky
sleeve renormalized by (1 - cash_weight). Weights assigned to unselected
(masked) slots are executed as given, so any leakage is measurable rather
than silently clipped. There are no transaction costs by default; a
proportional-cost hook exists for experiments.
"""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .marketdata import FeatureWindow, MarketDataset

WEIGHT_SUM_TOL = 1e-9


class EnvError(ValueError):
    """Raised for invalid actions, masks, or episode configuration."""


@dataclass(frozen=True)
class PoolMask:
    """Boolean selection over the global stock pool; True = in the pool."""
    selected: np.ndarray

    def __post_init__(self):
        sel = np.asarray(self.selected, dtype=bool)
        object.__setattr__(self, "selected", sel)
        if sel.ndim != 1:
            raise EnvError("pool mask must be one-dimensional")
        if not sel.any():
            raise EnvError("pool must be non-empty")

    @property
    def count_selected(self) -> int:
        return int(self.selected.sum())

    @property
    def n_masked(self) -> int:
        return int((~self.selected).sum())

    @classmethod
    def full(cls, n: int) -> "PoolMask":
        return cls(np.ones(n, dtype=bool))

    @classmethod
    def from_tickers(cls, tickers: list[str], universe: list[str]) -> "PoolMask":
        sel = np.zeros(len(universe), dtype=bool)
        for t in tickers:
            if t not in universe:
                raise EnvError(f"unknown ticker {t!r}")
            sel[universe.index(t)] = True
        return cls(sel)


@dataclass(frozen=True)
class PortfolioVector:
    """Cash weight plus per-stock weights, all >= 0, summing to 1."""
    cash_weight: float
    stock_weights: np.ndarray

    def __post_init__(self):
        sw = np.asarray(self.stock_weights, dtype=float)
        object.__setattr__(self, "stock_weights", sw)
        total = self.cash_weight + sw.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise EnvError(f"weights sum to {total!r}, not 1")
        if self.cash_weight < -WEIGHT_SUM_TOL or np.any(sw < -WEIGHT_SUM_TOL):
            raise EnvError("negative weight in a long-only portfolio")

    @classmethod
    def from_array(cls, w: np.ndarray) -> "PortfolioVector":
        return cls(cash_weight=float(w[0]), stock_weights=np.asarray(w[1:], dtype=float))

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.cash_weight], self.stock_weights))

    @classmethod
    def all_cash(cls, n: int) -> "PortfolioVector":
        return cls(cash_weight=1.0, stock_weights=np.zeros(n))


@dataclass(frozen=True)
class EnvState:
    window: FeatureWindow
    mask: PoolMask
    portfolio_value: float
    step_index: int
    day_index: int  # feature-day index of the window's last day


class PortfolioEnv:
    """Single-split environment; instances hold no mutable state between calls."""

    def __init__(self, dataset: MarketDataset, split: str,
                 cost_rate: float = 0.0):
        self.dataset = dataset
        self.split = split
        self.indices = dataset.split_indices(split)
        self._pos = {day: i for i, day in enumerate(self.indices)}
        self.cost_rate = cost_rate

    @property
    def n_windows(self) -> int:
        return len(self.indices)

    @property
    def max_steps(self) -> int:
        # each step consumes the following window's close
        return self.n_windows - 1

    def reset(self, initial_cash: float, mask: PoolMask, horizon: int,
              start: int = 0) -> EnvState:
        if initial_cash <= 0:
            raise EnvError(f"initial cash must be positive, got {initial_cash}")
        if mask.selected.shape[0] != self.dataset.n_stocks:
            raise EnvError("pool mask length does not match the stock universe")
        if horizon < 0:
            raise EnvError("horizon must be non-negative")
        if start < 0 or start + horizon > self.max_steps:
            raise EnvError(
                f"horizon {horizon} starting at offset {start} exceeds the "
                f"{self.max_steps} steps available ({self.n_windows} windows) "
                f"in split {self.split!r}")
        day = self.indices[start]
        return EnvState(window=self.dataset.window_at(day), mask=mask,
                        portfolio_value=float(initial_cash), step_index=0,
                        day_index=day)

    def step(self, state: EnvState, action: PortfolioVector):
        """Advance one trading day. Returns (next_state, reward)."""
        pos = self._pos[state.day_index]
        if pos + 1 >= self.n_windows:
            raise EnvError("no further windows in this split")
        next_day = self.indices[pos + 1]
        c_now = self.dataset.close_at(state.day_index)
        c_next = self.dataset.close_at(next_day)
        rets = c_next / c_now - 1.0
        growth = 1.0 + float(action.stock_weights @ rets)
        v_next = state.portfolio_value * growth
        if self.cost_rate:
            v_next -= self.cost_rate * state.portfolio_value * float(
                np.abs(action.stock_weights).sum())
        reward = v_next - state.portfolio_value
        next_state = EnvState(window=self.dataset.window_at(next_day),
                              mask=state.mask, portfolio_value=v_next,
                              step_index=state.step_index + 1,
                              day_index=next_day)
        return next_state, reward

    def update_pool(self, state: EnvState, mask: PoolMask) -> EnvState:
        """Replace the pool mask; takes effect from the next action."""
        if mask.selected.shape[0] != self.dataset.n_stocks:
            raise EnvError("pool mask length does not match the stock universe")
        return replace(state, mask=mask)


@dataclass(frozen=True)
class PoolEvent:
    date: dt.date
    add: tuple[str, ...] = ()
    remove: tuple[str, ...] = ()


def load_pool_events(path: str | Path) -> list[PoolEvent]:
    """Read a JSON array of {date, add, remove} entries, sorted by date."""
    raw = json.loads(Path(path).read_text())
    events = [PoolEvent(date=dt.date.fromisoformat(e["date"]),
                        add=tuple(e.get("add", ())),
                        remove=tuple(e.get("remove", ())))
              for e in raw]
    return sorted(events, key=lambda e: e.date)


def validate_pool_events(events: list[PoolEvent], universe: list[str]) -> None:
    known = set(universe)
    for ev in events:
        unknown = [t for t in (*ev.add, *ev.remove) if t not in known]
        if unknown:
            raise EnvError(f"pool event {ev.date}: unknown tickers {unknown}")


def apply_pool_event(mask: PoolMask, event: PoolEvent, universe: list[str]) -> PoolMask:
    sel = mask.selected.copy()
    for t in event.add:
        sel[universe.index(t)] = True
    for t in event.remove:
        sel[universe.index(t)] = False
    if not sel.any():
        raise EnvError(f"pool event {event.date} would empty the pool")
    return PoolMask(sel)
