"""Inference backtests, financial metrics, rule-based baselines, reports.

Metrics over daily simple returns r_t = (V_t - V_{t-1}) / V_{t-1}:

    ARR  annualized return        (V_T - V_0) / V_0 * 252 / T
    SR   Sharpe ratio             mean(r) / std(r)            (sample std)
    VOL  volatility               std(r)                      (sample std)
    MDD  maximum drawdown         max_t (peak_t - V_t) / peak_t
    CR   Calmar ratio             mean(r) / MDD
    SoR  Sortino ratio            mean(r) / std(negative r)   (population std)

SR/VOL/CR/SoR are reported unannualized from daily returns. Degenerate
cases: zero return std raises; no negative returns or zero drawdown report
an infinity sentinel for SoR/CR.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .marketdata import MarketDataset
from .portfolio_env import (EnvError, PoolEvent, PoolMask, PortfolioEnv,
                            PortfolioVector, apply_pool_event,
                            validate_pool_events)
from .representation import plan_mask, represent_window
from .sac_agent import act

TRADING_DAYS_PER_YEAR = 252
BASELINE_NAMES = ("market", "blsw", "csm")
BASELINE_LOOKBACK = 10
BASELINE_QUANTILE = 1.0 / 3.0


class MetricsError(ValueError):
    pass


@dataclass
class ReturnSeries:
    dates: list[dt.date]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.dates) != len(self.values):
            raise MetricsError("dates and values must have equal length")
        if np.any(self.values <= 0):
            raise MetricsError("portfolio values must stay positive")

    @property
    def returns(self) -> np.ndarray:
        v = self.values
        return v[1:] / v[:-1] - 1.0


@dataclass(frozen=True)
class MetricsReport:
    arr: float
    sr: float
    vol: float
    mdd: float
    cr: float
    sor: float
    split: str = ""
    strategy: str = ""

    def as_row(self) -> dict:
        return {"strategy": self.strategy, "split": self.split,
                "arr": self.arr, "sr": self.sr, "vol": self.vol,
                "mdd": self.mdd, "cr": self.cr, "sor": self.sor}


def compute_metrics(series: ReturnSeries, split: str = "",
                    strategy: str = "") -> MetricsReport:
    """Appendix-style metric suite over one value curve."""
    v = series.values
    if len(v) < 2:
        raise MetricsError("need at least two portfolio values")
    r = series.returns
    horizon = len(r)
    arr = (v[-1] - v[0]) / v[0] * TRADING_DAYS_PER_YEAR / horizon
    std = float(np.std(r, ddof=1)) if horizon > 1 else 0.0
    if std == 0.0:
        raise MetricsError("degenerate return series: zero return std")
    mean_r = float(np.mean(r))
    sr = mean_r / std
    peaks = np.maximum.accumulate(v)
    mdd = float(np.max((peaks - v) / peaks))
    cr = mean_r / mdd if mdd > 0 else math.inf
    downside = r[r < 0]
    if len(downside) == 0:
        sor = math.inf
    else:
        dd = float(np.std(downside))  # population std; subset can be tiny
        sor = mean_r / dd if dd > 0 else math.inf
    return MetricsReport(arr=float(arr), sr=float(sr), vol=std, mdd=mdd,
                         cr=float(cr), sor=float(sor), split=split,
                         strategy=strategy)


@dataclass
class BacktestResult:
    series: ReturnSeries
    weights: np.ndarray          # (steps, N+1): cash then stock slots
    masks: np.ndarray            # (steps, N) selected flags in force per step
    tickers: list[str]

    def metrics(self, split: str = "", strategy: str = "") -> MetricsReport:
        return compute_metrics(self.series, split=split, strategy=strategy)

    def metrics_or_partial(self, split: str = "",
                           strategy: str = "") -> MetricsReport:
        """Like ``metrics`` but degenerate (zero-std) series yield a report
        with the defined fields only; SR/CR/SoR become nan."""
        try:
            return self.metrics(split=split, strategy=strategy)
        except MetricsError:
            v = self.series.values
            arr = (v[-1] - v[0]) / v[0] * TRADING_DAYS_PER_YEAR / (len(v) - 1)
            peaks = np.maximum.accumulate(v)
            mdd = float(np.max((peaks - v) / peaks))
            return MetricsReport(arr=float(arr), sr=math.nan, vol=0.0,
                                 mdd=mdd, cr=math.nan, sor=math.nan,
                                 split=split, strategy=strategy)


def _event_schedule(events: list[PoolEvent] | None, universe: list[str]):
    events = sorted(events or [], key=lambda e: e.date)
    validate_pool_events(events, universe)
    return events


def _apply_due(mask: PoolMask, events: list[PoolEvent], cursor: int,
               date: dt.date, universe: list[str]):
    while cursor < len(events) and events[cursor].date <= date:
        mask = apply_pool_event(mask, events[cursor], universe)
        cursor += 1
    return mask, cursor


def backtest(params: dict, dataset: MarketDataset, split: str,
             pool_events: list[PoolEvent] | None = None,
             temperature: float = 0.1, initial_cash: float = 1.0,
             mask: PoolMask | None = None,
             sparsify_epsilon: float = 0.0) -> BacktestResult:
    """Deterministic greedy inference over a split with scripted pool events.

    Per step: apply due pool events, mask by the pool, embed/encode/fill,
    act on the Gaussian mean through the temperature softmax, advance.
    """
    events = _event_schedule(pool_events, dataset.tickers)
    env = PortfolioEnv(dataset, split)
    n = dataset.n_stocks
    mask = mask or PoolMask.full(n)
    state = env.reset(initial_cash, mask, env.max_steps)
    values = [state.portfolio_value]
    dates = [dataset.valid_dates[state.day_index]]
    weights, masks = [], []
    cursor = 0
    for _ in range(env.max_steps):
        date = dataset.valid_dates[state.day_index]
        new_mask, cursor = _apply_due(state.mask, events, cursor, date,
                                      dataset.tickers)
        if new_mask is not state.mask:
            state = env.update_pool(state, new_mask)
        plan = plan_mask(n, 0.0, forced=state.mask)
        rep = represent_window(state.window, plan, params)
        action = act(params, rep, stochastic=False, temperature=temperature,
                     sparsify_epsilon=sparsify_epsilon)
        masks.append(state.mask.selected.copy())
        weights.append(action.as_array())
        state, _ = env.step(state, action)
        values.append(state.portfolio_value)
        dates.append(dataset.valid_dates[state.day_index])
    return BacktestResult(
        series=ReturnSeries(dates=dates, values=np.array(values)),
        weights=np.array(weights), masks=np.array(masks),
        tickers=dataset.tickers)


def _baseline_weights(name: str, dataset: MarketDataset, day_index: int,
                      selected: np.ndarray) -> np.ndarray:
    """Equal-weight rules over the current pool; zero cash.

    market: whole pool. blsw: bottom third by 10-day return (mean
    reversion). csm: top third (momentum). Ties break toward the lowest
    slot index; pools too small for a quantile hold the whole pool.
    """
    n = len(selected)
    pool = np.nonzero(selected)[0]
    if name == "market":
        chosen = pool
    else:
        cal = day_index + dataset.valid_offset
        lookback = dataset.closes[pool, cal] / dataset.closes[pool, cal - BASELINE_LOOKBACK] - 1.0
        n_sel = int(len(pool) * BASELINE_QUANTILE)
        if n_sel < 1:
            chosen = pool
        else:
            order = np.argsort(lookback if name == "blsw" else -lookback,
                               kind="stable")
            chosen = pool[order[:n_sel]]
    w = np.zeros(n + 1)
    w[1 + chosen] = 1.0 / len(chosen)
    return w


def run_baseline(name: str, dataset: MarketDataset, split: str,
                 pool_events: list[PoolEvent] | None = None,
                 initial_cash: float = 1.0,
                 mask: PoolMask | None = None) -> BacktestResult:
    """Daily-rebalanced rule strategy over a split, honoring pool events."""
    if name not in BASELINE_NAMES:
        raise EnvError(f"unknown baseline {name!r}; choose from {BASELINE_NAMES}")
    events = _event_schedule(pool_events, dataset.tickers)
    env = PortfolioEnv(dataset, split)
    n = dataset.n_stocks
    mask = mask or PoolMask.full(n)
    state = env.reset(initial_cash, mask, env.max_steps)
    values = [state.portfolio_value]
    dates = [dataset.valid_dates[state.day_index]]
    weights, masks = [], []
    cursor = 0
    for _ in range(env.max_steps):
        date = dataset.valid_dates[state.day_index]
        new_mask, cursor = _apply_due(state.mask, events, cursor, date,
                                      dataset.tickers)
        if new_mask is not state.mask:
            state = env.update_pool(state, new_mask)
        w = _baseline_weights(name, dataset, state.day_index,
                              state.mask.selected)
        action = PortfolioVector.from_array(w)
        masks.append(state.mask.selected.copy())
        weights.append(w)
        state, _ = env.step(state, action)
        values.append(state.portfolio_value)
        dates.append(dataset.valid_dates[state.day_index])
    return BacktestResult(
        series=ReturnSeries(dates=dates, values=np.array(values)),
        weights=np.array(weights), masks=np.array(masks),
        tickers=dataset.tickers)


def emit_report(results: dict[str, BacktestResult], split: str,
                out_dir: str | Path) -> None:
    """Write metrics.csv plus per-strategy curve and weight CSVs.

    Floats are written with repr-level precision so the CSVs re-parse to
    the in-memory values exactly.
    """
    out = Path(out_dir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    (out / "weights").mkdir(parents=True, exist_ok=True)

    def fmt(x: float) -> str:
        return repr(float(x))

    rows = []
    for strategy, result in results.items():
        report = result.metrics_or_partial(split=split, strategy=strategy)
        rows.append(report.as_row())
        curve_lines = ["date,value"]
        s = result.series
        curve_lines += [f"{d.isoformat()},{fmt(v)}"
                        for d, v in zip(s.dates, s.values)]
        (out / "curves" / f"{strategy}.csv").write_text("\n".join(curve_lines) + "\n")
        w_header = "date,cash," + ",".join(result.tickers)
        w_lines = [w_header]
        for d, w in zip(s.dates[:-1], result.weights):
            w_lines.append(d.isoformat() + "," + ",".join(fmt(x) for x in w))
        (out / "weights" / f"{strategy}.csv").write_text("\n".join(w_lines) + "\n")

    header = ["strategy", "split", "arr", "sr", "vol", "mdd", "cr", "sor"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            str(row[h]) if h in ("strategy", "split") else fmt(row[h])
            for h in header))
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")
