import datetime as dt
import math

import numpy as np
import pytest

from earnmore.evaluator import (BacktestResult, MetricsError, ReturnSeries,
                                backtest, compute_metrics, emit_report,
                                run_baseline)
from earnmore.portfolio_env import PoolEvent, PoolMask
from earnmore.trainer import TrainConfig, init_params

from conftest import build_from_rows
from oracles import (arr_oracle, cr_oracle, mdd_bruteforce, sor_oracle,
                     sr_oracle, vol_oracle)

D0 = dt.date(2020, 1, 1)


def series_of(values, start=D0):
    dates = [start + dt.timedelta(days=i) for i in range(len(values))]
    return ReturnSeries(dates=dates, values=np.asarray(values, dtype=float))


def agent_params(dataset, seed=0, **cfg_over):
    cfg = TrainConfig(embed_dim=8, hidden_dim=8, **cfg_over)
    return init_params(cfg, dataset, np.random.default_rng(seed))


def constant_growth_rows(growths, n_days, start=D0):
    rows = []
    prices = {f"S{i}": 100.0 for i in range(len(growths))}
    for d in range(n_days):
        date = (start + dt.timedelta(days=d)).isoformat()
        for i, g in enumerate(growths):
            t = f"S{i}"
            p = prices[t]
            rows.append(f"{date},{t},{p:.10f},{p:.10f},{p:.10f},{p:.10f},1")
            prices[t] = p * g
    return rows


class TestMetrics:
    def test_arr_one_year_example(self):
        values = np.linspace(100.0, 110.0, 253)  # 252 trading days
        m = compute_metrics(series_of(values))
        assert m.arr == pytest.approx(0.10, rel=1e-12)

    def test_mdd_brute_force_example(self):
        values = [100.0, 120.0, 90.0, 110.0]
        m = compute_metrics(series_of(values))
        assert m.mdd == pytest.approx(0.25, rel=1e-12)
        assert mdd_bruteforce(values) == pytest.approx(0.25, rel=1e-12)

    def test_constant_series_degenerate(self):
        with pytest.raises(MetricsError, match="degenerate"):
            compute_metrics(series_of([100.0] * 10))

    def test_no_negative_returns_sor_infinite(self):
        values = 100.0 * np.cumprod(1 + np.abs(np.random.default_rng(1)
                                               .normal(0.001, 0.002, 30)))
        m = compute_metrics(series_of(np.concatenate([[100.0], values])))
        assert m.sor == math.inf

    def test_oracle_equivalence_random_series(self, rng):
        for _ in range(40):
            n = int(rng.integers(5, 120))
            rets = rng.normal(0.0005, 0.02, size=n).clip(-0.4, 0.5)
            values = 100.0 * np.cumprod(np.concatenate([[1.0], 1 + rets]))
            if np.std(np.diff(values) / values[:-1], ddof=1) == 0:
                continue
            m = compute_metrics(series_of(values))
            v = values.tolist()
            assert m.arr == pytest.approx(arr_oracle(v), rel=1e-9)
            assert m.vol == pytest.approx(vol_oracle(v), rel=1e-9)
            assert m.sr == pytest.approx(sr_oracle(v), rel=1e-9)
            assert m.mdd == pytest.approx(mdd_bruteforce(v), rel=1e-9, abs=1e-12)
            cr = cr_oracle(v)
            sor = sor_oracle(v)
            if math.isinf(cr):
                assert math.isinf(m.cr)
            else:
                assert m.cr == pytest.approx(cr, rel=1e-9)
            if math.isinf(sor):
                assert math.isinf(m.sor)
            else:
                assert m.sor == pytest.approx(sor, rel=1e-9)

    def test_arr_sign_matches_total_return(self, rng):
        for _ in range(20):
            rets = rng.normal(0, 0.02, size=30).clip(-0.4, 0.5)
            values = 50.0 * np.cumprod(np.concatenate([[1.0], 1 + rets]))
            try:
                m = compute_metrics(series_of(values))
            except MetricsError:
                continue
            assert np.sign(m.arr) == np.sign(values[-1] - values[0])

    def test_mdd_scale_invariant(self, rng):
        rets = rng.normal(0, 0.03, size=40).clip(-0.4, 0.5)
        values = 10.0 * np.cumprod(np.concatenate([[1.0], 1 + rets]))
        m1 = compute_metrics(series_of(values))
        m2 = compute_metrics(series_of(values * 137.0))
        assert m1.mdd == pytest.approx(m2.mdd, rel=1e-12)


class TestBacktest:
    def test_cash_biased_checkpoint_flat_series(self, small_dataset):
        params = agent_params(small_dataset)
        for key in list(params):
            if key.startswith("actor/"):
                params[key] = np.zeros_like(params[key])
        params["actor/bm"] = params["actor/bm"].copy()
        params["actor/bm"][0] = 20.0  # cash logit dominates at low T
        result = backtest(params, small_dataset, "test", temperature=0.1)
        np.testing.assert_array_equal(result.series.values,
                                      result.series.values[0])

    def test_event_marks_slot_masked_from_date(self, small_dataset):
        params = agent_params(small_dataset)
        dates = [small_dataset.valid_dates[i]
                 for i in small_dataset.split_indices("test")]
        d_event = dates[3]
        events = [PoolEvent(date=d_event, remove=("BBB",))]
        result = backtest(params, small_dataset, "test", pool_events=events)
        slot = small_dataset.ticker_index("BBB")
        for step, mask in enumerate(result.masks):
            expected = step < 3
            assert mask[slot] == expected

    def test_unknown_event_ticker_fails_before_run(self, small_dataset):
        events = [PoolEvent(date=D0, add=("ZZZ",))]
        params = agent_params(small_dataset)
        from earnmore.portfolio_env import EnvError
        with pytest.raises(EnvError, match="ZZZ"):
            backtest(params, small_dataset, "test", pool_events=events)

    def test_deterministic_across_runs(self, small_dataset):
        params = agent_params(small_dataset)
        r1 = backtest(params, small_dataset, "test")
        r2 = backtest(params, small_dataset, "test")
        np.testing.assert_array_equal(r1.series.values, r2.series.values)
        np.testing.assert_array_equal(r1.weights, r2.weights)

    def test_weights_valid_portfolios(self, small_dataset):
        params = agent_params(small_dataset)
        result = backtest(params, small_dataset, "test")
        sums = result.weights.sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-9)
        assert np.all(result.weights >= 0)


class TestBaselines:
    def test_momentum_and_reversion_selection(self, tmp_path):
        rows = constant_growth_rows([1.01, 1.0, 0.99], 40)
        ds = build_from_rows(tmp_path, rows, window=10)
        csm = run_baseline("csm", ds, "all")
        blsw = run_baseline("blsw", ds, "all")
        # S0 grows fastest: momentum holds it, reversion holds the loser S2
        assert np.all(csm.weights[:, 1] == 1.0)
        assert np.all(blsw.weights[:, 3] == 1.0)

    def test_tie_break_lowest_slot_first(self, tmp_path):
        rows = constant_growth_rows([1.0, 1.0, 1.0], 40)
        ds = build_from_rows(tmp_path, rows, window=10)
        for name in ("csm", "blsw"):
            result = run_baseline(name, ds, "all")
            assert np.all(result.weights[:, 1] == 1.0)
            assert np.all(result.weights[:, 2:] == 0.0)

    def test_quantile_counts_ten_stocks(self, tmp_path):
        rows = constant_growth_rows([1.0 + 0.001 * i for i in range(10)], 40)
        ds = build_from_rows(tmp_path, rows, window=10)
        result = run_baseline("csm", ds, "all", )
        w = result.weights[0]
        assert np.isclose(w[w > 0], 1.0 / 3.0).all()
        assert (w > 0).sum() == 3

    def test_market_equal_weight_zero_cash(self, small_dataset):
        result = run_baseline("market", small_dataset, "test")
        n = small_dataset.n_stocks
        np.testing.assert_allclose(result.weights[:, 1:], 1.0 / n, atol=1e-12)
        np.testing.assert_array_equal(result.weights[:, 0], 0.0)

    def test_small_pool_holds_everything(self, small_dataset):
        mask = PoolMask.from_tickers(["AAA", "BBB"], small_dataset.tickers)
        result = run_baseline("csm", small_dataset, "test", mask=mask)
        # floor(2/3) < 1 -> hold the whole 2-stock pool
        cols = [1 + small_dataset.ticker_index(t) for t in ("AAA", "BBB")]
        np.testing.assert_allclose(result.weights[:, cols], 0.5, atol=1e-12)

    def test_baselines_respect_pool_events(self, small_dataset):
        dates = [small_dataset.valid_dates[i]
                 for i in small_dataset.split_indices("test")]
        events = [PoolEvent(date=dates[2], remove=("AAA",))]
        result = run_baseline("market", small_dataset, "test",
                              pool_events=events)
        slot = 1 + small_dataset.ticker_index("AAA")
        assert np.all(result.weights[2:, slot] == 0.0)
        assert np.all(result.weights[:2, slot] > 0.0)


class TestEmitReport:
    def test_files_and_roundtrip(self, small_dataset, tmp_path):
        params = agent_params(small_dataset)
        results = {
            "agent": backtest(params, small_dataset, "test"),
            "market": run_baseline("market", small_dataset, "test"),
        }
        out = tmp_path / "report"
        emit_report(results, "test", out)
        metrics_lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert metrics_lines[0] == "strategy,split,arr,sr,vol,mdd,cr,sor"
        assert len(metrics_lines) == 3

        parsed = {}
        for line in metrics_lines[1:]:
            cells = line.split(",")
            parsed[cells[0]] = [float(x) for x in cells[2:]]
        for name, result in results.items():
            m = result.metrics(split="test", strategy=name)
            expected = [m.arr, m.sr, m.vol, m.mdd, m.cr, m.sor]
            assert parsed[name] == expected  # exact full-precision round-trip

        curve_a = (out / "curves" / "agent.csv").read_text().splitlines()
        curve_m = (out / "curves" / "market.csv").read_text().splitlines()
        dates_a = [l.split(",")[0] for l in curve_a[1:]]
        dates_m = [l.split(",")[0] for l in curve_m[1:]]
        assert dates_a == dates_m
        values = [float(l.split(",")[1]) for l in curve_a[1:]]
        np.testing.assert_array_equal(values, results["agent"].series.values)

        weights = (out / "weights" / "agent.csv").read_text().splitlines()
        assert weights[0] == "date,cash," + ",".join(small_dataset.tickers)
        assert len(weights) == 1 + len(results["agent"].weights)
