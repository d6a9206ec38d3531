"""Independent straight-line oracles for the test suite.

Everything here deliberately avoids the package's own vectorized code:
loops, explicit formulas, brute force, quadrature, and finite differences
only, so a bug in the implementation cannot hide in its own oracle.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate


# -- indicators --------------------------------------------------------------

def indicator_vector_oracle(opens, highs, lows, closes, t: int) -> dict[str, float]:
    """Recompute every indicator at day t with explicit formulas."""
    c, o, h, l = closes, opens, highs, lows

    def ret(k, s):
        return c[s] / c[s - k] - 1.0 if s - k >= 0 else 0.0

    def std0(xs):
        m = sum(xs) / len(xs)
        return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))

    out = {}
    out["ret_1"] = ret(1, t)
    out["ret_5"] = ret(5, t)
    out["ret_10"] = ret(10, t)
    out["ma_5_ratio"] = (sum(c[t - 4 : t + 1]) / 5.0) / c[t]
    out["ma_10_ratio"] = (sum(c[t - 9 : t + 1]) / 10.0) / c[t]
    out["ret_std_5"] = std0([ret(1, s) for s in range(t - 4, t + 1)])
    out["ret_std_10"] = std0([ret(1, s) for s in range(t - 9, t + 1)])
    out["hl_spread"] = (h[t] - l[t]) / o[t]
    out["co_spread"] = (c[t] - o[t]) / o[t]
    out["hc_spread"] = (h[t] - c[t]) / o[t]
    out["cl_spread"] = (c[t] - l[t]) / o[t]
    out["max_10_ratio"] = max(c[t - 9 : t + 1]) / c[t]
    return out


# -- portfolio accounting ----------------------------------------------------

def positions_oracle(initial_cash: float, weight_seq, close_path) -> list[float]:
    """Portfolio values tracked as explicit per-asset currency positions.

    weight_seq[t] is the (N+1,) weight vector applied at day t (cash first);
    close_path[t] the (N,) closes. Returns [V_0, ..., V_T].
    """
    values = [float(initial_cash)]
    v = float(initial_cash)
    for t, w in enumerate(weight_seq):
        cash = w[0] * v
        positions = [w[1 + i] * v for i in range(len(close_path[t]))]
        grown = [p * (close_path[t + 1][i] / close_path[t][i])
                 for i, p in enumerate(positions)]
        v = cash + sum(grown)
        values.append(v)
    return values


# -- financial metrics -------------------------------------------------------

def returns_of(values) -> list[float]:
    return [(values[i] - values[i - 1]) / values[i - 1]
            for i in range(1, len(values))]


def arr_oracle(values) -> float:
    horizon = len(values) - 1
    return (values[-1] - values[0]) / values[0] * 252.0 / horizon


def _mean(xs):
    return sum(xs) / len(xs)


def _sample_std(xs):
    m = _mean(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / (len(xs) - 1))


def _pop_std(xs):
    m = _mean(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))


def vol_oracle(values) -> float:
    return _sample_std(returns_of(values))


def sr_oracle(values) -> float:
    r = returns_of(values)
    return _mean(r) / _sample_std(r)


def mdd_bruteforce(values) -> float:
    """Max drawdown over every ordered pair (i, j), i < j."""
    worst = 0.0
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            dd = (values[i] - values[j]) / values[i]
            worst = max(worst, dd)
    return worst


def cr_oracle(values) -> float:
    mdd = mdd_bruteforce(values)
    mean_r = _mean(returns_of(values))
    return mean_r / mdd if mdd > 0 else math.inf


def sor_oracle(values) -> float:
    r = returns_of(values)
    downside = [x for x in r if x < 0]
    if not downside:
        return math.inf
    dd = _pop_std(downside)
    return _mean(r) / dd if dd > 0 else math.inf


# -- truncated normal --------------------------------------------------------

def truncated_normal_mean_quadrature(mu, sigma, a, b) -> float:
    """E[r] for the Gaussian truncated to [a, b], by numerical quadrature."""
    dens = lambda r: math.exp(-0.5 * ((r - mu) / sigma) ** 2)
    z, _ = integrate.quad(dens, a, b)
    num, _ = integrate.quad(lambda r: r * dens(r), a, b)
    return num / z


def truncated_normal_mean_closed_form(mu, sigma, a, b) -> float:
    phi = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    cdf = lambda x: 0.5 * (1 + math.erf(x / math.sqrt(2)))
    alpha, beta = (a - mu) / sigma, (b - mu) / sigma
    return mu + sigma * (phi(alpha) - phi(beta)) / (cdf(beta) - cdf(alpha))


# -- finite differences ------------------------------------------------------

def finite_difference_grad(loss_fn, params: dict[str, np.ndarray], name: str,
                           eps: float = 1e-4) -> np.ndarray:
    """Central finite differences of ``loss_fn(params)`` w.r.t. one array."""
    base = params[name]
    grad = np.zeros_like(base, dtype=float)
    it = np.nditer(base, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = base[idx]
        base[idx] = orig + eps
        up = loss_fn(params)
        base[idx] = orig - eps
        down = loss_fn(params)
        base[idx] = orig
        grad[idx] = (up - down) / (2 * eps)
        it.iternext()
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    num = np.linalg.norm(np.asarray(a) - np.asarray(b))
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(num / den)
