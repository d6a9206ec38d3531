"""Soft actor-critic over maskable stock representations.

The actor is a two-layer GELU network over the flattened (N+1) x E
representation emitting a diagonal-Gaussian logit distribution per slot;
slot 0 (the pool-summary pathway) becomes the cash weight. Executed actions
are the temperature softmax of the logits, so the critic always consumes
simplex weight vectors. Log-probabilities are taken under the Gaussian on
the pre-softmax logits; the re-weighting map is a deterministic post-map.

Twin critics with EMA target copies provide the Bellman backup; an
auxiliary mass penalty on weights assigned to masked slots teaches the
actor to avoid stocks outside the pool.

All losses return analytic gradients (verified against finite differences
in the test suite); optimizer steps live in the trainer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .portfolio_env import PortfolioVector
from .representation import MaskableRepresentation

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
LOG_2PI = float(np.log(2.0 * np.pi))

ACTOR_PREFIX = "actor/"
CRITIC_PREFIXES = ("q1/", "q2/")
TARGET_PREFIXES = ("tq1/", "tq2/")


class AgentError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyOutput:
    mean: np.ndarray
    log_std: np.ndarray
    sampled_logits: np.ndarray
    log_prob: np.ndarray


@dataclass(frozen=True)
class CriticPair:
    q1: np.ndarray
    q2: np.ndarray
    target_q1: np.ndarray
    target_q2: np.ndarray


@dataclass
class EntropyTuner:
    """Automatic entropy temperature; ``log_alpha`` is the trained scalar."""
    log_alpha: np.ndarray
    target_entropy: float

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))


def init_agent_params(rng: np.random.Generator, n_stocks: int,
                      embed_dim: int, hidden_dim: int) -> dict[str, np.ndarray]:
    s = (n_stocks + 1) * embed_dim
    a = n_stocks + 1
    p: dict[str, np.ndarray] = {
        "actor/w1": nn.normal_init(rng, (s, hidden_dim), s),
        "actor/b1": np.zeros(hidden_dim),
        "actor/wm": nn.normal_init(rng, (hidden_dim, a), hidden_dim),
        "actor/bm": np.zeros(a),
        "actor/ws": nn.normal_init(rng, (hidden_dim, a), hidden_dim),
        "actor/bs": np.zeros(a),
        "log_alpha": np.zeros(()),
    }
    for prefix in CRITIC_PREFIXES:
        p[prefix + "w1"] = nn.normal_init(rng, (s + a, hidden_dim), s + a)
        p[prefix + "b1"] = np.zeros(hidden_dim)
        p[prefix + "w2"] = nn.normal_init(rng, (hidden_dim, 1), hidden_dim)
        p[prefix + "b2"] = np.zeros(1)
    for online, target in zip(CRITIC_PREFIXES, TARGET_PREFIXES):
        for leaf in ("w1", "b1", "w2", "b2"):
            p[target + leaf] = p[online + leaf].copy()
    return p


def re_weight(logits: np.ndarray, temperature: float,
              sparsify_epsilon: float = 0.0) -> np.ndarray:
    """Temperature softmax over the last axis, max-subtracted for stability.

    ``temperature`` = 1 is the plain softmax; lower values concentrate
    weight on the largest logits. ``sparsify_epsilon`` > 0 additionally
    zeroes weights below the threshold and renormalizes (off by default).
    """
    if temperature <= 0:
        raise AgentError(f"temperature must be positive, got {temperature}")
    logits = np.asarray(logits, dtype=float)
    w = nn.softmax(logits / temperature, axis=-1)
    if sparsify_epsilon > 0.0:
        w = np.where(w < sparsify_epsilon, 0.0, w)
        w = w / w.sum(axis=-1, keepdims=True)
    return w


def reweight_bwd(g_w: np.ndarray, w: np.ndarray, temperature: float) -> np.ndarray:
    """Backward of ``re_weight`` (epsilon sparsification off)."""
    return nn.softmax_bwd(g_w, w) / temperature


def gaussian_log_prob(eps: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log-density at mean + std * eps, per row."""
    return (-0.5 * eps * eps - log_std - 0.5 * LOG_2PI).sum(axis=-1)


def policy_forward(params: dict, flat: np.ndarray):
    """Actor network: flattened representation -> (mean, log_std, cache)."""
    a1 = nn.dense(flat, params["actor/w1"], params["actor/b1"])
    z1 = nn.gelu(a1)
    mean = nn.dense(z1, params["actor/wm"], params["actor/bm"])
    ls_raw = nn.dense(z1, params["actor/ws"], params["actor/bs"])
    log_std = np.clip(ls_raw, LOG_STD_MIN, LOG_STD_MAX)
    cache = {"flat": flat, "a1": a1, "z1": z1,
             "clip_pass": (ls_raw > LOG_STD_MIN) & (ls_raw < LOG_STD_MAX)}
    return mean, log_std, cache


def sample_policy(params: dict, flat: np.ndarray, eps: np.ndarray) -> PolicyOutput:
    """Reparameterized sample: logits = mean + exp(log_std) * eps."""
    mean, log_std, _ = policy_forward(params, flat)
    logits = mean + np.exp(log_std) * eps
    return PolicyOutput(mean=mean, log_std=log_std, sampled_logits=logits,
                        log_prob=gaussian_log_prob(eps, log_std))


def act(params: dict, rep: MaskableRepresentation, stochastic: bool,
        temperature: float, rng: np.random.Generator | None = None,
        sparsify_epsilon: float = 0.0) -> PortfolioVector:
    """Map a representation to a portfolio.

    Deterministic mode uses the Gaussian mean; stochastic mode draws the
    reparameterization noise from ``rng``.
    """
    flat = rep.flat()[None]
    mean, log_std, _ = policy_forward(params, flat)
    if stochastic:
        if rng is None:
            raise AgentError("stochastic act requires an rng")
        eps = rng.standard_normal(mean.shape[1])
        logits = mean[0] + np.exp(log_std[0]) * eps
    else:
        logits = mean[0]
    if not np.all(np.isfinite(logits)):
        raise AgentError("policy produced non-finite logits (diverged?)")
    weights = re_weight(logits, temperature, sparsify_epsilon)
    return PortfolioVector.from_array(weights)


def critic_forward(params: dict, prefix: str, flat: np.ndarray,
                   action: np.ndarray):
    x = np.concatenate([flat, action], axis=-1)
    a1 = nn.dense(x, params[prefix + "w1"], params[prefix + "b1"])
    z1 = nn.gelu(a1)
    q = nn.dense(z1, params[prefix + "w2"], params[prefix + "b2"])[:, 0]
    return q, {"x": x, "a1": a1, "z1": z1}


def critic_pair(params: dict, flat: np.ndarray, action: np.ndarray) -> CriticPair:
    """Online and target critic values for a state/action batch."""
    return CriticPair(
        q1=critic_forward(params, "q1/", flat, action)[0],
        q2=critic_forward(params, "q2/", flat, action)[0],
        target_q1=critic_forward(params, "tq1/", flat, action)[0],
        target_q2=critic_forward(params, "tq2/", flat, action)[0],
    )


def _critic_param_grads(params: dict, prefix: str, cache: dict,
                        g_q: np.ndarray, grads: dict) -> None:
    g2 = g_q[:, None]
    g_z1, gw2, gb2 = nn.dense_bwd(g2, cache["z1"], params[prefix + "w2"])
    g_a1 = g_z1 * nn.gelu_grad(cache["a1"])
    _, gw1, gb1 = nn.dense_bwd(g_a1, cache["x"], params[prefix + "w1"])
    grads[prefix + "w2"], grads[prefix + "b2"] = gw2, gb2
    grads[prefix + "w1"], grads[prefix + "b1"] = gw1, gb1


def _critic_action_grad(params: dict, prefix: str, cache: dict,
                        g_q: np.ndarray, action_dim: int) -> np.ndarray:
    g_z1 = g_q[:, None] @ params[prefix + "w2"].T
    g_a1 = g_z1 * nn.gelu_grad(cache["a1"])
    g_x = g_a1 @ params[prefix + "w1"].T
    return g_x[:, -action_dim:]


def critic_loss(params: dict, batch: dict, gamma: float, alpha: float,
                temperature: float, eps_next: np.ndarray,
                with_grads: bool = True):
    """Bellman residual averaged over the two critics.

    Target: r + gamma * (min target-critic value at a fresh policy sample
    minus alpha * log pi). With identical critics this reduces to
    1/2 * mean((Q - target)^2).
    """
    flat, flat_next = batch["rep"], batch["rep_next"]
    action, reward = batch["action"], batch["reward"]
    b = flat.shape[0]

    pol = sample_policy(params, flat_next, eps_next)
    w_next = re_weight(pol.sampled_logits, temperature)
    tq1, _ = critic_forward(params, "tq1/", flat_next, w_next)
    tq2, _ = critic_forward(params, "tq2/", flat_next, w_next)
    target_v = np.minimum(tq1, tq2) - alpha * pol.log_prob
    y = reward + gamma * target_v

    q1, c1 = critic_forward(params, "q1/", flat, action)
    q2, c2 = critic_forward(params, "q2/", flat, action)
    j = 0.25 * float(np.mean((q1 - y) ** 2) + np.mean((q2 - y) ** 2))
    if not with_grads:
        return j, {}
    grads: dict[str, np.ndarray] = {}
    _critic_param_grads(params, "q1/", c1, 0.5 * (q1 - y) / b, grads)
    _critic_param_grads(params, "q2/", c2, 0.5 * (q2 - y) / b, grads)
    return j, grads


def actor_loss(params: dict, batch: dict, alpha: float, lambda_mask: float,
               temperature: float, eps: np.ndarray, with_grads: bool = True):
    """Reparameterized policy loss plus the masked-slot mass penalty.

    J = mean(alpha * log pi - min Q(rep, weights)) +
        lambda_mask * mean(sum of weights on masked slots)

    Returns (loss, actor grads, log_prob array) so the alpha stage can
    reuse the same sample's log-probabilities if desired.
    """
    flat = batch["rep"]
    masked = batch["masked"]
    b, action_dim = flat.shape[0], masked.shape[1] + 1

    mean, log_std, pcache = policy_forward(params, flat)
    sigma = np.exp(log_std)
    logits = mean + sigma * eps
    w = re_weight(logits, temperature)
    logp = gaussian_log_prob(eps, log_std)

    qa, ca = critic_forward(params, "q1/", flat, w)
    qb, cb = critic_forward(params, "q2/", flat, w)
    qmin = np.minimum(qa, qb)
    penalty_per = (w[:, 1:] * masked).sum(axis=1)
    j = float(np.mean(alpha * logp - qmin) + lambda_mask * np.mean(penalty_per))
    if not with_grads:
        return j, {}, logp

    use_a = (qa <= qb).astype(float)
    g_w = (_critic_action_grad(params, "q1/", ca, -use_a / b, action_dim)
           + _critic_action_grad(params, "q2/", cb, -(1.0 - use_a) / b, action_dim))
    g_w[:, 1:] += (lambda_mask / b) * masked
    g_logits = reweight_bwd(g_w, w, temperature)

    g_mean = g_logits
    g_ls = g_logits * sigma * eps - alpha / b
    g_ls = g_ls * pcache["clip_pass"]

    grads: dict[str, np.ndarray] = {}
    z1 = pcache["z1"]
    g_z1 = g_mean @ params["actor/wm"].T + g_ls @ params["actor/ws"].T
    grads["actor/wm"] = z1.reshape(-1, z1.shape[-1]).T @ g_mean
    grads["actor/bm"] = g_mean.sum(axis=0)
    grads["actor/ws"] = z1.reshape(-1, z1.shape[-1]).T @ g_ls
    grads["actor/bs"] = g_ls.sum(axis=0)
    g_a1 = g_z1 * nn.gelu_grad(pcache["a1"])
    _, gw1, gb1 = nn.dense_bwd(g_a1, pcache["flat"], params["actor/w1"])
    grads["actor/w1"], grads["actor/b1"] = gw1, gb1
    return j, grads, logp


def alpha_loss(log_pi: np.ndarray, alpha: float, target_entropy: float):
    """Entropy-temperature loss J(alpha) = mean(-alpha*(log pi + H_target)).

    The gradient is taken w.r.t. log(alpha); it vanishes when the mean
    log-probability equals -H_target.
    """
    mean_term = float(np.mean(log_pi) + target_entropy)
    j = -alpha * mean_term
    grad_log_alpha = -alpha * mean_term
    return j, grad_log_alpha


def update_targets(params: dict, tau: float) -> None:
    """EMA update: target <- tau * online + (1 - tau) * target."""
    if not 0.0 < tau <= 1.0:
        raise AgentError(f"tau must be in (0, 1], got {tau}")
    for online, target in zip(CRITIC_PREFIXES, TARGET_PREFIXES):
        for leaf in ("w1", "b1", "w2", "b2"):
            t = params[target + leaf]
            t *= 1.0 - tau
            t += tau * params[online + leaf]
