import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earnmore.portfolio_env import PortfolioVector
from earnmore.representation import MaskableRepresentation
from earnmore.sac_agent import (AgentError, act, actor_loss, alpha_loss,
                                critic_loss, critic_pair, gaussian_log_prob,
                                init_agent_params, re_weight, sample_policy,
                                update_targets)

from oracles import finite_difference_grad, relative_error

N_STOCKS = 3
EMBED = 8
HIDDEN = 8
ACTION = N_STOCKS + 1
TEMP_GRID = (10.0, 5.0, 1.0, 0.5, 0.1, 0.05, 0.01)


def make_params(seed=0):
    return init_agent_params(np.random.default_rng(seed), N_STOCKS, EMBED, HIDDEN)


def make_batch(seed=1, b=5):
    rng = np.random.default_rng(seed)
    rep = rng.standard_normal((b, (N_STOCKS + 1) * EMBED))
    rep_next = rng.standard_normal((b, (N_STOCKS + 1) * EMBED))
    raw = rng.random((b, ACTION))
    action = raw / raw.sum(axis=1, keepdims=True)
    reward = rng.standard_normal(b) * 0.01
    masked = rng.random((b, N_STOCKS)) < 0.5
    masked[0] = [True, False, False]  # at least one masked slot somewhere
    return {"rep": rep, "rep_next": rep_next, "action": action,
            "reward": reward, "masked": masked}


def make_rep(seed=2):
    rng = np.random.default_rng(seed)
    slots = rng.standard_normal((N_STOCKS + 1, EMBED))
    flag = np.array([False, True, False])
    return MaskableRepresentation(slots=slots, masked_flag=flag)


class TestReWeight:
    def test_t1_equals_softmax(self, rng):
        for _ in range(100):
            x = rng.standard_normal(7) * 3
            w = re_weight(x, 1.0)
            e = np.exp(x - x.max())
            np.testing.assert_allclose(w, e / e.sum(), atol=1e-12)

    def test_spec_example_high_precision(self):
        # independent evaluation in extended precision
        x = np.array([2.0, 1.0, 0.0], dtype=np.longdouble)
        e = np.exp(x / np.longdouble(0.1))
        expected = (e / e.sum()).astype(float)
        w = re_weight(np.array([2.0, 1.0, 0.0]), 0.1)
        np.testing.assert_allclose(w, expected, rtol=1e-12)
        assert w[0] == pytest.approx(0.99995, abs=1e-5)
        assert w[1] == pytest.approx(4.54e-5, rel=1e-2)
        assert w[2] == pytest.approx(2.06e-9, rel=1e-2)

    def test_equal_logits_uniform(self):
        for t in (10.0, 1.0, 0.01):
            w = re_weight(np.zeros(3), t)
            assert w[0] == w[1] == w[2]
            assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_constant_shift_invariance(self, rng):
        x = rng.standard_normal(5)
        for t in TEMP_GRID:
            np.testing.assert_allclose(re_weight(x, t), re_weight(x + 7.3, t),
                                       atol=1e-12)

    def test_sum_one_and_open_interval(self, rng):
        for _ in range(200):
            x = rng.standard_normal(6) * 5
            t = float(rng.uniform(0.05, 10))
            w = re_weight(x, t)
            assert abs(w.sum() - 1.0) < 1e-12
            assert np.all(w > 0) and np.all(w < 1)

    def test_order_preserved(self, rng):
        for _ in range(100):
            x = rng.standard_normal(6)
            for t in TEMP_GRID:
                w = re_weight(x, t)
                np.testing.assert_array_equal(np.argsort(x), np.argsort(w))

    def test_max_weight_monotone_in_temperature(self, rng):
        for _ in range(200):
            x = rng.standard_normal(6)
            maxima = [re_weight(x, t).max() for t in TEMP_GRID]
            assert all(b >= a - 1e-15 for a, b in zip(maxima, maxima[1:]))

    def test_one_hot_limit(self, rng):
        for _ in range(50):
            x = rng.standard_normal(6)
            x[rng.integers(0, 6)] = x.max() + 0.05  # unique max by a margin
            w = re_weight(x, 1e-3)
            assert w.max() > 1 - 1e-6
            assert np.argmax(w) == np.argmax(x)

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(AgentError, match="positive"):
            re_weight(np.zeros(3), 0.0)
        with pytest.raises(AgentError, match="positive"):
            re_weight(np.zeros(3), -1.0)

    def test_epsilon_sparsification_flag(self):
        w = re_weight(np.array([3.0, 0.0, 0.0]), 0.2, sparsify_epsilon=1e-4)
        assert w[1] == 0.0 and w[2] == 0.0
        assert w[0] == 1.0
        # default path never produces exact zeros
        w2 = re_weight(np.array([3.0, 0.0, 0.0]), 0.2)
        assert np.all(w2 > 0)


class TestAct:
    def test_equal_logits_uniform_action(self):
        params = make_params()
        for key in params:
            if key.startswith("actor/"):
                params[key] = np.zeros_like(params[key])
        action = act(params, make_rep(), stochastic=False, temperature=0.5)
        np.testing.assert_allclose(action.as_array(), 1.0 / ACTION, atol=1e-12)

    def test_deterministic_repeatable(self):
        params = make_params()
        rep = make_rep()
        a1 = act(params, rep, stochastic=False, temperature=0.1)
        a2 = act(params, rep, stochastic=False, temperature=0.1)
        np.testing.assert_array_equal(a1.as_array(), a2.as_array())

    def test_stochastic_seed_replay(self):
        params = make_params()
        rep = make_rep()
        a1 = act(params, rep, stochastic=True, temperature=0.5,
                 rng=np.random.default_rng(77))
        a2 = act(params, rep, stochastic=True, temperature=0.5,
                 rng=np.random.default_rng(77))
        a3 = act(params, rep, stochastic=True, temperature=0.5,
                 rng=np.random.default_rng(78))
        np.testing.assert_array_equal(a1.as_array(), a2.as_array())
        assert not np.array_equal(a1.as_array(), a3.as_array())

    def test_action_is_valid_portfolio(self, rng):
        params = make_params()
        for _ in range(20):
            slots = rng.standard_normal((N_STOCKS + 1, EMBED))
            rep = MaskableRepresentation(slots=slots,
                                         masked_flag=np.zeros(N_STOCKS, bool))
            action = act(params, rep, stochastic=True, temperature=0.1, rng=rng)
            assert isinstance(action, PortfolioVector)

    def test_nonfinite_logits_diagnosed(self):
        params = make_params()
        params["actor/bm"] = params["actor/bm"] + np.inf
        with pytest.raises(AgentError, match="non-finite"):
            act(params, make_rep(), stochastic=False, temperature=0.1)


class TestCriticLoss:
    def test_gamma_zero_reduces_to_reward_regression(self):
        params = make_params()
        # identical critics: J_Q must equal 1/2 mean (Q - r)^2
        for leaf in ("w1", "b1", "w2", "b2"):
            params["q2/" + leaf] = params["q1/" + leaf].copy()
        batch = make_batch()
        eps = np.zeros((5, ACTION))
        j, _ = critic_loss(params, batch, gamma=0.0, alpha=0.3,
                           temperature=0.5, eps_next=eps)
        from earnmore.sac_agent import critic_forward
        q, _ = critic_forward(params, "q1/", batch["rep"], batch["action"])
        assert j == pytest.approx(0.5 * np.mean((q - batch["reward"]) ** 2),
                                  rel=1e-12)

    def test_perfect_q_zero_loss(self):
        params = make_params()
        batch = make_batch()
        batch["reward"] = np.full(5, 0.37)
        for prefix in ("q1/", "q2/"):
            params[prefix + "w1"] = np.zeros_like(params[prefix + "w1"])
            params[prefix + "w2"] = np.zeros_like(params[prefix + "w2"])
            params[prefix + "b1"] = np.zeros_like(params[prefix + "b1"])
            params[prefix + "b2"] = np.full_like(params[prefix + "b2"], 0.37)
        j, _ = critic_loss(params, batch, gamma=0.0, alpha=0.1,
                           temperature=0.5, eps_next=np.zeros((5, ACTION)))
        assert j == pytest.approx(0.0, abs=1e-15)

    def test_twin_swap_symmetry(self):
        params = make_params()
        batch = make_batch()
        eps = np.random.default_rng(5).standard_normal((5, ACTION))
        j1, _ = critic_loss(params, batch, 0.99, 0.2, 0.5, eps)
        swapped = dict(params)
        for leaf in ("w1", "b1", "w2", "b2"):
            swapped["q1/" + leaf], swapped["q2/" + leaf] = \
                params["q2/" + leaf], params["q1/" + leaf]
            swapped["tq1/" + leaf], swapped["tq2/" + leaf] = \
                params["tq2/" + leaf], params["tq1/" + leaf]
        j2, _ = critic_loss(swapped, batch, 0.99, 0.2, 0.5, eps)
        assert j1 == pytest.approx(j2, rel=1e-14)

    @pytest.mark.parametrize("name", ["q1/w1", "q1/b1", "q2/w2", "q2/b2"])
    def test_gradients_match_finite_differences(self, name):
        params = make_params()
        batch = make_batch()
        eps = np.random.default_rng(6).standard_normal((5, ACTION))
        _, grads = critic_loss(params, batch, 0.95, 0.2, 0.5, eps)

        def loss_fn(p):
            return critic_loss(p, batch, 0.95, 0.2, 0.5, eps,
                               with_grads=False)[0]

        fd = finite_difference_grad(loss_fn, params, name, eps=1e-4)
        assert relative_error(grads[name], fd) < 1e-4
        assert np.linalg.norm(fd) > 0


class TestActorLoss:
    def test_penalty_off_matches_no_masking(self):
        params = make_params()
        batch = make_batch()
        batch["masked"] = np.zeros((5, N_STOCKS), dtype=bool)
        eps = np.random.default_rng(7).standard_normal((5, ACTION))
        j_nopen, _, _ = actor_loss(params, batch, 0.2, 0.0, 0.5, eps)
        j_pen, _, _ = actor_loss(params, batch, 0.2, 5.0, 0.5, eps)
        assert j_nopen == pytest.approx(j_pen, rel=1e-14)

    def test_penalty_contribution_equals_masked_weight(self):
        params = make_params()
        batch = make_batch(b=1)
        batch["masked"] = np.array([[False, True, False]])
        eps = np.random.default_rng(8).standard_normal((1, ACTION))
        j0, _, _ = actor_loss(params, batch, 0.2, 0.0, 0.5, eps)
        j1, _, _ = actor_loss(params, batch, 0.2, 1.0, 0.5, eps)
        pol = sample_policy(params, batch["rep"], eps)
        w = re_weight(pol.sampled_logits, 0.5)
        masked_mass = w[0, 2]  # stock slot 1 -> weight column 2
        assert j1 - j0 == pytest.approx(masked_mass, rel=1e-12)

    @pytest.mark.parametrize("name", ["actor/w1", "actor/b1", "actor/wm",
                                      "actor/bm", "actor/ws", "actor/bs"])
    def test_gradients_match_finite_differences(self, name):
        params = make_params()
        batch = make_batch()
        eps = np.random.default_rng(9).standard_normal((5, ACTION))
        _, grads, _ = actor_loss(params, batch, 0.2, 1.0, 0.5, eps)

        def loss_fn(p):
            return actor_loss(p, batch, 0.2, 1.0, 0.5, eps,
                              with_grads=False)[0]

        fd = finite_difference_grad(loss_fn, params, name, eps=1e-4)
        assert relative_error(grads[name], fd) < 1e-4
        assert np.linalg.norm(fd) > 0


class TestAlphaLoss:
    def test_stationary_when_mean_logp_matches_target(self):
        target = -4.0
        log_pi = np.array([4.0, 4.0, 4.0])  # mean log pi = -target
        j, grad = alpha_loss(log_pi, alpha=0.7, target_entropy=target)
        assert grad == pytest.approx(0.0, abs=1e-15)
        assert j == pytest.approx(0.0, abs=1e-15)

    def test_alpha_zero_limit(self):
        j, grad = alpha_loss(np.array([-3.0, -5.0]), alpha=0.0,
                             target_entropy=-4.0)
        assert j == 0.0 and grad == 0.0

    def test_hand_evaluation(self):
        log_pi = np.array([-2.0, -6.0])
        # J = -alpha * (mean(log_pi) + target) = -0.5 * (-4 + -3) = 3.5
        j, grad = alpha_loss(log_pi, alpha=0.5, target_entropy=-3.0)
        assert j == pytest.approx(3.5, rel=1e-14)
        assert grad == pytest.approx(3.5, rel=1e-14)

    def test_gradient_matches_finite_differences(self):
        params = make_params()
        batch = make_batch()
        eps = np.random.default_rng(10).standard_normal((5, ACTION))
        pol = sample_policy(params, batch["rep"], eps)
        target = -float(ACTION)
        la = {"log_alpha": np.array(0.31)}
        _, grad = alpha_loss(pol.log_prob, float(np.exp(la["log_alpha"])), target)

        def loss_fn(p):
            return alpha_loss(pol.log_prob, float(np.exp(p["log_alpha"])),
                              target)[0]

        fd = finite_difference_grad(loss_fn, la, "log_alpha", eps=1e-4)
        assert relative_error(np.array(grad), fd) < 1e-4


class TestTargets:
    def test_tau_one_copies_online(self):
        params = make_params()
        params["q1/w1"] = params["q1/w1"] + 1.0
        update_targets(params, 1.0)
        np.testing.assert_array_equal(params["tq1/w1"], params["q1/w1"])

    def test_tau_zero_rejected(self):
        with pytest.raises(AgentError, match="tau"):
            update_targets(make_params(), 0.0)

    def test_ema_hand_formula(self):
        params = make_params()
        online = params["q1/w1"].copy()
        target0 = params["tq1/w1"].copy() + 0.5
        params["tq1/w1"] = target0.copy()
        update_targets(params, 0.005)
        expected = 0.005 * online + 0.995 * target0
        np.testing.assert_allclose(params["tq1/w1"], expected, rtol=1e-15)

    def test_critic_pair_targets_track(self):
        params = make_params()
        batch = make_batch()
        pair = critic_pair(params, batch["rep"], batch["action"])
        np.testing.assert_array_equal(pair.q1, pair.target_q1)  # fresh init
        params["q1/b2"] = params["q1/b2"] + 1.0
        update_targets(params, 0.5)
        pair2 = critic_pair(params, batch["rep"], batch["action"])
        np.testing.assert_allclose(pair2.target_q1, pair.q1 + 0.5, rtol=1e-12)


class TestPolicyOutput:
    def test_log_std_clamped_and_log_prob_finite(self, rng):
        params = make_params()
        params["actor/bs"] = params["actor/bs"] + 100.0  # force clamp high
        flat = rng.standard_normal((4, (N_STOCKS + 1) * EMBED))
        eps = rng.standard_normal((4, ACTION))
        pol = sample_policy(params, flat, eps)
        assert np.all(pol.log_std <= 2.0) and np.all(pol.log_std >= -20.0)
        assert np.all(np.isfinite(pol.log_prob))

    def test_log_prob_matches_gaussian_density(self, rng):
        eps = rng.standard_normal((3, ACTION))
        log_std = rng.uniform(-1, 1, size=(3, ACTION))
        lp = gaussian_log_prob(eps, log_std)
        from scipy.stats import norm
        expected = [sum(norm.logpdf(e * np.exp(s), scale=np.exp(s))
                        for e, s in zip(row_e, row_s))
                    for row_e, row_s in zip(eps, log_std)]
        np.testing.assert_allclose(lp, expected, rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=2, max_size=12),
       st.floats(0.01, 10))
def test_reweight_simplex_property(logits, temperature):
    w = re_weight(np.array(logits), temperature)
    assert abs(w.sum() - 1.0) < 1e-12
    assert np.all(w >= 0)
