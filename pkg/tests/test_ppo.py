import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from kmpgait.env import EnvConfig, QuadrupedEnv, TargetReachEnv
from kmpgait.ppo import (
    AdamConstants,
    AdamState,
    GaussianPolicy,
    Mlp,
    PpoConfig,
    TrainingError,
    ValueNet,
    adam_update,
    adapt_beta,
    advantage,
    collect_rollouts,
    critic_loss,
    gaussian_kl,
    kl_divergence,
    surrogate_loss,
    train,
)
from kmpgait.ppo.policy import HIDDEN
from oracles import central_differences, max_relative_error

LOW = np.array([0.15, -0.5, 0.15, -0.5])
HIGH = np.array([0.24, 0.5, 0.24, 0.5])


def small_policy(seed=0, obs_dim=5, hidden=(6, 4)):
    rng = np.random.default_rng(seed)
    pol = GaussianPolicy.init(obs_dim, LOW, HIGH, rng, hidden=hidden)
    # tanh inputs away from zero so the nonlinearity matters
    pol.net.biases[-1] = rng.normal(0, 0.3, size=pol.net.biases[-1].shape)
    return pol


def toy_batch(policy, n=10, seed=1):
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(n, policy.net.sizes[0]))
    actions, logp = policy.sample(states, rng)
    adv = rng.normal(size=n)
    return states, actions, logp, adv


def test_default_architecture():
    assert HIDDEN == (200, 100)
    rng = np.random.default_rng(0)
    pol = GaussianPolicy.init(28, LOW, HIGH, rng)
    val = ValueNet.init(28, rng)
    assert pol.net.sizes == (28, 200, 100, 4)
    assert pol.net.activations == ("relu", "relu", "tanh")
    assert val.net.sizes == (28, 200, 100, 1)
    assert val.net.activations == ("relu", "relu", "linear")


def test_zero_network_gives_box_center():
    pol = small_policy()
    pol.net.set_params([np.zeros_like(p) for p in pol.net.params()])
    mean, std = pol.forward(np.ones((3, 5)))
    np.testing.assert_allclose(mean, np.tile(0.5 * (LOW + HIGH), (3, 1)))
    np.testing.assert_allclose(std, np.exp(pol.log_std))


def test_mean_inside_box_for_random_nets():
    rng = np.random.default_rng(4)
    for _ in range(20):
        pol = GaussianPolicy.init(28, LOW, HIGH, rng)
        for w in pol.net.weights:
            w *= 5
        mean, _ = pol.forward(rng.normal(size=(50, 28)) * 10)
        assert np.all(mean >= LOW) and np.all(mean <= HIGH)


def test_hand_evaluated_forward():
    # 1 -> 1 hidden relu unit -> 1 tanh output
    net = Mlp([np.array([[2.0]]), np.array([[0.5]])], [np.array([-1.0]), np.array([0.25])], ("relu", "tanh"))
    pol = GaussianPolicy(net, [math.log(0.1)], [0.0], [2.0])
    mean, std = pol.forward([[1.5]])
    # relu(2*1.5 - 1) = 2; tanh(0.5*2 + 0.25) = tanh(1.25); box [0, 2] -> 1 + tanh
    assert mean[0, 0] == pytest.approx(1.0 + math.tanh(1.25), abs=1e-15)
    assert std[0] == pytest.approx(0.1)


def test_non_finite_state_rejected():
    with pytest.raises(ValueError, match="non-finite"):
        small_policy().forward([[np.nan, 0, 0, 0, 0]])


def test_log_prob_matches_scipy():
    pol = small_policy()
    s = np.random.default_rng(0).normal(size=(4, 5))
    a = np.tile(0.5 * (LOW + HIGH), (4, 1)) + 0.01
    mean, std = pol.forward(s)
    ref = norm.logpdf(a, mean, std).sum(axis=1)
    np.testing.assert_allclose(pol.log_prob(s, a), ref, rtol=1e-12)


def test_mlp_backward_fd():
    rng = np.random.default_rng(2)
    net = Mlp.init((3, 5, 4, 2), ("relu", "tanh", "linear"), rng)
    x = rng.normal(size=(7, 3))
    c = rng.normal(size=(7, 2))
    out, cache = net.forward(x, return_cache=True)
    grads = net.backward(cache, c)
    params = net.params()
    num = central_differences(lambda: float(np.sum(net.forward(x) * c)), params)
    assert max_relative_error(grads, num) < 1e-5


def test_advantage_examples():
    assert advantage(1.0, 0.0, 0.0, False, 0.994) == pytest.approx(1.0)
    assert advantage(0.0, 1.0, 2.0, False, 0.994) == pytest.approx(0.988, abs=1e-12)
    assert advantage(1.0, 3.0, 123.0, True, 0.994) == pytest.approx(-2.0)


def test_adapt_beta_rules():
    assert adapt_beta(1.0, 0.001, 0.01) == 0.5
    assert adapt_beta(1.0, 0.02, 0.01) == 2.0
    assert adapt_beta(1.0, 0.01, 0.01) == 1.0
    # dead zone edges stay unchanged
    assert adapt_beta(1.0, 0.01 / 1.5, 0.01) == 1.0
    assert adapt_beta(1.0, 0.015, 0.01) == 1.0


def test_kl_identical_zero_and_std_ratio():
    pol = small_policy()
    s = np.random.default_rng(0).normal(size=(6, 5))
    assert kl_divergence(pol, pol.copy(), s) == 0.0
    wide = pol.copy()
    wide.log_std = pol.log_std + math.log(2.0)
    d = LOW.size
    assert kl_divergence(pol, wide, s) == pytest.approx(d * (math.log(2) + 1 / 8 - 1 / 2), rel=1e-12)


def test_kl_nonnegative_random_pairs():
    rng = np.random.default_rng(5)
    mp, mq = rng.normal(size=(1000, 3)), rng.normal(size=(1000, 3))
    lp, lq = rng.normal(size=(1000, 3)), rng.normal(size=(1000, 3))
    kl = np.array([gaussian_kl(mp[i], lp[i], mq[i], lq[i])[0] for i in range(1000)])
    assert np.all(kl >= 0)


@settings(max_examples=30)
@given(st.floats(-2, 2), st.floats(-1, 1), st.floats(-2, 2), st.floats(-1, 1))
def test_kl_matches_numerical_integral(m1, s1, m2, s2):
    x = np.linspace(-40, 40, 160001)
    p = norm.pdf(x, m1, math.exp(s1))
    q = norm.logpdf(x, m2, math.exp(s2))
    ref = np.trapezoid(p * (norm.logpdf(x, m1, math.exp(s1)) - q), x)
    assert gaussian_kl(np.array([m1]), np.array([s1]), np.array([m2]), np.array([s2]))[0] == pytest.approx(ref, abs=1e-6)


def test_surrogate_identical_policies():
    pol = small_policy()
    s, a, lp, adv = toy_batch(pol)
    mean, _ = pol.forward(s)
    obj, _ = surrogate_loss(pol, s, a, lp, adv, mean, pol.log_std.copy(), 3.0)
    assert obj == pytest.approx(np.mean(adv), abs=1e-12)


def _surrogate_fd_error(beta):
    old = small_policy()
    s, a, lp, adv = toy_batch(old)
    old_mean, _ = old.forward(s)
    pol = old.copy()
    rng = np.random.default_rng(9)
    pol.set_params([p + 0.05 * rng.normal(size=p.shape) for p in pol.params()])
    _, grads = surrogate_loss(pol, s, a, lp, adv, old_mean, old.log_std, beta)
    params = pol.net.params() + [pol.log_std]

    def f():
        return surrogate_loss(pol, s, a, lp, adv, old_mean, old.log_std, beta)[0]

    return max_relative_error(grads, central_differences(f, params))


@pytest.mark.parametrize("beta", [0.0, 1.0, 10.0])
def test_surrogate_gradients_fd(beta):
    assert _surrogate_fd_error(beta) < 1e-4


def test_critic_gradients_fd():
    rng = np.random.default_rng(3)
    val = ValueNet(Mlp.init((5, 6, 4, 1), ("relu", "relu", "linear"), rng), obs_scale=np.linspace(0.5, 2, 5))
    s = rng.normal(size=(10, 5))
    y = rng.normal(size=10)
    _, grads = critic_loss(val, s, y)
    num = central_differences(lambda: critic_loss(val, s, y)[0], val.net.params())
    assert max_relative_error(grads, num) < 1e-4


def test_large_beta_freezes_policy():
    old = small_policy()
    s, a, lp, adv = toy_batch(old, n=30)
    old_mean, _ = old.forward(s)
    moves = []
    for beta in (0.0, 1.0, 100.0, 1e4):
        pol = old.copy()
        opt = AdamState.zeros_like(pol.params())
        for _ in range(30):
            _, g = surrogate_loss(pol, s, a, lp, adv, old_mean, old.log_std, beta)
            params, opt = adam_update(pol.params(), [-x for x in g], opt, 1e-3)
            pol.set_params(params)
        m, _ = pol.forward(s)
        moves.append(float(np.max(np.abs(m - old_mean))) + float(np.max(np.abs(pol.log_std - old.log_std))))
    assert all(b < a for a, b in zip(moves, moves[1:]))


def test_adam_first_step_hand_value():
    p = [np.array([1.0, -2.0])]
    g = [np.array([0.5, -0.1])]
    st0 = AdamState.zeros_like(p)
    new, st1 = adam_update(p, g, st0, 0.01)
    # bias-corrected moments equal g and g^2 on the first step
    np.testing.assert_allclose(new[0], p[0] - 0.01 * g[0] / (np.abs(g[0]) + 1e-8), rtol=1e-12)
    assert st1.step == 1 and st0.step == 0
    np.testing.assert_array_equal(p[0], [1.0, -2.0])
    np.testing.assert_allclose(st1.m[0], 0.1 * g[0])
    np.testing.assert_allclose(st1.v[0], 0.001 * g[0] ** 2)


def test_adam_second_step_hand_value():
    c = AdamConstants()
    p, g1, g2 = np.array([0.0]), np.array([1.0]), np.array([3.0])
    q, s = adam_update([p], [g1], AdamState.zeros_like([p]), 0.1, c)
    q, s = adam_update(q, [g2], s, 0.1, c)
    m = 0.9 * 0.1 * 1.0 + 0.1 * 3.0
    v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0
    step2 = 0.1 * (m / (1 - 0.81)) / (math.sqrt(v / (1 - 0.999**2)) + 1e-8)
    assert q[0][0] == pytest.approx(-0.1 * 1 / (1 + 1e-8) - step2, rel=1e-12)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_update([np.zeros(2)], [np.zeros(3)], AdamState.zeros_like([np.zeros(2)]), 0.1)


def test_ppo_config_defaults():
    c = PpoConfig()
    assert (c.gamma, c.lr_actor, c.lr_critic, c.kl_target, c.steps_per_epoch, c.n_envs) == (
        0.994, 1e-4, 1e-4, 0.01, 3000, 30)
    assert (c.adam.beta1, c.adam.beta2, c.adam.eps) == (0.9, 0.999, 1e-8)
    for bad in ({"gamma": 1.5}, {"kl_target": 0.0}, {"beta_kl": -1.0}):
        with pytest.raises(ValueError):
            PpoConfig(**bad)


def test_collect_rollouts_structure():
    cfg = PpoConfig(steps_per_epoch=60, n_envs=3)
    env_cfg = EnvConfig(horizon=7)
    rng = np.random.default_rng(0)
    pol = GaussianPolicy.init(28, *QuadrupedEnv(env_cfg).action_bounds(), rng, hidden=(8, 8))
    batch = collect_rollouts(lambda i: QuadrupedEnv(env_cfg), pol, cfg, seed=4)
    assert len(batch) == 60
    assert batch.states.shape == (60, 28) and batch.actions.shape == (60, 4)
    # log-probs are the sampling-time densities
    np.testing.assert_allclose(batch.log_probs, pol.log_prob(batch.states, batch.actions), rtol=1e-12)
    # 20 steps per env with horizon 7: two terminal steps each, rest truncated
    assert batch.dones.sum() == 6
    again = collect_rollouts(lambda i: QuadrupedEnv(env_cfg), pol, cfg, seed=4)
    np.testing.assert_array_equal(batch.actions, again.actions)


def test_env_failure_names_episode():
    class Broken(TargetReachEnv):
        def step(self, action):
            raise RuntimeError("boom")

    cfg = PpoConfig(steps_per_epoch=4, n_envs=2, epochs=1)
    with pytest.raises(TrainingError, match="episode"):
        train(EnvConfig(), cfg, 0, env_factory=lambda i: Broken())


def test_nan_rewards_abort_training():
    class NanEnv(TargetReachEnv):
        def step(self, action):
            res = super().step(action)
            res.reward = float("nan")
            return res

    cfg = PpoConfig(steps_per_epoch=10, n_envs=2, epochs=2, hidden=(4, 4))
    with pytest.raises(TrainingError, match="epoch 0"):
        train(EnvConfig(), cfg, 0, env_factory=lambda i: NanEnv())


def test_learns_toy_target():
    cfg = PpoConfig(steps_per_epoch=200, n_envs=10, epochs=200, lr_actor=1e-3, lr_critic=1e-3, hidden=(32, 32))
    res = train(EnvConfig(), cfg, 0, env_factory=lambda i: TargetReachEnv(0.3, horizon=10))
    mean, _ = res.policy.forward(np.ones((1, 1)))
    assert abs(mean[0, 0] - 0.3) <= 0.1
    first = np.mean([r["mean_return"] for r in res.curve[:10]])
    last = np.mean([r["mean_return"] for r in res.curve[-10:]])
    assert last > first


def test_training_deterministic():
    cfg = PpoConfig(steps_per_epoch=60, n_envs=3, epochs=2, hidden=(8, 8), eval_steps=50)
    a = train(EnvConfig(horizon=20), cfg, 3)
    b = train(EnvConfig(horizon=20), cfg, 3)
    assert a.curve == b.curve
    np.testing.assert_array_equal(a.evaluation.angles, b.evaluation.angles)
    assert len(a.evaluation) == 50
