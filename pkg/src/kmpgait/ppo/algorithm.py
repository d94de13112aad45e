"""KL-penalised PPO: rollouts, losses with analytic gradients, training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..env import EnvConfig, QuadrupedEnv
from ..trajectory import TrajectoryLog, trajectory_from_traces
from .optim import AdamConstants, AdamState, adam_update
from .policy import HIDDEN, GaussianPolicy, ValueNet, gaussian_kl, gaussian_log_prob, kl_divergence

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class PpoConfig:
    gamma: float = 0.994
    lr_actor: float = 1e-4
    lr_critic: float = 1e-4
    kl_target: float = 0.01
    steps_per_epoch: int = 3000
    n_envs: int = 30
    beta_kl: float = 1.0
    epochs: int = 300
    max_env_steps: int | None = None
    actor_iters: int = 25
    critic_iters: int = 25
    hidden: tuple[int, ...] = HIDDEN
    init_std_fraction: float = 0.3
    normalize_advantages: bool = True
    eval_steps: int = 4800
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.kl_target > 0:
            raise ValueError("kl_target must be positive")
        if not self.beta_kl > 0:
            raise ValueError("beta_kl must be positive")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ValueError("learning rates must be positive")
        for name in ("steps_per_epoch", "n_envs", "epochs", "actor_iters", "critic_iters", "eval_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")

    @property
    def adam(self) -> AdamConstants:
        return AdamConstants(self.adam_beta1, self.adam_beta2, self.adam_eps)


@dataclass
class RolloutBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    log_probs: np.ndarray
    episode_ids: np.ndarray
    speeds: np.ndarray
    episode_returns: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return self.rewards.size


# -- scalar building blocks -------------------------------------------------

def advantage(reward, v_state, v_next, done, gamma):
    """One-step TD advantage; terminal transitions bootstrap from zero."""
    reward = np.asarray(reward, dtype=float)
    not_done = 1.0 - np.asarray(done, dtype=float)
    return reward + gamma * not_done * np.asarray(v_next, dtype=float) - np.asarray(v_state, dtype=float)


def adapt_beta(beta_kl: float, d_kl: float, delta: float) -> float:
    if d_kl < delta / 1.5:
        return beta_kl / 2.0
    if d_kl > delta * 1.5:
        return beta_kl * 2.0
    return beta_kl


def batch_advantages(batch: RolloutBatch, value: ValueNet, gamma: float) -> np.ndarray:
    return advantage(batch.rewards, value(batch.states), value(batch.next_states), batch.dones, gamma)


# -- losses -----------------------------------------------------------------

def surrogate_loss(policy: GaussianPolicy, states, actions, log_probs_old, advantages,
                   old_mean, old_log_std, beta_kl):
    """Importance-weighted advantage minus the KL penalty (to be maximised).

    ``old_mean``/``old_log_std`` describe the behaviour policy on ``states``;
    ``log_probs_old`` are the log-densities stored when the actions were
    sampled. Returns ``(objective, gradients)`` with gradients aligned with
    ``policy.params()``.
    """
    states = np.atleast_2d(states)
    actions = np.atleast_2d(actions)
    adv = np.asarray(advantages, dtype=float)
    n = adv.size
    mean, _, cache = policy.forward(states, return_cache=True)
    log_std = policy.log_std
    inv_var = np.exp(-2.0 * log_std)
    logp = gaussian_log_prob(actions, mean, log_std)
    ratio = np.exp(logp - np.asarray(log_probs_old, dtype=float))
    kl = gaussian_kl(old_mean, old_log_std, mean, log_std)
    objective = float(np.mean(ratio * adv) - beta_kl * np.mean(kl))

    w = (ratio * adv)[:, None] / n
    diff = actions - mean
    g_mean = w * diff * inv_var
    g_log_std = np.sum(w * (diff * diff * inv_var - 1.0), axis=0)

    old_var = np.exp(2.0 * old_log_std)
    mdiff = mean - old_mean
    g_mean -= (beta_kl / n) * mdiff * inv_var
    g_log_std -= (beta_kl / n) * np.sum(1.0 - (old_var + mdiff * mdiff) * inv_var, axis=0)

    grads = policy.net.backward(cache, g_mean * policy.half_width)
    return objective, grads + [g_log_std]


def critic_loss(value: ValueNet, states, targets):
    """Mean squared error to fixed regression targets and its gradients."""
    out, cache = value.net.forward(value.inputs(states), return_cache=True)
    err = out[:, 0] - np.asarray(targets, dtype=float)
    loss = float(np.mean(err * err))
    grads = value.net.backward(cache, (2.0 / err.size) * err[:, None])
    return loss, grads


# -- data collection ----------------------------------------------------------

def collect_rollouts(env_factory: Callable[[int], object], policy: GaussianPolicy,
                     config: PpoConfig, seed: int) -> RolloutBatch:
    """Gather at least ``steps_per_epoch`` transitions from ``n_envs`` environments.

    Each environment is reset at the start of the call and runs fresh
    episodes until its share of the step budget is used; episodes still
    running at that point are truncated (not terminal).
    """
    rng = np.random.default_rng(seed)
    n_envs = config.n_envs
    per_env = math.ceil(config.steps_per_epoch / n_envs)
    envs = [env_factory(i) for i in range(n_envs)]
    env_seeds = rng.integers(0, 2**31 - 1, size=n_envs)
    episode_counter = 0
    cur = []
    ep_id = np.zeros(n_envs, dtype=int)
    ep_ret = np.zeros(n_envs)
    for i, env in enumerate(envs):
        cur.append(env.reset(int(env_seeds[i])).vector)
        ep_id[i] = episode_counter
        episode_counter += 1

    S, A, R, S2, D, LP, E, V = [], [], [], [], [], [], [], []
    returns: list[float] = []
    for t in range(per_env):
        states = np.stack(cur)
        actions, logp = policy.sample(states, rng)
        for i, env in enumerate(envs):
            try:
                res = env.step(actions[i])
            except Exception as exc:
                raise TrainingError(f"environment failure in episode {ep_id[i]}: {exc}") from exc
            nxt = res.next_state.vector
            S.append(states[i])
            A.append(actions[i])
            R.append(res.reward)
            S2.append(nxt)
            D.append(res.done)
            LP.append(logp[i])
            E.append(ep_id[i])
            V.append(res.info.get("speed", 0.0))
            ep_ret[i] += res.reward
            if res.done:
                returns.append(float(ep_ret[i]))
                ep_ret[i] = 0.0
                if t < per_env - 1:
                    nxt = env.reset(int(rng.integers(0, 2**31 - 1))).vector
                    ep_id[i] = episode_counter
                    episode_counter += 1
            cur[i] = nxt
    for i in range(n_envs):
        if not D[-n_envs + i]:
            returns.append(float(ep_ret[i]))
    return RolloutBatch(
        states=np.asarray(S),
        actions=np.asarray(A),
        rewards=np.asarray(R, dtype=float),
        next_states=np.asarray(S2),
        dones=np.asarray(D, dtype=bool),
        log_probs=np.asarray(LP, dtype=float),
        episode_ids=np.asarray(E, dtype=int),
        speeds=np.asarray(V, dtype=float),
        episode_returns=returns,
    )


# -- training ---------------------------------------------------------------

@dataclass
class TrainState:
    policy: GaussianPolicy
    value: ValueNet
    actor_opt: AdamState
    critic_opt: AdamState
    beta_kl: float
    epoch: int = 0


@dataclass
class TrainResult:
    state: TrainState
    curve: list[dict]
    evaluation: TrajectoryLog | None

    @property
    def policy(self) -> GaussianPolicy:
        return self.state.policy


def init_train_state(obs_dim, low, high, config: PpoConfig, seed: int, obs_scale=None) -> TrainState:
    rng = np.random.default_rng(seed)
    policy = GaussianPolicy.init(obs_dim, low, high, rng, config.hidden,
                                 config.init_std_fraction, obs_scale)
    value = ValueNet.init(obs_dim, rng, config.hidden, obs_scale)
    return TrainState(
        policy, value,
        AdamState.zeros_like(policy.params()),
        AdamState.zeros_like(value.params()),
        config.beta_kl,
    )


def update(state: TrainState, batch: RolloutBatch, config: PpoConfig) -> dict:
    """Full-batch actor and critic updates on one rollout batch."""
    policy, value = state.policy, state.value
    adv = batch_advantages(batch, value, config.gamma)
    targets = batch.rewards + config.gamma * (1.0 - batch.dones) * value(batch.next_states)
    if config.normalize_advantages and adv.size > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    old = policy.copy()
    old_mean, _ = old.forward(batch.states)

    objective = float("nan")
    for _ in range(config.actor_iters):
        objective, grads = surrogate_loss(
            policy, batch.states, batch.actions, batch.log_probs, adv,
            old_mean, old.log_std, state.beta_kl,
        )
        ascent = [-g for g in grads]
        params, state.actor_opt = adam_update(policy.params(), ascent, state.actor_opt,
                                              config.lr_actor, config.adam)
        policy.set_params(params)

    c_loss = float("nan")
    for _ in range(config.critic_iters):
        c_loss, grads = critic_loss(value, batch.states, targets)
        params, state.critic_opt = adam_update(value.params(), grads, state.critic_opt,
                                               config.lr_critic, config.adam)
        value.set_params(params)

    d_kl = kl_divergence(old, policy, batch.states)
    state.beta_kl = adapt_beta(state.beta_kl, d_kl, config.kl_target)
    return {"objective": objective, "critic_loss": c_loss, "d_kl": d_kl}


def evaluate(policy: GaussianPolicy, env_config: EnvConfig, steps: int, seed: int = 0) -> TrajectoryLog:
    """Deterministic (mean action) rollout logged at sub-step resolution.

    ``steps`` counts logged rows; the rollout runs enough control steps to
    fill them.
    """
    n_ctrl = math.ceil(max(steps - 1, 0) / env_config.action_repeat)
    cfg = replace(env_config, horizon=max(n_ctrl, 1))
    env = QuadrupedEnv(cfg)
    state = initial = env.reset(seed)
    traces = []
    for _ in range(n_ctrl):
        mean, _ = policy.forward(state.vector)
        res = env.step(mean[0])
        traces.append(res.info["trace"])
        state = res.next_state
    return trajectory_from_traces(cfg, initial, traces).rows(slice(0, steps))


def train(env_config: EnvConfig, config: PpoConfig, seed: int,
          env_factory: Callable[[int], object] | None = None,
          evaluate_policy: bool = True,
          callback: Callable[[dict], None] | None = None) -> TrainResult:
    """Alternate rollout collection and full-batch updates for ``config.epochs`` epochs."""
    if env_factory is None:
        def env_factory(i):
            return QuadrupedEnv(env_config)
    probe = env_factory(0)
    obs_dim = probe.reset(seed).vector.size
    low, high = probe.action_bounds()
    obs_scale = probe.observation_scale() if hasattr(probe, "observation_scale") else None
    state = init_train_state(obs_dim, low, high, config, seed, obs_scale)

    seeds = np.random.default_rng(seed + 1).integers(0, 2**31 - 1, size=config.epochs)
    curve = []
    env_steps = 0
    for epoch in range(config.epochs):
        if config.max_env_steps is not None and env_steps >= config.max_env_steps:
            break
        batch = collect_rollouts(env_factory, state.policy, config, int(seeds[epoch]))
        env_steps += len(batch)
        stats = update(state, batch, config)
        if not all(math.isfinite(stats[k]) for k in ("objective", "critic_loss", "d_kl")):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        state.epoch = epoch + 1
        row = {
            "epoch": epoch,
            "mean_return": float(np.mean(batch.episode_returns)),
            "mean_speed": float(np.mean(batch.speeds)),
            "d_kl": stats["d_kl"],
            "beta_kl": state.beta_kl,
        }
        curve.append(row)
        log.info("epoch %d return %.3f speed %.4f kl %.5f beta %.4g", epoch,
                 row["mean_return"], row["mean_speed"], row["d_kl"], row["beta_kl"])
        if callback is not None:
            callback(row)
    evaluation = None
    if evaluate_policy and isinstance(probe, QuadrupedEnv):
        evaluation = evaluate(state.policy, env_config, config.eval_steps, seed)
    return TrainResult(state, curve, evaluation)

