"""Diagonal Gaussian actor, value critic and their closed-form statistics."""

from __future__ import annotations

import numpy as np

from .mlp import Mlp

HIDDEN = (200, 100)
LOG_2PI = np.log(2.0 * np.pi)


class GaussianPolicy:
    """Gaussian over actions with a tanh mean head mapped onto the action box.

    The log standard deviation is a free, state-independent parameter vector.
    """

    def __init__(self, net: Mlp, log_std, low, high, obs_scale=None):
        self.net = net
        self.obs_scale = None if obs_scale is None else np.asarray(obs_scale, dtype=float)
        self.log_std = np.array(log_std, dtype=float)
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        if self.net.activations[-1] != "tanh":
            raise ValueError("actor output layer must be tanh")
        if self.log_std.shape != self.low.shape or self.low.shape != self.high.shape:
            raise ValueError("log_std and action bounds must share one shape")

    @classmethod
    def init(cls, obs_dim, low, high, rng, hidden=HIDDEN, init_std_fraction=0.3, obs_scale=None):
        low = np.asarray(low, dtype=float)
        high = np.asarray(high, dtype=float)
        sizes = (obs_dim, *hidden, low.size)
        net = Mlp.init(sizes, ("relu",) * len(hidden) + ("tanh",), rng)
        log_std = np.log(init_std_fraction * 0.5 * (high - low))
        return cls(net, log_std, low, high, obs_scale)

    @property
    def center(self):
        return 0.5 * (self.high + self.low)

    @property
    def half_width(self):
        return 0.5 * (self.high - self.low)

    @property
    def std(self):
        return np.exp(self.log_std)

    def params(self) -> list[np.ndarray]:
        return self.net.params() + [self.log_std]

    def set_params(self, params) -> None:
        params = list(params)
        self.net.set_params(params[:-1])
        self.log_std = np.array(params[-1], dtype=float)

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.net.copy(), self.log_std.copy(), self.low, self.high, self.obs_scale)

    def forward(self, states, return_cache: bool = False):
        """Return the action mean (batch) and the std vector."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if not np.all(np.isfinite(states)):
            raise ValueError("non-finite state passed to the policy")
        out, cache = self.net.forward(_scaled(states, self.obs_scale), return_cache=True)
        mean = self.center + self.half_width * out
        if return_cache:
            return mean, self.std, cache
        return mean, self.std

    def log_prob(self, states, actions) -> np.ndarray:
        mean, std = self.forward(states)
        return gaussian_log_prob(actions, mean, self.log_std)

    def sample(self, states, rng: np.random.Generator):
        mean, std = self.forward(states)
        actions = mean + std * rng.standard_normal(mean.shape)
        return actions, gaussian_log_prob(actions, mean, self.log_std)


class ValueNet:
    def __init__(self, net: Mlp, obs_scale=None):
        if net.activations[-1] != "linear" or net.sizes[-1] != 1:
            raise ValueError("critic must end in a single linear unit")
        self.net = net
        self.obs_scale = None if obs_scale is None else np.asarray(obs_scale, dtype=float)

    @classmethod
    def init(cls, obs_dim, rng, hidden=HIDDEN, obs_scale=None):
        sizes = (obs_dim, *hidden, 1)
        return cls(Mlp.init(sizes, ("relu",) * len(hidden) + ("linear",), rng), obs_scale)

    def params(self):
        return self.net.params()

    def set_params(self, params):
        self.net.set_params(params)

    def copy(self):
        return ValueNet(self.net.copy(), self.obs_scale)

    def inputs(self, states) -> np.ndarray:
        return _scaled(np.atleast_2d(np.asarray(states, dtype=float)), self.obs_scale)

    def __call__(self, states) -> np.ndarray:
        return self.net.forward(self.inputs(states))[:, 0]


def _scaled(states, scale):
    return states if scale is None else states * scale


def gaussian_log_prob(actions, mean, log_std) -> np.ndarray:
    actions = np.atleast_2d(actions)
    z = (actions - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) - 0.5 * actions.shape[1] * LOG_2PI


def gaussian_kl(mean_p, log_std_p, mean_q, log_std_q) -> np.ndarray:
    """Per-row KL(p || q) between diagonal Gaussians."""
    var_p = np.exp(2.0 * log_std_p)
    var_q = np.exp(2.0 * log_std_q)
    diff = np.atleast_2d(mean_p - mean_q)
    terms = log_std_q - log_std_p + (var_p + diff * diff) / (2.0 * var_q) - 0.5
    return np.sum(terms, axis=1)


def kl_divergence(pi_old: GaussianPolicy, pi_new: GaussianPolicy, states) -> float:
    mean_old, _ = pi_old.forward(states)
    mean_new, _ = pi_new.forward(states)
    return float(np.mean(gaussian_kl(mean_old, pi_old.log_std, mean_new, pi_new.log_std)))
