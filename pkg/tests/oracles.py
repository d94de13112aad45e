"""Independent reference computations shared by unit and acceptance tests."""

import numpy as np

from kmpgait.env import LEGS
from kmpgait.trajectory import GaitCycle, TrajectoryLog


def central_differences(f, params, h=1e-6):
    """Numerical gradient of scalar ``f(params)`` for a list of arrays."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            fp = f()
            p[i] = old - h
            fm = f()
            p[i] = old
            g[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-7):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def smooth_waveforms(n_samples, k=4):
    """``k`` linearly independent smooth periodic waveforms, shape (n_samples, k)."""
    ph = 2 * np.pi * np.arange(n_samples) / n_samples
    base = [np.sin(ph), np.cos(ph), np.sin(2 * ph + 0.3), np.cos(3 * ph) + 0.2 * np.sin(ph)]
    return np.column_stack(base[:k])


def low_rank_cycle(n_samples=100, k=4, seed=0):
    rng = np.random.default_rng(seed)
    w = smooth_waveforms(n_samples, k)
    mix = rng.uniform(-0.3, 0.3, size=(k, 8))
    return GaitCycle(w @ mix + rng.uniform(-0.2, 0.2, 8))


def phase_template_cycle(offsets, n_samples=100):
    """Each leg follows one template (hip, knee) pair delayed by its offset."""
    ph = 2 * np.pi * np.arange(n_samples) / n_samples
    q = np.empty((n_samples, 2 * len(LEGS)))
    for leg, off in enumerate(offsets):
        p = ph - 2 * np.pi * off
        q[:, 2 * leg] = 0.3 * np.sin(p) - 0.1
        q[:, 2 * leg + 1] = 0.8 + 0.25 * np.cos(p) + 0.05 * np.sin(2 * p)
    return GaitCycle(q)


def periodic_log(period=0.5, duration=10.0, dt=0.01, offsets=(0.0, 0.5, 0.5, 0.0), speed=0.0, noise=0.0, seed=0):
    """Synthetic trajectory log of a phase-shifted gait with known period."""
    n = int(round(duration / dt))
    t = np.arange(n) * dt
    rng = np.random.default_rng(seed)
    ang = np.empty((n, 8))
    for leg, off in enumerate(offsets):
        p = 2 * np.pi * (t / period - off)
        ang[:, 2 * leg] = 0.3 * np.sin(p) - 0.1
        ang[:, 2 * leg + 1] = 0.8 + 0.25 * np.cos(p) + 0.05 * np.sin(2 * p + 0.7 * leg)
    ang += noise * rng.standard_normal(ang.shape)
    zeros = np.zeros((n, 8))
    quat = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    return TrajectoryLog(t, ang, zeros, zeros, quat, speed * t, np.full(n, 0.2))
