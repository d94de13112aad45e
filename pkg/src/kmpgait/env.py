"""Quasi-static planar quadruped surrogate.

The body moves only in the sagittal plane (x, z, pitch). Feet commanded to the
lowest height form the stance set and act as ground anchors: the body advances
by the mean backward displacement of the stance feet, stands at the mean stance
leg height and carries the full weight on the stance legs.

Leg order everywhere is FL, FR, BL, BR; joint vectors interleave hip and knee
per leg (``fl_hip, fl_knee, fr_hip, ...``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import (
    LegGeometry,
    foot_position_batch,
    inverse_kinematics_batch,
    leg_jacobian,
)

LEGS = ("fl", "fr", "bl", "br")
JOINT_NAMES = tuple(f"{leg}_{j}" for leg in LEGS for j in ("hip", "knee"))
STATE_DIM = 28
FRONT = np.array([True, True, False, False])


class SymmetryMode(str, enum.Enum):
    FULL8 = "full8"
    TROT_DIAGONAL4 = "trot_diagonal4"


# leg -> commanded (r, alpha) group in trot mode: FL+BR share group 0, FR+BL group 1
TROT_GROUPS = np.array([0, 1, 1, 0])


class EnvError(RuntimeError):
    pass


@dataclass
class EnvConfig:
    dt: float = 0.01
    action_repeat: int = 12
    max_joint_speed: float = math.radians(461.0)
    mass: float = 3.0
    gravity: float = 9.81
    w_vel: float = 1.0
    w_energy: float = 0.05
    horizon: int = 1000
    stance_tol: float = 0.002
    speed_filter: float = 0.0
    body_length: float = 0.25
    symmetry: SymmetryMode = SymmetryMode.TROT_DIAGONAL4
    init_noise: float = 0.0
    geometry: LegGeometry = field(default_factory=LegGeometry)

    def __post_init__(self):
        self.symmetry = SymmetryMode(self.symmetry)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.w_vel < 0 or self.w_energy < 0:
            raise ValueError("reward weights must be non-negative")
        if self.action_repeat < 1:
            raise ValueError("action_repeat must be at least 1")
        if not self.max_joint_speed > 0:
            raise ValueError("max_joint_speed must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.mass <= 0 or self.gravity < 0 or self.stance_tol < 0:
            raise ValueError("mass must be positive, gravity and stance_tol non-negative")
        if not 0.0 <= self.speed_filter < 1.0:
            raise ValueError("speed_filter must lie in [0, 1)")

    @property
    def action_dim(self) -> int:
        return 8 if self.symmetry is SymmetryMode.FULL8 else 4

    def action_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.geometry
        n = self.action_dim // 2
        low = np.tile([g.r_range[0], g.alpha_range[0]], n)
        high = np.tile([g.r_range[1], g.alpha_range[1]], n)
        return low, high


@dataclass
class EnvState:
    joint_angles: np.ndarray
    joint_velocities: np.ndarray
    joint_torques: np.ndarray
    orientation: np.ndarray
    base_x: float = 0.0
    base_z: float = 0.0
    foot_x: np.ndarray = field(default_factory=lambda: np.zeros(4))
    foot_z: np.ndarray = field(default_factory=lambda: np.zeros(4))
    stance: np.ndarray = field(default_factory=lambda: np.ones(4, dtype=bool))
    pitch: float = 0.0
    speed: float = 0.0
    t: int = 0

    @property
    def vector(self) -> np.ndarray:
        """The 28-D observation exposed to the policy."""
        return np.concatenate(
            [self.joint_angles, self.joint_velocities, self.joint_torques, self.orientation]
        )


@dataclass
class StepResult:
    next_state: EnvState
    reward: float
    done: bool
    info: dict


def reward(dx: float, d_energy: float, w_vel: float = 1.0, w_energy: float = 0.05) -> float:
    """Forward-progress reward with a 0.1 m magnitude floor and an energy penalty."""
    sign = (dx > 0) - (dx < 0)
    return w_vel * sign * max(abs(dx), 0.1) - w_energy * d_energy


def energy_increment(torques, velocities, dt: float) -> float:
    if not dt > 0:
        raise ValueError("dt must be positive")
    torques = np.asarray(torques, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    return float(np.sum(np.abs(torques * velocities)) * dt)


def stance_assignment(foot_heights, tol: float) -> np.ndarray:
    """Boolean mask of feet within ``tol`` of the lowest foot."""
    h = np.asarray(foot_heights, dtype=float)
    return h <= h.min() + tol


def quasi_static_torques(
    joint_angles, stance, geometry: LegGeometry, mass: float, gravity: float
) -> np.ndarray:
    """Hip/knee torques from sharing the body weight across the stance feet."""
    stance = np.asarray(stance, dtype=bool)
    n = int(stance.sum())
    if n == 0:
        raise EnvError("stance set is empty")
    load = mass * gravity / n
    q = np.asarray(joint_angles, dtype=float).reshape(4, 2)
    tau = np.zeros((4, 2))
    for i in np.flatnonzero(stance):
        tau[i] = leg_jacobian(geometry, q[i]).T @ np.array([0.0, load])
    return tau.ravel()


def pitch_quaternion(pitch: float) -> np.ndarray:
    return np.array([math.cos(pitch / 2.0), 0.0, math.sin(pitch / 2.0), 0.0])


class QuadrupedEnv:
    """Single surrogate environment instance; not shared between workers."""

    def __init__(self, config: EnvConfig | None = None):
        self.config = config or EnvConfig()
        self.state: EnvState | None = None
        self._rng = np.random.default_rng(0)

    @property
    def action_dim(self) -> int:
        return self.config.action_dim

    def action_bounds(self):
        return self.config.action_bounds()

    def observation_scale(self) -> np.ndarray:
        """Fixed per-channel factors bringing observations to order one.

        Velocities are expressed relative to the servo speed limit and
        torques relative to the body weight acting at full leg length.
        """
        cfg = self.config
        tau_ref = cfg.mass * cfg.gravity * cfg.geometry.r_max
        return np.concatenate(
            [np.ones(8), np.full(8, 1.0 / cfg.max_joint_speed), np.full(8, 1.0 / tau_ref), np.ones(4)]
        )

    def expand_action(self, action) -> tuple[np.ndarray, np.ndarray]:
        """Per-leg ``(r, alpha)`` arrays from a flat action, clamped to the box."""
        a = np.asarray(action, dtype=float).ravel()
        if a.size != self.action_dim:
            raise EnvError(f"expected action of length {self.action_dim}, got {a.size}")
        if not np.all(np.isfinite(a)):
            raise EnvError(f"non-finite action {a}")
        pairs = a.reshape(-1, 2)
        if self.config.symmetry is SymmetryMode.TROT_DIAGONAL4:
            pairs = pairs[TROT_GROUPS]
        g = self.config.geometry
        r = np.clip(pairs[:, 0], *g.r_range)
        alpha = np.clip(pairs[:, 1], *g.alpha_range)
        return r, alpha

    def _pose(self, r, alpha):
        g = self.config.geometry
        _, b2 = inverse_kinematics_batch(g, r, alpha)
        # keep the commanded leg angle when the knee saturates, then bound the hip
        b2 = np.clip(b2, *g.knee_limits)
        b1 = np.clip(
            alpha - np.arctan2(g.l_lower * np.sin(b2), g.l_upper + g.l_lower * np.cos(b2)),
            *g.hip_limits,
        )
        fx, fz = foot_position_batch(g, b1, b2)
        return np.column_stack([b1, b2]).ravel(), fx, fz

    def _body(self, fx, fz, stance, prev_pitch):
        extent = -fz
        base_z = float(extent[stance].mean())
        front, rear = stance & FRONT, stance & ~FRONT
        if front.any() and rear.any():
            pitch = math.atan2(extent[front].mean() - extent[rear].mean(), self.config.body_length)
        else:
            pitch = prev_pitch
        return base_z, pitch

    def reset(self, seed: int | None = None) -> EnvState:
        cfg = self.config
        self._rng = np.random.default_rng(seed)
        g = cfg.geometry
        r = np.full(4, 0.5 * (g.r_range[0] + g.r_range[1]))
        alpha = np.zeros(4)
        if cfg.init_noise > 0:
            alpha = np.clip(
                alpha + self._rng.uniform(-cfg.init_noise, cfg.init_noise, 4), *g.alpha_range
            )
        q, fx, fz = self._pose(r, alpha)
        stance = stance_assignment(fz, cfg.stance_tol)
        base_z, pitch = self._body(fx, fz, stance, 0.0)
        self.state = EnvState(
            joint_angles=q,
            joint_velocities=np.zeros(8),
            joint_torques=np.zeros(8),
            orientation=pitch_quaternion(pitch),
            base_x=0.0,
            base_z=base_z,
            foot_x=fx,
            foot_z=fz,
            stance=stance,
            pitch=pitch,
        )
        return self.state

    def step(self, action) -> StepResult:
        """Advance one control step made of ``action_repeat`` sub-steps.

        Joints move toward the commanded pose at the servo speed limit and
        hold once they arrive. Each sub-step recomputes stance, body
        advance and torques; the reward uses the totals over the control step.
        """
        if self.state is None:
            raise EnvError("step() called before reset()")
        cfg = self.config
        g = cfg.geometry
        prev = self.state
        n = cfg.action_repeat
        r, alpha = self.expand_action(action)
        target, _, _ = self._pose(r, alpha)
        span = n * cfg.dt
        # servo: full speed toward the target, then hold
        reach = cfg.max_joint_speed * cfg.dt * np.arange(1, n + 1)[:, None]
        q = prev.joint_angles + np.clip(target - prev.joint_angles, -reach, reach)
        vel = np.diff(np.vstack([prev.joint_angles, q]), axis=0) / cfg.dt
        b1, b2 = q[:, 0::2], q[:, 1::2]
        fx, fz = foot_position_batch(g, b1, b2)

        stance = fz <= fz.min(axis=1, keepdims=True) + cfg.stance_tol
        fx_prev = np.vstack([prev.foot_x, fx[:-1]])
        n_st = stance.sum(axis=1)
        dxs = -np.sum((fx - fx_prev) * stance, axis=1) / n_st
        base_x = prev.base_x + np.cumsum(dxs)

        extent = -fz
        base_z = np.sum(extent * stance, axis=1) / n_st
        st_f, st_r = stance & FRONT, stance & ~FRONT
        cf, cr = st_f.sum(axis=1), st_r.sum(axis=1)
        valid = (cf > 0) & (cr > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            raw = np.arctan2(
                np.sum(extent * st_f, axis=1) / cf - np.sum(extent * st_r, axis=1) / cr,
                cfg.body_length,
            )
        last = np.maximum.accumulate(np.where(valid, np.arange(n), -1))
        pitch = np.where(last >= 0, raw[np.maximum(last, 0)], prev.pitch)

        load = (cfg.mass * cfg.gravity / n_st)[:, None] * stance
        tau = np.empty((n, 8))
        tau[:, 0::2] = load * fx
        tau[:, 1::2] = load * g.l_lower * np.sin(b1 + b2)
        d_energy = float(np.sum(np.abs(tau * vel)) * cfg.dt)

        dx = float(base_x[-1] - prev.base_x)
        rew = reward(dx, d_energy, cfg.w_vel, cfg.w_energy)
        speed = cfg.speed_filter * prev.speed + (1.0 - cfg.speed_filter) * dx / span
        self.state = EnvState(
            joint_angles=q[-1].copy(),
            joint_velocities=vel[-1].copy(),
            joint_torques=tau[-1].copy(),
            orientation=pitch_quaternion(float(pitch[-1])),
            base_x=float(base_x[-1]),
            base_z=float(base_z[-1]),
            foot_x=fx[-1].copy(),
            foot_z=fz[-1].copy(),
            stance=stance[-1].copy(),
            pitch=float(pitch[-1]),
            speed=speed,
            t=prev.t + 1,
        )
        trace = {
            "joint_angles": q,
            "joint_velocities": vel,
            "joint_torques": tau,
            "quaternion": np.stack([pitch_quaternion(p) for p in pitch]),
            "base_x": base_x,
            "base_z": base_z,
            "foot_x": fx,
            "foot_z": fz,
            "stance": stance,
        }
        done = self.state.t >= cfg.horizon
        info = {"dx": dx, "dE": d_energy, "speed": speed, "trace": trace}
        return StepResult(self.state, rew, done, info)


class TargetReachEnv:
    """One-dimensional sanity task: reward is ``-|action - target|``.

    The optimum is known in closed form, which makes it a convenient check
    that the learner climbs toward it.
    """

    def __init__(self, target: float = 0.3, horizon: int = 10, obs_dim: int = 1):
        self.target = target
        self.horizon = horizon
        self.obs_dim = obs_dim
        self.action_dim = 1
        self._t = 0

    def action_bounds(self):
        return np.array([-1.0]), np.array([1.0])

    def _state(self):
        return _VectorState(np.ones(self.obs_dim))

    def reset(self, seed: int | None = None):
        self._t = 0
        return self._state()

    def step(self, action) -> StepResult:
        a = float(np.clip(np.asarray(action, dtype=float).ravel()[0], -1.0, 1.0))
        self._t += 1
        rew = -abs(a - self.target)
        return StepResult(self._state(), rew, self._t >= self.horizon, {"dx": 0.0, "speed": 0.0})


@dataclass
class _VectorState:
    vector: np.ndarray
