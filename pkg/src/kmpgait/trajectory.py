"""Time-series containers shared by the environment, extraction and I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import JOINT_NAMES


@dataclass
class TrajectoryLog:
    """Uniformly sampled rollout record, one row per simulation sub-step."""

    time: np.ndarray
    angles: np.ndarray
    velocities: np.ndarray
    torques: np.ndarray
    quaternion: np.ndarray
    base_x: np.ndarray | None = None
    base_z: np.ndarray | None = None

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        n = self.time.size
        self.angles = _rows(self.angles, n, 8, "angles")
        self.velocities = _rows(self.velocities, n, 8, "velocities")
        self.torques = _rows(self.torques, n, 8, "torques")
        self.quaternion = _rows(self.quaternion, n, 4, "quaternion")
        if self.base_x is not None:
            self.base_x = np.asarray(self.base_x, dtype=float).reshape(n)
        if self.base_z is not None:
            self.base_z = np.asarray(self.base_z, dtype=float).reshape(n)
        if n >= 2:
            d = np.diff(self.time)
            if np.any(d <= 0):
                raise ValueError("time must be strictly increasing")
            if np.max(np.abs(d - d[0])) > 1e-9:
                raise ValueError("time must be uniformly sampled")

    def __len__(self) -> int:
        return self.time.size

    @property
    def dt(self) -> float:
        if len(self) < 2:
            raise ValueError("sampling interval undefined for fewer than two rows")
        return float(self.time[1] - self.time[0])

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.angles[:, JOINT_NAMES.index(name)]
        except ValueError:
            raise KeyError(f"unknown joint channel {name!r}; expected one of {JOINT_NAMES}") from None

    def rows(self, sl: slice) -> "TrajectoryLog":
        return TrajectoryLog(
            self.time[sl],
            self.angles[sl],
            self.velocities[sl],
            self.torques[sl],
            self.quaternion[sl],
            None if self.base_x is None else self.base_x[sl],
            None if self.base_z is None else self.base_z[sl],
        )

    @classmethod
    def from_states(cls, states, dt: float) -> "TrajectoryLog":
        states = list(states)
        return cls(
            time=np.arange(len(states)) * dt,
            angles=[s.joint_angles for s in states],
            velocities=[s.joint_velocities for s in states],
            torques=[s.joint_torques for s in states],
            quaternion=[s.orientation for s in states],
            base_x=[s.base_x for s in states],
            base_z=[s.base_z for s in states],
        )


@dataclass
class GaitCycle:
    """One phase-normalised cycle of all joint angles, shape (n_samples, 8)."""

    samples: np.ndarray
    period: float = 1.0
    columns: tuple[str, ...] = JOINT_NAMES
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[1] != len(self.columns):
            raise ValueError(
                f"cycle has {self.samples.shape[1]} columns, expected {len(self.columns)}"
            )

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def phase(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.n_samples


def trajectory_from_traces(config, initial, traces) -> TrajectoryLog:
    """Stitch an initial :class:`EnvState` and per-step sub-step traces into a log."""
    def stack(key, first):
        return np.concatenate([np.atleast_2d(first)] + [np.atleast_2d(t[key]) for t in traces]) \
            if np.ndim(first) else np.concatenate([[first]] + [t[key] for t in traces])

    angles = stack("joint_angles", initial.joint_angles)
    return TrajectoryLog(
        time=np.arange(angles.shape[0]) * config.dt,
        angles=angles,
        velocities=stack("joint_velocities", initial.joint_velocities),
        torques=stack("joint_torques", initial.joint_torques),
        quaternion=stack("quaternion", initial.orientation),
        base_x=stack("base_x", initial.base_x),
        base_z=stack("base_z", initial.base_z),
    )


def _rows(a, n, width, name):
    a = np.asarray(a, dtype=float)
    if a.size == 0 and n == 0:
        return a.reshape(0, width)
    if a.shape != (n, width):
        raise ValueError(f"{name} must have shape ({n}, {width}), got {a.shape}")
    return a
