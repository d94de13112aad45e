"""Planar two-link leg kinematics in polar endpoint coordinates.

Conventions used throughout the package:

* the foot position is expressed relative to the hip in the body frame,
  ``x`` forward and ``z`` up;
* ``alpha`` is measured from the downward vertical, positive toward the front;
* ``beta1`` (hip) is the thigh direction measured the same way as ``alpha``;
* ``beta2`` (knee) is the interior deflection of the shank relative to the
  thigh, positive values put the knee behind the hip-foot line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

REACH_EPS = 1e-9


class KinematicsError(ValueError):
    """Raised for geometrically unreachable leg targets."""


class PolarEndpoint(NamedTuple):
    r: float
    alpha: float


class JointPair(NamedTuple):
    beta1: float
    beta2: float


@dataclass(frozen=True)
class LegGeometry:
    l_upper: float = 0.120
    l_lower: float = 0.120
    hip_limits: tuple[float, float] = (math.radians(-45.0), math.radians(45.0))
    knee_limits: tuple[float, float] = (math.radians(-70.0), math.radians(70.0))
    r_range: tuple[float, float] = (0.15, 0.24)
    alpha_range: tuple[float, float] = (math.radians(-30.0), math.radians(30.0))

    def __post_init__(self):
        if not (self.l_upper > 0 and self.l_lower > 0):
            raise ValueError(
                f"link lengths must be positive, got {self.l_upper}, {self.l_lower}"
            )
        for name in ("hip_limits", "knee_limits", "r_range", "alpha_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} must be an ordered interval, got {(lo, hi)}")
        lo, hi = self.r_range
        if lo < self.r_min - 1e-12 or hi > self.r_max + 1e-12:
            raise ValueError(
                f"r_range {self.r_range} exceeds the reachable annulus "
                f"[{self.r_min}, {self.r_max}]"
            )

    @property
    def r_min(self) -> float:
        return abs(self.l_upper - self.l_lower)

    @property
    def r_max(self) -> float:
        return self.l_upper + self.l_lower

    def clamp_joints(self, beta1, beta2):
        """Clip hip/knee angles (scalars or arrays) to the joint limits."""
        return (
            np.clip(beta1, *self.hip_limits),
            np.clip(beta2, *self.knee_limits),
        )


def inverse_kinematics(geom: LegGeometry, p: PolarEndpoint, leg: str = "leg") -> JointPair:
    r, alpha = float(p[0]), float(p[1])
    if not (math.isfinite(r) and math.isfinite(alpha)):
        raise KinematicsError(f"{leg}: non-finite endpoint {(r, alpha)}")
    if r < geom.r_min + REACH_EPS or r > geom.r_max + REACH_EPS:
        raise KinematicsError(
            f"{leg}: radius {r!r} m outside reachable range "
            f"[{geom.r_min + REACH_EPS}, {geom.r_max}]"
        )
    l1, l2 = geom.l_upper, geom.l_lower
    c = (r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    beta2 = math.acos(min(1.0, max(-1.0, c)))
    beta1 = alpha - math.atan2(l2 * math.sin(beta2), l1 + l2 * math.cos(beta2))
    return JointPair(beta1, beta2)


def foot_position(geom: LegGeometry, j: JointPair) -> tuple[float, float]:
    """Cartesian ``(x, z)`` of the foot relative to the hip."""
    b1, b2 = float(j[0]), float(j[1])
    x = geom.l_upper * math.sin(b1) + geom.l_lower * math.sin(b1 + b2)
    z = -geom.l_upper * math.cos(b1) - geom.l_lower * math.cos(b1 + b2)
    return x, z


def forward_kinematics(geom: LegGeometry, j: JointPair) -> PolarEndpoint:
    x, z = foot_position(geom, j)
    return PolarEndpoint(math.hypot(x, z), math.atan2(x, -z))


def clamp_endpoint(geom: LegGeometry, p: PolarEndpoint) -> PolarEndpoint:
    return PolarEndpoint(
        min(max(float(p[0]), geom.r_range[0]), geom.r_range[1]),
        min(max(float(p[1]), geom.alpha_range[0]), geom.alpha_range[1]),
    )


def leg_jacobian(geom: LegGeometry, j: JointPair) -> np.ndarray:
    """d(x, z)/d(beta1, beta2) of the foot, shape (2, 2)."""
    b1, b2 = float(j[0]), float(j[1])
    l1, l2 = geom.l_upper, geom.l_lower
    c1, s1 = math.cos(b1), math.sin(b1)
    c12, s12 = math.cos(b1 + b2), math.sin(b1 + b2)
    return np.array(
        [
            [l1 * c1 + l2 * c12, l2 * c12],
            [l1 * s1 + l2 * s12, l2 * s12],
        ]
    )


# Vectorised variants used by the environment and gait reshaping.

def inverse_kinematics_batch(geom: LegGeometry, r, alpha):
    r = np.asarray(r, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(r < geom.r_min + REACH_EPS) or np.any(r > geom.r_max + REACH_EPS):
        bad = r[(r < geom.r_min + REACH_EPS) | (r > geom.r_max + REACH_EPS)]
        raise KinematicsError(f"radius {bad.ravel()[0]!r} m outside reachable range")
    l1, l2 = geom.l_upper, geom.l_lower
    c = np.clip((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0)
    beta2 = np.arccos(c)
    beta1 = alpha - np.arctan2(l2 * np.sin(beta2), l1 + l2 * np.cos(beta2))
    return beta1, beta2


def forward_kinematics_batch(geom: LegGeometry, beta1, beta2):
    beta1 = np.asarray(beta1, dtype=float)
    beta2 = np.asarray(beta2, dtype=float)
    x = geom.l_upper * np.sin(beta1) + geom.l_lower * np.sin(beta1 + beta2)
    z = -geom.l_upper * np.cos(beta1) - geom.l_lower * np.cos(beta1 + beta2)
    return np.hypot(x, z), np.arctan2(x, -z)


def foot_position_batch(geom: LegGeometry, beta1, beta2):
    x = geom.l_upper * np.sin(beta1) + geom.l_lower * np.sin(beta1 + beta2)
    z = -geom.l_upper * np.cos(beta1) - geom.l_lower * np.cos(beta1 + beta2)
    return x, z
