"""Synergy fitting, reconstruction ``Q = P S + Z`` and phase-shift gait derivation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import LEGS
from .kinematics import (
    JointPair,
    KinematicsError,
    LegGeometry,
    PolarEndpoint,
    forward_kinematics,
    inverse_kinematics,
)
from .kmp import KmpSet
from .linalg import pseudo_inverse
from .trajectory import GaitCycle

SCALE_BOUNDS = (0.5, 1.5)


class GaitError(ValueError):
    pass


@dataclass
class SynergyMatrix:
    s: np.ndarray  # (n_c, n_j)
    residual: float = 0.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s = np.atleast_2d(np.asarray(self.s, dtype=float))
        if not np.all(np.isfinite(self.s)):
            raise ValueError("synergy matrix has non-finite entries")

    @property
    def n_c(self) -> int:
        return self.s.shape[0]

    @property
    def n_j(self) -> int:
        return self.s.shape[1]


@dataclass
class ReconstructedGait:
    q: np.ndarray  # clamped joint angles (n_s, n_j)
    q_raw: np.ndarray  # before clamping
    clamped: int
    columns: tuple[str, ...]
    provenance: dict = field(default_factory=dict)

    @property
    def phase(self) -> np.ndarray:
        return np.arange(self.q.shape[0]) / self.q.shape[0]

    @property
    def clamp_fraction(self) -> float:
        return self.clamped / self.q.size

    def cycle(self, period: float = 1.0) -> GaitCycle:
        return GaitCycle(self.q.copy(), period, self.columns, dict(self.provenance))


def _target_samples(target) -> np.ndarray:
    return np.atleast_2d(np.asarray(target.samples if isinstance(target, GaitCycle) else target, dtype=float))


def fit_synergy(kmps: KmpSet, target) -> SynergyMatrix:
    """Least-squares ``S = P^+ (Q - Z)``."""
    q = _target_samples(target)
    if q.shape != (kmps.n_s, kmps.n_j):
        raise ValueError(f"target has shape {q.shape}, kMPs expect ({kmps.n_s}, {kmps.n_j})")
    resid_target = q - kmps.mean_offset
    s = pseudo_inverse(kmps.components) @ resid_target
    residual = float(np.max(np.abs(kmps.components @ s - resid_target), initial=0.0))
    return SynergyMatrix(s, residual)


def joint_limits(geometry: LegGeometry, n_j: int = 8):
    """Per-column (low, high) limits for the hip/knee column layout."""
    low = np.tile([geometry.hip_limits[0], geometry.knee_limits[0]], n_j // 2)
    high = np.tile([geometry.hip_limits[1], geometry.knee_limits[1]], n_j // 2)
    return low, high


CLAMP_TOL = 1e-9


def reconstruct(kmps: KmpSet, synergy, geometry: LegGeometry | None = LegGeometry()) -> ReconstructedGait:
    """``Q = P S + Z``, then clip to joint limits (``geometry=None`` skips it).

    Only samples moved by more than ``CLAMP_TOL`` are counted as clamped, so
    round-off on a gait that rests on a limit is not reported.
    """
    s = synergy.s if isinstance(synergy, SynergyMatrix) else np.atleast_2d(np.asarray(synergy, dtype=float))
    if s.shape != (kmps.n_c, kmps.n_j):
        raise ValueError(f"synergy has shape {s.shape}, expected ({kmps.n_c}, {kmps.n_j})")
    q_raw = kmps.components @ s + kmps.mean_offset
    if geometry is None:
        return ReconstructedGait(q_raw.copy(), q_raw, 0, kmps.columns)
    low, high = joint_limits(geometry, kmps.n_j)
    q = np.clip(q_raw, low, high)
    return ReconstructedGait(q, q_raw, int(np.count_nonzero(np.abs(q - q_raw) > CLAMP_TOL)), kmps.columns)


@dataclass(frozen=True)
class GaitSpec:
    """Per-leg phase offsets (cycle fractions, LEGS order) and optional reshaping.

    ``radial_scale``/``angular_scale`` scale the endpoint excursion about its
    cycle mean; scalars apply to every leg.
    """

    offsets: tuple[float, float, float, float]
    radial_scale: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    angular_scale: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        offs = self.offsets
        if isinstance(offs, dict):
            unknown = set(offs) - set(LEGS)
            if unknown:
                raise ValueError(f"unknown legs in gait spec: {sorted(unknown)}")
            offs = tuple(float(offs.get(leg, 0.0)) for leg in LEGS)
        object.__setattr__(self, "offsets", _four("offsets", offs))
        object.__setattr__(self, "radial_scale", _four("radial_scale", self.radial_scale))
        object.__setattr__(self, "angular_scale", _four("angular_scale", self.angular_scale))
        for o in self.offsets:
            if not 0.0 <= o < 1.0:
                raise ValueError(f"phase offsets must lie in [0, 1), got {o}")
        lo, hi = SCALE_BOUNDS
        for name in ("radial_scale", "angular_scale"):
            for v in getattr(self, name):
                if not lo < v < hi:
                    raise ValueError(f"{name} entries must lie in ({lo}, {hi}), got {v}")

    @property
    def reshapes(self) -> bool:
        return any(v != 1.0 for v in self.radial_scale + self.angular_scale)


def _four(name, value):
    if np.isscalar(value):
        value = (value,) * 4
    value = tuple(float(v) for v in value)
    if len(value) != 4:
        raise ValueError(f"{name} needs one value per leg ({len(LEGS)}), got {len(value)}")
    return value


def builtin_gait_specs() -> dict[str, GaitSpec]:
    return {
        "trot": GaitSpec((0.0, 0.5, 0.5, 0.0)),
        "walk": GaitSpec((0.0, 0.5, 0.75, 0.25)),
        "bound": GaitSpec((0.0, 0.0, 0.5, 0.5)),
        "gallop": GaitSpec((0.0, 0.1, 0.5, 0.6)),
    }


def phase_shifts(spec: GaitSpec, n_samples: int, source_spec: GaitSpec | None = None) -> list[int]:
    """Sample shift per leg; relative to ``source_spec`` when one is given."""
    base = source_spec.offsets if source_spec is not None else (0.0,) * 4
    return [int(round(((o - b) % 1.0) * n_samples)) % n_samples for o, b in zip(spec.offsets, base)]


def derive_gait(
    source: GaitCycle,
    spec: GaitSpec,
    source_spec: GaitSpec | None = None,
    geometry: LegGeometry = LegGeometry(),
) -> GaitCycle:
    """Rotate each leg's (hip, knee) pair in phase, then optionally reshape.

    A leg with a larger offset lags: its new sample ``i`` is the old sample
    ``i - shift``. Passing the source gait's own spec turns absolute target
    offsets into relative shifts.
    """
    q = np.array(source.samples, dtype=float)
    n_s, n_j = q.shape
    if n_j != 2 * len(LEGS):
        raise ValueError(f"expected {2 * len(LEGS)} joint columns, got {n_j}")
    out = np.empty_like(q)
    for leg, shift in enumerate(phase_shifts(spec, n_s, source_spec)):
        out[:, 2 * leg:2 * leg + 2] = np.roll(q[:, 2 * leg:2 * leg + 2], shift, axis=0)
    if spec.reshapes:
        out = reshape(out, spec, geometry)
    prov = dict(source.provenance)
    prov["gait_offsets"] = list(spec.offsets)
    return GaitCycle(out, source.period, source.columns, prov)


def reshape(q, spec: GaitSpec, geometry: LegGeometry = LegGeometry()) -> np.ndarray:
    """Scale each leg's endpoint excursion about its cycle mean in (r, alpha)."""
    q = np.asarray(q, dtype=float)
    out = q.copy()
    for leg, name in enumerate(LEGS):
        sr, sa = spec.radial_scale[leg], spec.angular_scale[leg]
        if sr == 1.0 and sa == 1.0:
            continue
        polar = np.array([forward_kinematics(geometry, JointPair(*row)) for row in q[:, 2 * leg:2 * leg + 2]])
        r_bar, a_bar = polar.mean(axis=0)
        r = r_bar + sr * (polar[:, 0] - r_bar)
        a = a_bar + sa * (polar[:, 1] - a_bar)
        for i in range(q.shape[0]):
            try:
                j = inverse_kinematics(geometry, PolarEndpoint(r[i], a[i]), leg=name)
            except KinematicsError as exc:
                raise GaitError(f"reshaped endpoint leaves the reachable annulus at phase index {i}, leg {name}: {exc}") from None
            out[i, 2 * leg:2 * leg + 2] = j
    return out


def pair_mismatch(cycle: GaitCycle, legs=("fl", "fr")) -> float:
    """Max absolute difference between two legs' joint columns."""
    a, b = (LEGS.index(x) for x in legs)
    q = cycle.samples
    return float(np.max(np.abs(q[:, 2 * a:2 * a + 2] - q[:, 2 * b:2 * b + 2])))
