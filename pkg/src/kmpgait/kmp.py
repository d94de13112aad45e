"""Mean gait cycle and kinematic motion primitives from a rollout log.

Pipeline: trim transients, cut the log into cycles at peaks of a reference
channel, resample every cycle onto a common phase grid, average, and run PCA
on the mean cycle. Each retained principal direction is turned into a kMP by
projecting the zero-mean cycle on it and scaling to unit infinity norm.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import find_peaks
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .env import JOINT_NAMES
from .linalg import eigen_sym
from .trajectory import GaitCycle, TrajectoryLog

log = logging.getLogger(__name__)

REFERENCE_CHANNEL = "fl_hip"
MIN_PERIOD = 0.2
PROMINENCE = 0.05
N_SAMPLES = 100
TRIM_FRACTION = 0.15
MAX_LENGTH_DEVIATION = 0.25
NORM_TOL = 1e-12


class SegmentationError(ValueError):
    pass


class KmpError(ValueError):
    pass


class AlignedSegments(NamedTuple):
    stack: np.ndarray  # (n_segments, n_samples, n_j)
    skipped: int


def trim(log_: TrajectoryLog, fraction: float = TRIM_FRACTION, min_period: float | None = None):
    """Drop the first and last ``floor(fraction * rows)`` rows.

    With ``min_period`` given, the remainder must still span two cycles.
    """
    if not 0.0 <= fraction < 0.5:
        raise ValueError(f"trim fraction must lie in [0, 0.5), got {fraction}")
    n = len(log_)
    # round first so 0.15 * 4800 does not floor to 719
    k = math.floor(round(fraction * n, 9))
    out = log_.rows(slice(k, n - k))
    if min_period is not None:
        span = (len(out) - 1) * log_.dt if len(out) > 1 else 0.0
        if span < 2.0 * min_period:
            raise ValueError(
                f"trimmed log spans {span:.3g} s, shorter than two cycles of {min_period} s"
            )
    return out


def find_cycle_peaks(signal, dt: float, min_period: float = MIN_PERIOD, prominence: float = PROMINENCE):
    distance = max(1, math.ceil(min_period / dt - 1e-9))
    peaks, _ = find_peaks(np.asarray(signal, dtype=float), prominence=prominence, distance=distance)
    return peaks


def segment_cycles(
    log_: TrajectoryLog,
    reference_channel: str = REFERENCE_CHANNEL,
    min_period: float = MIN_PERIOD,
    prominence: float = PROMINENCE,
    max_deviation: float = MAX_LENGTH_DEVIATION,
) -> list[np.ndarray]:
    """Split the joint angles into cycles between consecutive reference peaks.

    Each cycle covers the half-open span from one peak to the next; the next
    peak row is appended so that resampling can close the cycle. Cycles whose
    length differs from the median by more than ``max_deviation`` are dropped.
    """
    signal = log_.channel(reference_channel)
    peaks = find_cycle_peaks(signal, log_.dt, min_period, prominence)
    if peaks.size < 3:
        raise SegmentationError(
            f"no periodic structure detected on channel {reference_channel!r} "
            f"({peaks.size} peaks with prominence >= {prominence})"
        )
    lengths = np.diff(peaks)
    median = np.median(lengths)
    keep = np.abs(lengths - median) <= max_deviation * median
    return [log_.angles[a:b + 1] for a, b, ok in zip(peaks[:-1], peaks[1:], keep) if ok]


def resample_segment(segment, n_samples: int = N_SAMPLES) -> np.ndarray:
    """Cubic-spline resample of a closed segment onto phases ``i / n_samples``."""
    segment = np.asarray(segment, dtype=float)
    x = np.linspace(0.0, 1.0, segment.shape[0])
    spline = CubicSpline(x, segment, axis=0, bc_type="not-a-knot")
    return spline(np.arange(n_samples) / n_samples)


def normalize_segments(segments, n_samples: int = N_SAMPLES) -> AlignedSegments:
    """Resample each closed segment (first row at phase 0, last at phase 1)."""
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    out, skipped = [], 0
    for i, seg in enumerate(segments):
        seg = np.asarray(seg, dtype=float)
        if seg.ndim == 1:
            seg = seg[:, None]
        if seg.shape[0] < 2:
            skipped += 1
            continue
        if seg.shape[0] < 4:
            raise ValueError(f"segment {i} has {seg.shape[0]} samples, at least 4 are needed")
        out.append(resample_segment(seg, n_samples))
    if skipped:
        log.warning("skipped %d degenerate segment(s)", skipped)
    width = out[0].shape[1] if out else 0
    stack = np.stack(out) if out else np.empty((0, n_samples, width))
    return AlignedSegments(stack, skipped)


def mean_cycle(stack, period: float = 1.0, columns=JOINT_NAMES, provenance=None) -> GaitCycle:
    stack = np.asarray(getattr(stack, "stack", stack), dtype=float)
    if stack.ndim != 3 or stack.shape[0] < 1:
        raise ValueError("need at least one aligned segment")
    return GaitCycle(stack.mean(axis=0), period, tuple(columns), dict(provenance or {}))


def extract_cycle(
    log_: TrajectoryLog,
    trim_fraction: float = TRIM_FRACTION,
    reference_channel: str = REFERENCE_CHANNEL,
    min_period: float = MIN_PERIOD,
    prominence: float = PROMINENCE,
    n_samples: int = N_SAMPLES,
    max_deviation: float = MAX_LENGTH_DEVIATION,
) -> GaitCycle:
    trimmed = trim(log_, trim_fraction, min_period)
    segments = segment_cycles(trimmed, reference_channel, min_period, prominence, max_deviation)
    aligned = normalize_segments(segments, n_samples)
    period = float(np.mean([s.shape[0] - 1 for s in segments])) * log_.dt
    prov = {
        "segments": int(aligned.stack.shape[0]),
        "skipped_segments": aligned.skipped,
        "reference_channel": reference_channel,
    }
    return mean_cycle(aligned, period, provenance=prov)


def _samples(cycle) -> np.ndarray:
    x = cycle.samples if isinstance(cycle, GaitCycle) else cycle
    return np.atleast_2d(np.asarray(x, dtype=float))


def covariance(cycle) -> np.ndarray:
    """``(1/N) Xc^T Xc`` of the column-centred cycle."""
    x = _samples(cycle)
    if x.shape[0] < 2:
        raise ValueError("covariance needs at least two samples")
    xc = x - x.mean(axis=0)
    return xc.T @ xc / x.shape[0]


def cumulative_variance(eigenvalues) -> np.ndarray:
    w = np.asarray(eigenvalues, dtype=float)
    if np.any(w < -1e-12):
        raise ValueError("eigenvalues must be non-negative")
    if np.any(np.diff(w) > 1e-12):
        raise ValueError("eigenvalues must be sorted in descending order")
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0.0:
        raise ValueError("all eigenvalues are zero; the cycle has no variance")
    out = np.cumsum(w) / total * 100.0
    out[-1] = 100.0
    return out


@dataclass
class KmpSet:
    components: np.ndarray  # (n_s, n_c), unit infinity norm per column
    mean_offset: np.ndarray  # (n_j,)
    eigenvalues: np.ndarray  # (n_j,), descending
    eigenvectors: np.ndarray | None = None  # (n_j, n_j), not persisted
    columns: tuple[str, ...] = JOINT_NAMES
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.components = np.atleast_2d(np.asarray(self.components, dtype=float))
        self.mean_offset = np.asarray(self.mean_offset, dtype=float).ravel()
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float).ravel()
        self.columns = tuple(self.columns)
        if self.mean_offset.size != len(self.columns):
            raise ValueError(f"mean offset has {self.mean_offset.size} entries, expected {len(self.columns)}")
        if self.eigenvalues.size != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} eigenvalues, got {self.eigenvalues.size}")
        if not 1 <= self.n_c <= len(self.columns):
            raise ValueError(f"n_c must lie in [1, {len(self.columns)}], got {self.n_c}")
        if self.eigenvectors is not None:
            self.eigenvectors = np.asarray(self.eigenvectors, dtype=float)

    @property
    def n_s(self) -> int:
        return self.components.shape[0]

    @property
    def n_c(self) -> int:
        return self.components.shape[1]

    @property
    def n_j(self) -> int:
        return len(self.columns)

    @property
    def cumulative_variance(self) -> np.ndarray:
        return cumulative_variance(self.eigenvalues)


def _projections(cycle):
    x = _samples(cycle)
    z = x.mean(axis=0)
    w, e = eigen_sym(covariance(x))
    return x - z, z, w, e


def extract_kmps(cycle, n_c: int) -> KmpSet:
    """Top ``n_c`` kMPs of a cycle: ``Xc e_i / ||Xc e_i||_inf``."""
    xc, z, w, e = _projections(cycle)
    n_j = xc.shape[1]
    if not 1 <= n_c <= n_j:
        raise ValueError(f"n_c must lie in [1, {n_j}], got {n_c}")
    proj = xc @ e[:, :n_c]
    norms = np.max(np.abs(proj), axis=0)
    scale = max(1.0, float(np.max(np.abs(xc), initial=0.0)))
    for i, nrm in enumerate(norms):
        if nrm <= NORM_TOL * scale:
            raise KmpError(
                f"component {i + 1} has a zero projection (eigenvalue {w[i]:.3g}); "
                f"the cycle has rank below n_c={n_c}"
            )
    columns = cycle.columns if isinstance(cycle, GaitCycle) else JOINT_NAMES[:n_j]
    return KmpSet(proj / norms, z, w, e, columns)


class CycleExtractor(TransformerMixin, BaseEstimator):
    """Raw joint-angle rows (n, n_j) to the mean gait cycle (n_samples, n_j).

    Stateless apart from diagnostics: ``transform`` segments whatever log it
    is given. ``fit`` records the cycle found in the training log.
    """

    def __init__(
        self,
        dt=0.01,
        trim_fraction=TRIM_FRACTION,
        reference_channel=REFERENCE_CHANNEL,
        min_period=MIN_PERIOD,
        prominence=PROMINENCE,
        n_samples=N_SAMPLES,
        max_deviation=MAX_LENGTH_DEVIATION,
    ):
        self.dt = dt
        self.trim_fraction = trim_fraction
        self.reference_channel = reference_channel
        self.min_period = min_period
        self.prominence = prominence
        self.n_samples = n_samples
        self.max_deviation = max_deviation

    def _cycle(self, X) -> GaitCycle:
        if isinstance(X, TrajectoryLog):
            tlog = X
        else:
            X = check_array(X, ensure_min_samples=4)
            n = X.shape[0]
            zeros = np.zeros_like(X)
            tlog = TrajectoryLog(np.arange(n) * self.dt, X, zeros, zeros, np.tile([1.0, 0, 0, 0], (n, 1)))
        return extract_cycle(
            tlog,
            self.trim_fraction,
            self.reference_channel,
            self.min_period,
            self.prominence,
            self.n_samples,
            self.max_deviation,
        )

    def fit(self, X, y=None):
        self.cycle_ = self._cycle(X)
        self.n_features_in_ = self.cycle_.samples.shape[1]
        self.period_ = self.cycle_.period
        self.n_segments_ = self.cycle_.provenance["segments"]
        return self

    def transform(self, X):
        check_is_fitted(self, "cycle_")
        return self._cycle(X).samples

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).cycle_.samples


class KinematicPrimitives(TransformerMixin, BaseEstimator):
    """PCA of a gait cycle with infinity-norm scaled components.

    After ``fit(cycle)``, ``transform`` maps joint-angle rows to kMP
    coordinates, so ``transform(cycle)`` returns the kMP matrix itself.
    ``synergy``/``reconstruct`` expose the S map of a whole target cycle.
    """

    def __init__(self, n_components=4):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = validate_data(self, _samples(X), ensure_min_samples=2)
        kmps = extract_kmps(X, self.n_components)
        self.kmps_ = kmps
        self.components_ = kmps.components
        self.mean_ = kmps.mean_offset
        self.eigenvalues_ = kmps.eigenvalues
        self.eigenvectors_ = kmps.eigenvectors
        self.cumulative_variance_ = kmps.cumulative_variance
        self.explained_variance_ratio_ = kmps.eigenvalues[: self.n_components] / kmps.eigenvalues.sum()
        self.scales_ = np.max(np.abs((X - self.mean_) @ self.eigenvectors_[:, : self.n_components]), axis=0)
        return self

    def transform(self, X):
        check_is_fitted(self, "kmps_")
        X = validate_data(self, _samples(X), reset=False)
        return (X - self.mean_) @ self.eigenvectors_[:, : self.n_components] / self.scales_

    def inverse_transform(self, X):
        check_is_fitted(self, "kmps_")
        X = check_array(X)
        return (X * self.scales_) @ self.eigenvectors_[:, : self.n_components].T + self.mean_

    def synergy(self, target):
        from .synthesis import fit_synergy

        check_is_fitted(self, "kmps_")
        return fit_synergy(self.kmps_, target)

    def reconstruct(self, synergy):
        from .synthesis import reconstruct

        check_is_fitted(self, "kmps_")
        return reconstruct(self.kmps_, synergy)
