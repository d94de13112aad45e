"""Comparison of kMP sets and rollout performance summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kmp import KmpSet, trim
from .trajectory import TrajectoryLog

TIE_TOL = 1e-12
COMPARISON_HEADER = ("pair", "component", "cross_covariance", "delay")

# published reference rows (cross-covariance, delay) per component
REFERENCE_COMPARISONS = {
    "RT-ET": ((0.97, 0.74, 0.93, 0.79), (0.0, -0.02, 0.02, 0.04)),
    "RT-HT": ((0.99, 0.89, 0.86, 0.82), (0.0, -0.02, -0.05, -0.04)),
    "ET-HT": ((0.99, 0.77, 0.88, 0.87), (0.0, 0.15, -0.08, 0.03)),
    "RT-RP": ((0.87, 0.94, 0.91, 0.7), (-0.03, -0.07, -0.08, 0.16)),
    "RT-RB": ((0.81, 0.84, 0.72, 0.88), (0.0, -0.02, -0.05, -0.04)),
    "RP-RB": ((0.96, 0.92, 0.85, 0.72), (-0.01, 0.0, -0.08, 0.18)),
}
REFERENCE_CUMULATIVE_VARIANCE = (88.9, 95.8, 98.4, 99.9)
REFERENCE_SPEEDS = {
    "trot": 0.60,
    "walk": 0.51,
    "gallop": 0.51,
    "bound": 0.55,
    "modified_trot_1": 0.62,
    "modified_trot_2": 0.59,
}


def _zscore(x, name):
    x = np.asarray(x, dtype=float).ravel()
    xc = x - x.mean()
    sd = np.sqrt(np.mean(xc * xc))
    if sd <= 1e-15 * max(1.0, np.max(np.abs(x))):
        raise ValueError(f"signal {name} has zero variance")
    return xc / sd


def cross_covariance(a, b) -> tuple[float, float]:
    """Peak normalised circular cross-correlation and its delay.

    ``c[k] = sum_n za[n] zb[(n + k) mod N] / N``. The delay is ``k / N``
    wrapped to [-0.5, 0.5); among peaks within 1e-12 the smallest |delay|
    wins.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    n = a.size
    if b.size != n:
        raise ValueError(f"signals differ in length ({n} vs {b.size})")
    if n < 4:
        raise ValueError("signals need at least 4 samples")
    za, zb = _zscore(a, "a"), _zscore(b, "b")
    denom = np.sqrt(np.dot(za, za) * np.dot(zb, zb))
    # same dot kernel for every shift, so c[0] of a == b is exactly 1
    c = np.array([np.dot(za, np.roll(zb, -k)) for k in range(n)]) / denom
    delays = np.arange(n) / n
    delays = np.where(delays >= 0.5, delays - 1.0, delays)
    cand = np.flatnonzero(c >= c.max() - TIE_TOL)
    best = cand[np.lexsort((delays[cand], np.abs(delays[cand])))[0]]
    return float(np.clip(c[best], -1.0, 1.0)), float(delays[best])


@dataclass(frozen=True)
class ComponentMatch:
    index: int
    value: float
    delay: float


@dataclass
class KmpComparison:
    records: list[ComponentMatch]
    label: str = "A-B"

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.records])

    @property
    def delays(self) -> np.ndarray:
        return np.array([r.delay for r in self.records])

    def csv_rows(self):
        for r in self.records:
            yield (self.label, r.index, r.value, r.delay)

    def table(self, references=None) -> str:
        rows = [(self.label, self.values, self.delays)]
        for name, (vals, dels) in (references or {}).items():
            rows.append((f"{name} (ref)", np.asarray(vals), np.asarray(dels)))
        return format_comparison_table(rows, len(self.records))


def format_comparison_table(rows, n_components: int) -> str:
    """Cross-covariance and delay columns per component, one row per pair."""
    ords = [_ordinal(i + 1) for i in range(n_components)]
    head = ["pair"] + [f"cc {o}" for o in ords] + [f"delay {o}" for o in ords]
    body = []
    for label, vals, dels in rows:
        cells = [label] + [f"{v:.2f}" for v in vals[:n_components]] + [f"{d:.2f}" for d in dels[:n_components]]
        cells += [""] * (len(head) - len(cells))
        body.append(cells)
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in [head] + body]
    rule = "-" * len(lines[0])
    return "\n".join([lines[0], rule, *lines[1:]])


def _ordinal(i):
    return f"{i}{'st' if i == 1 else 'nd' if i == 2 else 'rd' if i == 3 else 'th'}"


def compare_kmp_sets(a: KmpSet, b: KmpSet, label: str = "A-B") -> KmpComparison:
    if a.n_s != b.n_s or a.n_c != b.n_c:
        raise ValueError(
            f"kMP sets differ in shape: {a.n_s}x{a.n_c} vs {b.n_s}x{b.n_c} (samples x components)"
        )
    recs = []
    for i in range(a.n_c):
        v, d = cross_covariance(a.components[:, i], b.components[:, i])
        recs.append(ComponentMatch(i + 1, v, d))
    return KmpComparison(recs, label)


def format_variance_table(cumulative, reference=None) -> str:
    lines = ["component  cumulative %" + ("  reference %" if reference is not None else "")]
    for i, v in enumerate(cumulative):
        line = f"{_ordinal(i + 1):>9}  {v:12.1f}"
        if reference is not None and i < len(reference):
            line += f"  {reference[i]:11.1f}"
        lines.append(line)
    return "\n".join(lines)


@dataclass(frozen=True)
class SpeedReport:
    gait: str
    speed: float  # m/s
    displacement: float  # m per cycle
    period: float  # s

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("cycle period must be positive")


def speed_report(log: TrajectoryLog, period: float, gait: str = "trot", trim_fraction: float = 0.0) -> SpeedReport:
    """Net base displacement over elapsed time of the (trimmed) log."""
    if log.base_x is None:
        raise ValueError("log has no base_x channel; speed cannot be computed")
    t = trim(log, trim_fraction) if trim_fraction else log
    elapsed = float(t.time[-1] - t.time[0]) if len(t) > 1 else 0.0
    if elapsed < 2.0 * period:
        raise ValueError(f"log spans {elapsed:.3g} s, fewer than two cycles of {period} s")
    speed = float(t.base_x[-1] - t.base_x[0]) / elapsed
    return SpeedReport(gait, speed, speed * period, period)
