"""CSV and JSON readers/writers for logs, cycles, kMP sets and synergy maps.

Floats are written with 17 significant digits so every reader/writer pair
roundtrips doubles exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .env import JOINT_NAMES
from .kmp import KmpSet
from .synthesis import SynergyMatrix
from .trajectory import GaitCycle, TrajectoryLog

LOG_HEADER = (
    ("time",)
    + JOINT_NAMES
    + tuple(f"vel_{i}" for i in range(8))
    + tuple(f"tau_{i}" for i in range(8))
    + ("quat_w", "quat_x", "quat_y", "quat_z", "base_x", "base_z")
)
CYCLE_HEADER = ("phase",) + JOINT_NAMES
CURVE_HEADER = ("epoch", "mean_return", "mean_speed", "d_kl", "beta_kl")


class FormatError(ValueError):
    def __init__(self, path, message, line=None):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return format(v, ".17g")


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def _read_csv(path, header, allow_empty=()):
    """Rows as float arrays; empty cells become NaN only in ``allow_empty`` columns."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(path, f"cannot open: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got is None:
            raise FormatError(path, "file is empty", 1)
        if tuple(c.strip() for c in got) != tuple(header):
            raise FormatError(path, f"unexpected header {got}; expected {list(header)}", 1)
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(header):
                raise FormatError(path, f"expected {len(header)} fields, got {len(raw)}", lineno)
            vals = []
            for name, cell in zip(header, raw):
                cell = cell.strip()
                if cell == "" and name in allow_empty:
                    vals.append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise FormatError(path, f"column {name!r}: cannot parse {cell!r} as a number", lineno) from None
                if not math.isfinite(v):
                    raise FormatError(path, f"column {name!r}: non-finite value {cell!r}", lineno)
                vals.append(v)
            rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, len(header))


def write_log(path, log: TrajectoryLog) -> None:
    n = len(log)
    nan = np.full(n, np.nan)
    bx = nan if log.base_x is None else log.base_x
    bz = nan if log.base_z is None else log.base_z
    data = np.column_stack([log.time, log.angles, log.velocities, log.torques, log.quaternion, bx, bz])
    _write_csv(path, LOG_HEADER, data)


def read_log(path) -> TrajectoryLog:
    a = _read_csv(path, LOG_HEADER, allow_empty=("base_x", "base_z"))
    bx, bz = a[:, 29], a[:, 30]
    try:
        return TrajectoryLog(
            a[:, 0],
            a[:, 1:9],
            a[:, 9:17],
            a[:, 17:25],
            a[:, 25:29],
            None if np.all(np.isnan(bx)) else bx,
            None if np.all(np.isnan(bz)) else bz,
        )
    except ValueError as exc:
        raise FormatError(path, str(exc)) from None


def is_cycle_file(path) -> bool:
    """True when the CSV header is the gait-cycle layout."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            first = next(csv.reader(fh), None)
    except OSError:
        return False
    return first is not None and tuple(c.strip() for c in first) == CYCLE_HEADER


def write_cycle(path, cycle: GaitCycle) -> None:
    _write_csv(path, CYCLE_HEADER, np.column_stack([cycle.phase, cycle.samples]))


def read_cycle(path, period: float = 1.0) -> GaitCycle:
    a = _read_csv(path, CYCLE_HEADER)
    n = a.shape[0]
    if n < 2:
        raise FormatError(path, "gait cycle needs at least two rows")
    phase = a[:, 0]
    expect = np.arange(n) / n
    bad = np.flatnonzero(np.abs(phase - expect) > 1e-9)
    if bad.size:
        raise FormatError(path, f"phase {phase[bad[0]]} is not on the uniform grid (expected {expect[bad[0]]})", bad[0] + 2)
    return GaitCycle(a[:, 1:], period)


def write_curve(path, curve) -> None:
    _write_csv(path, CURVE_HEADER, ([row[k] for k in CURVE_HEADER] for row in curve))


def read_curve(path) -> list[dict]:
    a = _read_csv(path, CURVE_HEADER)
    return [dict(zip(CURVE_HEADER, (int(r[0]), *map(float, r[1:])))) for r in a]


def write_comparison(path, comparison) -> None:
    from .analysis import COMPARISON_HEADER

    _write_csv(path, COMPARISON_HEADER, comparison.csv_rows())


def _dump(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=1, allow_nan=False)
        fh.write("\n")


def _load(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(path, f"cannot open: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(obj, dict):
        raise FormatError(path, "top-level JSON value must be an object")
    return obj


def _require(path, obj, keys):
    missing = [k for k in keys if k not in obj]
    if missing:
        raise FormatError(path, f"missing keys {missing}")


def kmps_to_dict(kmps: KmpSet) -> dict:
    return {
        "n_s": kmps.n_s,
        "n_c": kmps.n_c,
        "columns": list(kmps.columns),
        "mean_offset": kmps.mean_offset.tolist(),
        "eigenvalues": kmps.eigenvalues.tolist(),
        "components": kmps.components.T.tolist(),
        "cumulative_variance": kmps.cumulative_variance.tolist(),
        "provenance": kmps.provenance,
    }


def write_kmps(path, kmps: KmpSet) -> None:
    _dump(path, kmps_to_dict(kmps))


def read_kmps(path) -> KmpSet:
    obj = _load(path)
    _require(path, obj, ("n_s", "n_c", "columns", "mean_offset", "eigenvalues", "components"))
    try:
        comps = np.array(obj["components"], dtype=float)
        if comps.ndim != 2 or comps.shape != (obj["n_c"], obj["n_s"]):
            raise ValueError(f"components must be {obj['n_c']} lists of {obj['n_s']} values")
        return KmpSet(comps.T, obj["mean_offset"], obj["eigenvalues"], None, obj["columns"], obj.get("provenance", {}))
    except (ValueError, TypeError) as exc:
        raise FormatError(path, str(exc)) from None


def write_synergy(path, syn: SynergyMatrix) -> None:
    _dump(path, {"n_c": syn.n_c, "n_j": syn.n_j, "s": syn.s.tolist(), "provenance": syn.provenance})


def read_synergy(path) -> SynergyMatrix:
    obj = _load(path)
    _require(path, obj, ("n_c", "n_j", "s"))
    try:
        s = np.array(obj["s"], dtype=float)
        if s.shape != (obj["n_c"], obj["n_j"]):
            raise ValueError(f"s must be {obj['n_c']} rows of {obj['n_j']} values, got shape {s.shape}")
        return SynergyMatrix(s, provenance=obj.get("provenance", {}))
    except (ValueError, TypeError) as exc:
        raise FormatError(path, str(exc)) from None


def write_json(path, obj) -> None:
    _dump(path, obj)


def read_json(path) -> dict:
    return _load(path)


def save_policy(path, policy) -> None:
    """Actor weights, std and action box as a ``.npz`` archive."""
    from .ppo.policy import GaussianPolicy

    if not isinstance(policy, GaussianPolicy):
        raise TypeError("expected a GaussianPolicy")
    arrays = {f"w{i}": w for i, w in enumerate(policy.net.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(policy.net.biases)})
    arrays["activations"] = np.array(policy.net.activations)
    arrays.update(log_std=policy.log_std, low=policy.low, high=policy.high)
    if policy.obs_scale is not None:
        arrays["obs_scale"] = policy.obs_scale
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_policy(path):
    from .ppo.mlp import Mlp
    from .ppo.policy import GaussianPolicy

    try:
        with np.load(path) as z:
            n = len(z["activations"])
            net = Mlp([z[f"w{i}"] for i in range(n)], [z[f"b{i}"] for i in range(n)], tuple(str(a) for a in z["activations"]))
            scale = z["obs_scale"] if "obs_scale" in z.files else None
            return GaussianPolicy(net, z["log_std"], z["low"], z["high"], scale)
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(path, f"not a policy checkpoint: {exc}") from None
