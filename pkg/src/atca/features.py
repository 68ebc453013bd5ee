"""Per-stroke feature extraction and [-1, 1] min/max rescaling."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import RawStroke, StrokeType
from .errors import DimensionMismatch, EmptyMatrix

FEATURE_NAMES = (
    "start_x",
    "start_y",
    "stop_x",
    "stop_y",
    "duration_ms",
    "end_to_end_distance",
    "end_to_end_direction_angle",
    "trajectory_length",
    "distance_ratio",
    "average_velocity",
    "velocity_p20",
    "velocity_p50",
    "velocity_p80",
    "accel_p20",
    "accel_p50",
    "accel_p80",
    "median_velocity_last3",
    "max_deviation_from_chord",
    "deviation_p20",
    "deviation_p50",
    "deviation_p80",
    "mean_segment_direction",
    "mean_resultant_length",
    "midstroke_pressure",
    "midstroke_area",
    "mean_pressure",
    "mean_area",
    "dominant_axis_displacement",
)
N_FEATURES = len(FEATURE_NAMES)

# Angles live in [-3pi/4, 5pi/4): all four swipe directions (0, pi/2, pi, -pi/2)
# sit at least pi/4 away from the branch cut.
_ANGLE_LO = -0.75 * math.pi


class NormalizationMode(str, enum.Enum):
    FAITHFUL = "faithful"
    TRAIN_STATS = "train-stats"


def wrap_angle(theta):
    return np.mod(np.asarray(theta) - _ANGLE_LO, 2 * math.pi) + _ANGLE_LO


def extract_features(stroke: RawStroke) -> np.ndarray:
    """Return the 28 features of `stroke` in `FEATURE_NAMES` order.

    Velocities are in device units per second and accelerations in units/s^2.
    Acceleration i is the difference of consecutive segment velocities over the
    time between the two segment midpoints. Deviations are perpendicular
    distances of every point to the start->stop chord (distance to the start
    point when the chord is degenerate). Percentiles interpolate linearly.
    """
    arr = stroke.array
    t, x, y, p, a = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4]
    dx = np.diff(x)
    dy = np.diff(y)
    dt = np.diff(t) / 1000.0
    seg = np.hypot(dx, dy)
    vel = seg / dt
    mid_dt = (t[2:] - t[:-2]) / 2000.0
    acc = np.diff(vel) / mid_dt

    cx = x[-1] - x[0]
    cy = y[-1] - y[0]
    e2e = math.hypot(cx, cy)
    path = float(seg.sum())
    duration = t[-1] - t[0]
    if e2e > 0:
        dev = np.abs((x - x[0]) * cy - (y - y[0]) * cx) / e2e
        angle = float(wrap_angle(math.atan2(cy, cx)))
    else:
        dev = np.hypot(x - x[0], y - y[0])
        angle = 0.0

    moving = seg > 0
    seg_angles = np.arctan2(dy[moving], dx[moving])
    mc = float(np.cos(seg_angles).mean())
    ms = float(np.sin(seg_angles).mean())
    mean_dir = float(wrap_angle(math.atan2(ms, mc)))
    resultant = min(1.0, math.hypot(mc, ms))

    idx = np.arange(len(t))
    mid = (len(t) - 1) / 2.0
    vp = np.percentile(vel, (20, 50, 80))
    ap = np.percentile(acc, (20, 50, 80))
    dp = np.percentile(dev, (20, 50, 80))
    dominant = cx if stroke.stroke_type == StrokeType.HORIZONTAL else cy

    return np.array(
        [
            x[0], y[0], x[-1], y[-1],
            duration,
            e2e,
            angle,
            path,
            min(1.0, e2e / path),
            path / (duration / 1000.0),
            vp[0], vp[1], vp[2],
            ap[0], ap[1], ap[2],
            float(np.median(vel[-3:])),
            float(dev.max()),
            dp[0], dp[1], dp[2],
            mean_dir,
            resultant,
            float(np.interp(mid, idx, p)),
            float(np.interp(mid, idx, a)),
            float(p.mean()),
            float(a.mean()),
            dominant,
        ],
        dtype=float,
    )


def feature_matrix(strokes: Iterable[RawStroke]) -> np.ndarray:
    rows = [extract_features(s) for s in strokes]
    if not rows:
        return np.empty((0, N_FEATURES))
    return np.vstack(rows)


def feature_dict(vector) -> dict:
    return dict(zip(FEATURE_NAMES, map(float, vector)))


@dataclass(frozen=True)
class Scaler:
    """Column-wise min/max recorded on a fitting matrix."""

    mins: np.ndarray
    maxs: np.ndarray

    def transform(self, X) -> np.ndarray:
        return apply_scaler(self, X)

    def to_dict(self):
        return {"min": [float(v) for v in self.mins], "max": [float(v) for v in self.maxs]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["min"], dtype=float), np.asarray(d["max"], dtype=float))

    def __eq__(self, other):
        if not isinstance(other, Scaler):
            return NotImplemented
        return np.array_equal(self.mins, other.mins) and np.array_equal(self.maxs, other.maxs)

    __hash__ = None


def fit_scaler(matrix: Sequence) -> Scaler:
    X = np.atleast_2d(np.asarray(matrix, dtype=float))
    if X.size == 0 or X.shape[0] == 0:
        raise EmptyMatrix("cannot fit a scaler on an empty matrix")
    return Scaler(X.min(axis=0), X.max(axis=0))


def apply_scaler(scaler: Scaler, vector) -> np.ndarray:
    """Map each feature to 2(v - min)/(max - min) - 1; constant columns map to 0."""
    X = np.asarray(vector, dtype=float)
    if X.shape[-1] != scaler.mins.shape[0]:
        raise DimensionMismatch(f"expected {scaler.mins.shape[0]} features, got {X.shape[-1]}")
    span = scaler.maxs - scaler.mins
    safe = np.where(span > 0, span, 1.0)
    out = 2.0 * (X - scaler.mins) / safe - 1.0
    return np.where(span > 0, out, 0.0)
