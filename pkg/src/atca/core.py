"""Touch points, strokes, screen settings and the stroke corpus container."""
from __future__ import annotations

import enum
import hashlib
import math
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ClickNotStroke, InvalidFactor, NonMonotoneTime, TooFewPoints

CLICK_THRESHOLD = 20.0
MIN_POINTS = 3


class StrokeType(str, enum.Enum):
    HORIZONTAL = "H"
    VERTICAL = "V"


class Direction(str, enum.Enum):
    UP = "Up"
    DOWN = "Down"
    LEFT = "Left"
    RIGHT = "Right"


class Axis(str, enum.Enum):
    X = "X"
    Y = "Y"


# Axis each stroke type was collected under in the reference data design.
PAIRED_AXIS = {StrokeType.HORIZONTAL: Axis.X, StrokeType.VERTICAL: Axis.Y}


@dataclass(frozen=True)
class TouchPoint:
    """One raw sensor sample: time (ms), screen position, pressure and area."""

    t: float
    x: float
    y: float
    p: float = 0.0
    a: float = 0.0

    def __post_init__(self):
        for name in ("t", "x", "y", "p", "a"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"touch point field {name} is not finite")
        if self.p < 0 or self.a < 0:
            raise ValueError("pressure and area must be non-negative")


@dataclass(frozen=True, order=True)
class ScreenSetting:
    axis: Axis
    factor: float

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis(self.axis))
        if not (self.factor > 0 and math.isfinite(self.factor)):
            raise InvalidFactor(f"distortion factor must be positive, got {self.factor}")

    @property
    def label(self) -> str:
        return f"{self.axis.value}{self.factor!r}"

    @classmethod
    def parse(cls, text: str) -> "ScreenSetting":
        text = text.strip()
        if len(text) < 2 or text[0] not in "XY":
            raise ValueError(f"bad setting label {text!r}")
        return cls(Axis(text[0]), float(text[1:]))

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class RawStroke:
    points: tuple
    stroke_type: StrokeType
    direction: Direction
    user: int
    setting: ScreenSetting
    stroke_id: str

    @cached_property
    def array(self) -> np.ndarray:
        """Points as an (n, 5) float array with columns t, x, y, p, a."""
        arr = np.array([(q.t, q.x, q.y, q.p, q.a) for q in self.points], dtype=float)
        arr.setflags(write=False)
        return arr

    def __len__(self):
        return len(self.points)

    @property
    def key(self):
        return (self.user, self.setting, self.stroke_type)


def infer_stroke_type(points: Sequence[TouchPoint]) -> tuple[StrokeType, Direction]:
    """Classify by dominant displacement axis; ties go to horizontal.

    Screen y grows downward, so a negative y displacement is an Up stroke.
    """
    dx = points[-1].x - points[0].x
    dy = points[-1].y - points[0].y
    if abs(dx) >= abs(dy):
        return StrokeType.HORIZONTAL, (Direction.RIGHT if dx >= 0 else Direction.LEFT)
    return StrokeType.VERTICAL, (Direction.DOWN if dy > 0 else Direction.UP)


def trajectory_length(points: Sequence[TouchPoint]) -> float:
    return sum(math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(points, points[1:]))


def _content_id(points, user, setting) -> str:
    h = hashlib.sha1(f"{user}|{setting.label}".encode())
    for q in points:
        h.update(repr((q.t, q.x, q.y, q.p, q.a)).encode())
    return h.hexdigest()[:16]


def validate_stroke(
    points: Iterable[TouchPoint],
    user: int,
    setting: ScreenSetting,
    stroke_id: str | None = None,
) -> RawStroke:
    """Check a raw point sequence and wrap it as a typed stroke.

    Timestamps are sensor milliseconds; consecutive samples closer than 1 ms
    (or out of order) are rejected so velocities stay finite.
    """
    points = tuple(points)
    if len(points) < MIN_POINTS:
        raise TooFewPoints(f"stroke needs at least {MIN_POINTS} points, got {len(points)}")
    for i, (a, b) in enumerate(zip(points, points[1:])):
        if not b.t - a.t >= 1.0:
            raise NonMonotoneTime(f"timestamp {i + 1} ({b.t}) does not follow {a.t} by >= 1 ms")
    length = trajectory_length(points)
    if length < CLICK_THRESHOLD:
        raise ClickNotStroke(f"trajectory length {length:.2f} below click threshold {CLICK_THRESHOLD}")
    stype, direction = infer_stroke_type(points)
    if stroke_id is None:
        stroke_id = _content_id(points, user, setting)
    return RawStroke(points, stype, direction, user, setting, stroke_id)


class StrokeCorpus:
    """Strokes indexed by (user, setting, stroke type), the T(u, s, t) cells."""

    def __init__(self, strokes: Iterable[RawStroke] = ()):
        cells: dict = defaultdict(list)
        ids = set()
        for s in strokes:
            if s.stroke_id in ids:
                raise ValueError(f"duplicate stroke id {s.stroke_id}")
            ids.add(s.stroke_id)
            cells[s.key].append(s)
        self._cells = {k: tuple(v) for k, v in sorted(cells.items(), key=lambda kv: _key_order(kv[0]))}

    def cell(self, user, setting, stroke_type) -> tuple:
        return self._cells.get((user, setting, StrokeType(stroke_type)), ())

    def keys(self) -> list:
        return list(self._cells)

    @property
    def users(self) -> list:
        return sorted({k[0] for k in self._cells})

    def settings_for(self, stroke_type=None) -> list:
        """Settings present in the corpus, optionally only those holding a stroke type."""
        return sorted({k[1] for k in self._cells if stroke_type is None or k[2] == stroke_type})

    def stroke_types(self) -> list:
        return sorted({k[2] for k in self._cells}, key=lambda t: t.value)

    def resolve(self, setting: ScreenSetting, stroke_type) -> ScreenSetting:
        """Map a setting level to the setting a stroke type was actually collected under.

        If the corpus has the exact setting for this type it is returned; otherwise the
        setting with the same factor on the type's collection axis is used.
        """
        present = self.settings_for(stroke_type)
        if setting in present:
            return setting
        same = [s for s in present if s.factor == setting.factor]
        if len(same) == 1:
            return same[0]
        return setting

    def __iter__(self) -> Iterator[RawStroke]:
        for cell in self._cells.values():
            yield from cell

    def __len__(self):
        return sum(len(c) for c in self._cells.values())

    def __eq__(self, other):
        if not isinstance(other, StrokeCorpus):
            return NotImplemented
        return self._cells == other._cells

    def subset(self, predicate) -> "StrokeCorpus":
        return StrokeCorpus(s for s in self if predicate(s))


def _key_order(key):
    user, setting, stype = key
    return (user, setting.axis.value, setting.factor, stype.value)
