"""Screen-setting distortion: raw sensor stroke -> what the application sees."""
from __future__ import annotations

from dataclasses import replace

from .core import Axis, RawStroke, ScreenSetting, TouchPoint
from .errors import InvalidFactor


def _scale_points(points, axis: Axis, factor: float):
    if not factor > 0:
        raise InvalidFactor(f"distortion factor must be positive, got {factor}")
    first = points[0]
    out = [first]
    if axis == Axis.X:
        c0 = first.x
        for q in points[1:]:
            out.append(TouchPoint(q.t, c0 + factor * (q.x - c0), q.y, q.p, q.a))
    else:
        c0 = first.y
        for q in points[1:]:
            out.append(TouchPoint(q.t, q.x, c0 + factor * (q.y - c0), q.p, q.a))
    return tuple(out)


def apply_setting(stroke: RawStroke, setting: ScreenSetting) -> RawStroke:
    """Distort every point after the first along the setting's axis.

    The first touch point is the anchor and is never moved, so taps are unaffected.
    Stroke type and direction are kept from the input stroke.
    """
    return replace(stroke, points=_scale_points(stroke.points, setting.axis, setting.factor))


def invert_setting(stroke: RawStroke, setting: ScreenSetting) -> RawStroke:
    """Undo `apply_setting` (scale by the reciprocal factor about the same anchor)."""
    if not setting.factor > 0:
        raise InvalidFactor(f"distortion factor must be positive, got {setting.factor}")
    return replace(stroke, points=_scale_points(stroke.points, setting.axis, 1.0 / setting.factor))
