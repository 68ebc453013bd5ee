"""Synthetic users whose raw strokes adapt to the active screen setting.

Each simulated user intends a displacement D in the application's view. Under a
distortion factor f along the stroke's axis the user realises a raw displacement
of D * (kappa / f + (1 - kappa)): kappa = 1 compensates fully, kappa = 0 not at
all. The extra raw length is produced by moving the stop point (fraction rho)
and/or the start point (fraction 1 - rho). Per-user anchors (start points,
displacement, speed, curvature, pressure, area) keep users apart from each
other, while the compensation makes a user's strokes differ between settings.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import (
    PAIRED_AXIS,
    Axis,
    Direction,
    RawStroke,
    ScreenSetting,
    StrokeCorpus,
    StrokeType,
    TouchPoint,
    validate_stroke,
)
from .errors import InsufficientData, InvalidStroke
from .features import feature_matrix, fit_scaler

log = logging.getLogger(__name__)

DEFAULT_FACTORS = (0.8, 0.9, 1.0, 1.1, 1.2)
DIRECTIONS = {
    StrokeType.HORIZONTAL: (Direction.LEFT, Direction.RIGHT),
    StrokeType.VERTICAL: (Direction.UP, Direction.DOWN),
}
_UNIT = {
    Direction.RIGHT: (1.0, 0.0),
    Direction.LEFT: (-1.0, 0.0),
    Direction.DOWN: (0.0, 1.0),
    Direction.UP: (0.0, -1.0),
}
_TYPE_CODE = {StrokeType.HORIZONTAL: 1, StrokeType.VERTICAL: 2}
_AXIS_CODE = {Axis.X: 1, Axis.Y: 2}


def default_settings() -> tuple:
    return tuple(ScreenSetting(ax, f) for ax in (Axis.X, Axis.Y) for f in DEFAULT_FACTORS)


@dataclass(frozen=True)
class HyperParams:
    """Uniform ranges (lo, hi) from which each user's parameters are drawn.

    Positions are in device pixels on a 1080 x 1920 portrait screen, speeds in
    pixels per millisecond. Setting lo == hi makes every user identical in that
    parameter.
    """

    kappa: tuple = (0.8, 1.0)
    # Share of users who barely adapt; their kappa comes from kappa_non_adapter.
    non_adapter_fraction: float = 0.45
    # Probability of a user's preferred direction within each stroke type.
    primary_share: tuple = (0.8, 1.0)
    # Chance that the preferred direction is the second of the pair (left / down).
    preference_flip: float = 0.5
    kappa_non_adapter: tuple = (0.0, 0.1)
    rho: tuple = (0.0, 1.0)
    # start-point anchors per (type, direction), as (x range, y range)
    start_h_right: tuple = ((150.0, 450.0), (500.0, 1500.0))
    start_h_left: tuple = ((630.0, 930.0), (500.0, 1500.0))
    start_v_up: tuple = ((300.0, 780.0), (1200.0, 1650.0))
    start_v_down: tuple = ((300.0, 780.0), (300.0, 700.0))
    start_std: tuple = (6.0, 15.0)
    disp_h: tuple = (300.0, 550.0)
    disp_v: tuple = (380.0, 650.0)
    disp_rel_std: tuple = (0.015, 0.03)
    angle: tuple = (-0.08, 0.08)
    angle_std: tuple = (0.015, 0.04)
    speed: tuple = (0.8, 2.5)
    speed_rel_std: tuple = (0.03, 0.07)
    curvature: tuple = (-0.06, 0.06)
    curvature_std: tuple = (0.005, 0.015)
    jitter: tuple = (0.5, 2.0)
    pressure: tuple = (0.25, 0.75)
    pressure_std: tuple = (0.02, 0.05)
    area: tuple = (0.05, 0.25)
    area_std: tuple = (0.005, 0.015)
    points: tuple = (8.0, 20.0)

    def to_dict(self):
        return _listify(asdict(self))

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: _tuplify(v) for k, v in d.items()})


def _listify(obj):
    if isinstance(obj, (tuple, list)):
        return [_listify(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    return obj


def _tuplify(obj):
    if isinstance(obj, list):
        return tuple(_tuplify(v) for v in obj)
    return obj


@dataclass(frozen=True)
class PopulationConfig:
    n_users: int = 25
    settings: tuple = field(default_factory=default_settings)
    # "paired": horizontal strokes only under X settings, vertical only under Y
    # (the collection design of the reference study); "all": every type under every setting.
    pairing: str = "paired"
    strokes_per_cell: int = 50
    hyper: HyperParams = field(default_factory=HyperParams)
    seed: int = 0

    def __post_init__(self):
        settings = tuple(s if isinstance(s, ScreenSetting) else ScreenSetting.parse(s) for s in self.settings)
        object.__setattr__(self, "settings", settings)
        if self.n_users < 2:
            raise ValueError("population needs at least 2 users")
        if not self.settings:
            raise ValueError("population needs at least one setting")
        if self.strokes_per_cell < 10:
            raise ValueError("strokes_per_cell must be at least 10")
        if self.pairing not in ("paired", "all"):
            raise ValueError(f"unknown pairing {self.pairing!r}")

    def cells(self):
        """(setting, stroke_type) pairs that get generated for every user."""
        out = []
        for s in self.settings:
            for t in (StrokeType.HORIZONTAL, StrokeType.VERTICAL):
                if self.pairing == "all" or PAIRED_AXIS[t] == s.axis:
                    out.append((s, t))
        return out

    def to_dict(self):
        return {
            "n_users": self.n_users,
            "settings": [s.label for s in self.settings],
            "pairing": self.pairing,
            "strokes_per_cell": self.strokes_per_cell,
            "hyper": self.hyper.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "settings" in d:
            d["settings"] = tuple(ScreenSetting.parse(s) for s in d["settings"])
        if "hyper" in d:
            d["hyper"] = HyperParams.from_dict(d["hyper"])
        return cls(**d)


@dataclass(frozen=True)
class StrokeProfile:
    """Habits of one user for one (stroke type, direction)."""

    start_mean: tuple
    start_cov: tuple  # 2x2 row-major
    disp_mean: float
    disp_std: float
    angle_mean: float
    angle_std: float
    speed_mean: float
    speed_std: float
    curvature_mean: float
    curvature_std: float
    jitter_std: float
    pressure_mean: float
    pressure_std: float
    area_mean: float
    area_std: float
    points_mean: float


@dataclass(frozen=True)
class UserParams:
    user_index: int
    kappa: float
    rho: float
    profiles: dict  # (StrokeType, Direction) -> StrokeProfile
    # StrokeType -> probability of DIRECTIONS[type][0]
    first_direction_prob: dict = field(default_factory=lambda: {t: 0.5 for t in StrokeType})

    def with_profile(self, stroke_type, direction, **changes) -> "UserParams":
        profiles = dict(self.profiles)
        profiles[(stroke_type, direction)] = replace(profiles[(stroke_type, direction)], **changes)
        return replace(self, profiles=profiles)


def derive_seed(*keys: int) -> np.random.SeedSequence:
    """Seed sequence depending only on the integer keys, never on call order."""
    return np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys])


def _u(rng, rng_range):
    lo, hi = rng_range
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def sample_user_params(config: PopulationConfig, user_index: int) -> UserParams:
    h = config.hyper
    rng = np.random.default_rng(derive_seed(config.seed, 0x5EED, user_index))
    non_adapter = rng.uniform() < h.non_adapter_fraction
    kappa = _u(rng, h.kappa_non_adapter if non_adapter else h.kappa)
    rho = _u(rng, h.rho)
    profiles = {}
    starts = {
        (StrokeType.HORIZONTAL, Direction.RIGHT): h.start_h_right,
        (StrokeType.HORIZONTAL, Direction.LEFT): h.start_h_left,
        (StrokeType.VERTICAL, Direction.UP): h.start_v_up,
        (StrokeType.VERTICAL, Direction.DOWN): h.start_v_down,
    }
    for (stype, direction), (xr, yr) in starts.items():
        disp = _u(rng, h.disp_h if stype == StrokeType.HORIZONTAL else h.disp_v)
        sx = _u(rng, h.start_std)
        sy = _u(rng, h.start_std)
        speed = _u(rng, h.speed)
        pressure = _u(rng, h.pressure)
        area = _u(rng, h.area)
        profiles[(stype, direction)] = StrokeProfile(
            start_mean=(_u(rng, xr), _u(rng, yr)),
            start_cov=(sx * sx, 0.0, 0.0, sy * sy),
            disp_mean=disp,
            disp_std=disp * _u(rng, h.disp_rel_std),
            angle_mean=_u(rng, h.angle),
            angle_std=_u(rng, h.angle_std),
            speed_mean=speed,
            speed_std=speed * _u(rng, h.speed_rel_std),
            curvature_mean=_u(rng, h.curvature),
            curvature_std=_u(rng, h.curvature_std),
            jitter_std=_u(rng, h.jitter),
            pressure_mean=pressure,
            pressure_std=_u(rng, h.pressure_std),
            area_mean=area,
            area_std=_u(rng, h.area_std),
            points_mean=_u(rng, h.points),
        )
    first = {}
    for stype in (StrokeType.HORIZONTAL, StrokeType.VERTICAL):
        share = _u(rng, h.primary_share)
        first[stype] = 1.0 - share if rng.uniform() >= 1.0 - h.preference_flip else share
    return UserParams(user_index, kappa, rho, profiles, first)


def compensation_gain(kappa: float, factor: float) -> float:
    """Raw/intended displacement ratio along the distorted axis."""
    return kappa / factor + (1.0 - kappa)


def _draw_points(user: UserParams, setting: ScreenSetting, stype, direction, rng):
    prof = user.profiles[(stype, direction)]
    ux, uy = _UNIT[direction]
    theta = rng.normal(prof.angle_mean, prof.angle_std) if prof.angle_std > 0 else prof.angle_mean
    c, s = math.cos(theta), math.sin(theta)
    ux, uy = c * ux - s * uy, s * ux + c * uy

    cov = np.array(prof.start_cov, dtype=float).reshape(2, 2)
    anchor = rng.multivariate_normal(prof.start_mean, cov) if cov.any() else np.array(prof.start_mean)
    D = max(rng.normal(prof.disp_mean, prof.disp_std), 60.0)
    intended = np.array([D * ux, D * uy])

    gain = compensation_gain(user.kappa, setting.factor)
    raw = intended.copy()
    k = 0 if setting.axis == Axis.X else 1
    raw[k] *= gain
    extra = raw - intended
    start = anchor - (1.0 - user.rho) * extra
    stop = anchor + intended + user.rho * extra

    n = max(5, int(rng.poisson(prof.points_mean)))
    chord = stop - start
    length = float(np.hypot(*chord))
    normal = np.array([-chord[1], chord[0]]) / length
    speed = max(rng.normal(prof.speed_mean, prof.speed_std), 0.2)
    duration = max(length / speed, 2.0 * n)

    tau = np.linspace(0.0, 1.0, n)
    frac = np.where(tau <= 0.5, 2.0 * tau**2, 1.0 - 2.0 * (1.0 - tau) ** 2)
    bow = rng.normal(prof.curvature_mean, prof.curvature_std) * length
    xy = start[None, :] + frac[:, None] * chord[None, :] + (bow * np.sin(np.pi * frac))[:, None] * normal[None, :]
    xy[1:] += rng.normal(0.0, prof.jitter_std, size=(n - 1, 2))
    t = np.round(tau * duration)

    bell = 0.85 + 0.15 * np.sin(np.pi * tau)
    p_level = max(rng.normal(prof.pressure_mean, prof.pressure_std), 0.01)
    a_level = max(rng.normal(prof.area_mean, prof.area_std), 0.005)
    p = np.maximum(p_level * bell + rng.normal(0.0, 0.01, n), 0.0)
    a = np.maximum(a_level * bell + rng.normal(0.0, 0.002, n), 0.0)
    return [TouchPoint(float(t[i]), float(xy[i, 0]), float(xy[i, 1]), float(p[i]), float(a[i])) for i in range(n)]


def generate_stroke(
    user: UserParams,
    setting: ScreenSetting,
    stroke_type: StrokeType,
    rng: np.random.Generator,
    *,
    direction: Direction | None = None,
    stroke_id: str | None = None,
    max_tries: int = 50,
) -> RawStroke:
    """Draw one raw stroke of `stroke_type` as the user would produce it under `setting`.

    Draws that fail validation or come out with the other dominant axis are redrawn
    from the same generator, so the result is still a pure function of `rng`'s state.
    """
    stroke_type = StrokeType(stroke_type)
    for _ in range(max_tries):
        d = direction
        if d is None:
            options = DIRECTIONS[stroke_type]
            d = options[0] if rng.uniform() < user.first_direction_prob[stroke_type] else options[1]
        points = _draw_points(user, setting, stroke_type, d, rng)
        try:
            stroke = validate_stroke(points, user.user_index, setting, stroke_id)
        except InvalidStroke:
            continue
        if stroke.stroke_type == stroke_type:
            return stroke
    raise RuntimeError(f"could not draw a valid {stroke_type.name} stroke in {max_tries} tries")


def stroke_id_for(user: int, setting: ScreenSetting, stroke_type: StrokeType, k: int) -> str:
    return f"u{user:03d}-{setting.label}-{stroke_type.value}-{k:04d}"


def _generate_user(args):
    config, user_index = args
    params = sample_user_params(config, user_index)
    out = []
    for setting, stype in config.cells():
        for k in range(config.strokes_per_cell):
            rng = np.random.default_rng(
                derive_seed(
                    config.seed,
                    user_index,
                    _AXIS_CODE[setting.axis],
                    int(round(setting.factor * 1e6)),
                    _TYPE_CODE[stype],
                    k,
                )
            )
            out.append(generate_stroke(params, setting, stype, rng, stroke_id=stroke_id_for(user_index, setting, stype, k)))
    return out


def generate_population(config: PopulationConfig, workers: int = 1) -> StrokeCorpus:
    """Generate the full corpus; identical for any worker count."""
    jobs = [(config, u) for u in range(config.n_users)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            per_user = list(ex.map(_generate_user, jobs))
    else:
        per_user = [_generate_user(j) for j in jobs]
    log.info("generated %d users x %d cells", config.n_users, len(config.cells()))
    return StrokeCorpus(s for user_strokes in per_user for s in user_strokes)


def _centroid_distance_stats(Xs, users, settings):
    uniq_users = sorted(set(users))
    uniq_settings = sorted(set(settings))
    global_c = {u: Xs[users == u].mean(axis=0) for u in uniq_users}
    margins = {}
    for u in uniq_users:
        cents = [Xs[(users == u) & (settings == s)].mean(axis=0) for s in uniq_settings if ((users == u) & (settings == s)).any()]
        pair = [np.linalg.norm(a - b) for i, a in enumerate(cents) for b in cents[i + 1 :]]
        d_intra = float(np.mean(pair)) if pair else 0.0
        d_inter = float(np.mean([np.linalg.norm(global_c[u] - global_c[v]) for v in uniq_users if v != u]))
        margins[u] = d_inter - d_intra
    return margins


def _nearest_centroid_bacc(A, B, rng):
    """Balanced accuracy of a nearest-centroid rule separating A from B under 2-fold CV."""
    pa = rng.permutation(len(A))
    pb = rng.permutation(len(B))
    halves_a = (pa[: len(A) // 2], pa[len(A) // 2 :])
    halves_b = (pb[: len(B) // 2], pb[len(B) // 2 :])
    accs = []
    for f in (0, 1):
        ca = A[halves_a[f]].mean(axis=0)
        cb = B[halves_b[f]].mean(axis=0)
        ta = A[halves_a[1 - f]]
        tb = B[halves_b[1 - f]]
        rec_a = np.mean(np.linalg.norm(ta - ca, axis=1) < np.linalg.norm(ta - cb, axis=1))
        rec_b = np.mean(np.linalg.norm(tb - cb, axis=1) < np.linalg.norm(tb - ca, axis=1))
        accs.append((rec_a + rec_b) / 2.0)
    return float(np.mean(accs))


def validate_population(corpus: StrokeCorpus, seed: int = 0) -> dict:
    """Stability and sensitivity diagnostics in min/max-scaled feature space.

    stability_margin: median over users of (mean distance from the user's centroid
    to other users' centroids) - (mean pairwise distance between the user's
    per-setting centroids). sensitivity_score: mean over users of the balanced
    accuracy of a nearest-centroid rule separating the user's two extreme settings.
    Both are averaged over stroke types. `feature_scale` is the mean distance of a
    stroke to the global centroid, for judging the size of the margin.
    """
    users_all = corpus.users
    if len(users_all) < 2:
        raise InsufficientData("need at least 2 users")
    margins: dict = {}
    sens: dict = {}
    scales = []
    rng = np.random.default_rng(derive_seed(seed, 0xCA11))
    for stype in corpus.stroke_types():
        settings = corpus.settings_for(stype)
        if len(settings) < 2:
            continue
        strokes = [s for s in corpus if s.stroke_type == stype]
        X = feature_matrix(strokes)
        Xs = fit_scaler(X).transform(X)
        users = np.array([s.user for s in strokes])
        sidx = np.array([settings.index(s.setting) for s in strokes])
        scales.append(float(np.linalg.norm(Xs - Xs.mean(axis=0), axis=1).mean()))
        for u, m in _centroid_distance_stats(Xs, users, sidx).items():
            margins.setdefault(u, []).append(m)
        lo = min(range(len(settings)), key=lambda i: settings[i].factor)
        hi = max(range(len(settings)), key=lambda i: settings[i].factor)
        for u in sorted(set(users)):
            A = Xs[(users == u) & (sidx == lo)]
            B = Xs[(users == u) & (sidx == hi)]
            if len(A) >= 2 and len(B) >= 2:
                sens.setdefault(u, []).append(_nearest_centroid_bacc(A, B, rng))
    if not margins or not sens:
        raise InsufficientData("need at least 2 settings for some stroke type")
    return {
        "stability_margin": float(np.median([np.mean(v) for v in margins.values()])),
        "sensitivity_score": float(np.mean([np.mean(v) for v in sens.values()])),
        "feature_scale": float(np.mean(scales)),
    }
