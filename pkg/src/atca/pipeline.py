"""Registration (classifier bank construction) and authentication (randomized routing)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Axis, RawStroke, ScreenSetting, StrokeCorpus, StrokeType, infer_stroke_type
from .errors import BadBinCounts, EmptyPositives, MissingCell, NoOtherUsers, UnknownSetting
from .features import Scaler, extract_features, feature_matrix, fit_scaler
from .metrics import eer_threshold
from .svm import SvmModel, TrainConfig, decision_value, decision_values, grid_search, stratified_folds, train
from .synth import derive_seed

STROKE_TYPES = (StrokeType.HORIZONTAL, StrokeType.VERTICAL)
DEFAULT_INTERVAL_SECONDS = 30.0


@dataclass(frozen=True)
class RegistrationConfig:
    lo: float = 0.75
    hi: float = 1.25
    m: int = 5
    n: int = 5
    axis: Axis = Axis.X
    mode: str = "ATCA"
    train: TrainConfig = field(default_factory=TrainConfig)
    # Fraction of each class held out to estimate the decision threshold.
    holdout_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis(self.axis))
        if not self.lo > 0 or not self.hi > self.lo:
            raise BadBinCounts(f"setting range must satisfy 0 < lo < hi, got [{self.lo}, {self.hi}]")
        if not 1 <= self.n <= self.m:
            raise BadBinCounts(f"need 1 <= n <= m, got n={self.n}, m={self.m}")
        if self.mode not in ("Baseline", "ATCA"):
            raise ValueError(f"unknown training mode {self.mode!r}")

    def to_dict(self):
        return {
            "lo": self.lo,
            "hi": self.hi,
            "m": self.m,
            "n": self.n,
            "axis": self.axis.value,
            "mode": self.mode,
            "train": self.train.to_dict(),
            "holdout_fraction": self.holdout_fraction,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        return cls(**d)


def bin_centers(lo: float, hi: float, m: int) -> list:
    # Rounded so that e.g. 0.75 + 0.5 * 0.1 prints and compares as 0.8.
    return [round(lo + (i + 0.5) * (hi - lo) / m, 12) for i in range(m)]


def sample_settings(lo: float, hi: float, m: int, n: int, rng: np.random.Generator, axis=Axis.X) -> list:
    """n distinct bin centers of [lo, hi] split into m bins, chosen uniformly, ascending."""
    if not (isinstance(m, int) and isinstance(n, int)) or not 1 <= n <= m:
        raise BadBinCounts(f"need 1 <= n <= m, got n={n}, m={m}")
    if not lo > 0 or not hi > lo:
        raise BadBinCounts(f"setting range must satisfy 0 < lo < hi, got [{lo}, {hi}]")
    centers = bin_centers(lo, hi, m)
    picked = sorted(rng.choice(m, size=n, replace=False))
    return [ScreenSetting(Axis(axis), centers[i]) for i in picked]


def build_training_sets(corpus: StrokeCorpus, user, setting: ScreenSetting, stroke_type, mode: str):
    """(positives, negatives) stroke tuples for classifier c(user, setting, type)."""
    stroke_type = StrokeType(stroke_type)
    setting = corpus.resolve(setting, stroke_type)
    positives = corpus.cell(user, setting, stroke_type)
    if not positives:
        raise EmptyPositives(f"no {stroke_type.name} strokes for user {user} in {setting}")
    others = [v for v in corpus.users if v != user]
    if not others:
        raise NoOtherUsers("the corpus holds no other users to draw negatives from")
    if mode == "Baseline":
        negatives = [s for v in others for s in corpus.cell(v, setting, stroke_type)]
    elif mode == "ATCA":
        negatives = []
        for v, s, t in corpus.keys():
            if t == stroke_type and (v != user or s != setting):
                negatives.extend(corpus.cell(v, s, t))
    else:
        raise ValueError(f"unknown training mode {mode!r}")
    return tuple(positives), tuple(negatives)


@dataclass(frozen=True)
class BankEntry:
    model: SvmModel
    scaler: Scaler
    threshold: float

    def score(self, features) -> float:
        return decision_value(self.model, self.scaler.transform(features))


@dataclass
class ClassifierBank:
    user: int
    settings: tuple
    entries: dict  # (ScreenSetting, StrokeType) -> BankEntry
    mode: str = "ATCA"
    seed: int = 0

    def entry(self, setting, stroke_type) -> BankEntry:
        try:
            return self.entries[(setting, StrokeType(stroke_type))]
        except KeyError:
            raise UnknownSetting(f"bank for user {self.user} has no classifier for {setting}/{StrokeType(stroke_type).name}")

    def __len__(self):
        return len(self.entries)


def _setting_code(setting: ScreenSetting) -> tuple:
    return (ord(setting.axis.value), int(round(setting.factor * 1e6)))


def _train_entry(pos_X, neg_X, config: RegistrationConfig, rng) -> BankEntry:
    X = np.vstack([pos_X, neg_X])
    y = np.concatenate([np.ones(len(pos_X)), -np.ones(len(neg_X))])
    scaler = fit_scaler(X)
    Xs = scaler.transform(X)
    C, gamma = grid_search(Xs, y, config.train, rng)

    # Threshold at the EER point of a held-out split, then refit on everything.
    k = max(2, int(round(1.0 / config.holdout_fraction)))
    folds = stratified_folds(y, k, rng)
    held = folds[0]
    fit_rows = np.setdiff1d(np.arange(y.size), held)
    probe = train(Xs[fit_rows], y[fit_rows], C, gamma, tol=config.train.tol, max_iter=config.train.max_iter,
                  weight_cap=config.train.weight_cap)
    s = decision_values(probe, Xs[held])
    threshold = eer_threshold(s[y[held] > 0], s[y[held] < 0])

    model = train(Xs, y, C, gamma, tol=config.train.tol, max_iter=config.train.max_iter, weight_cap=config.train.weight_cap)
    return BankEntry(model, scaler, threshold)


def register_user(
    corpus: StrokeCorpus,
    user,
    config: RegistrationConfig | None = None,
    *,
    seed: int = 0,
    settings=None,
) -> ClassifierBank:
    """Train the 2n classifiers c(user, s, t) for s in S(user) and both stroke types.

    S(user) is `settings` when given, otherwise sampled from the configured bins.
    Every classifier uses its own seed derived from (seed, user, setting, type),
    so the bank does not depend on training order.
    """
    config = config or RegistrationConfig()
    if settings is None:
        rng = np.random.default_rng(derive_seed(seed, 0x5E77, user))
        settings = sample_settings(config.lo, config.hi, config.m, config.n, rng, config.axis)
    settings = tuple(settings)
    for s in settings:
        for t in STROKE_TYPES:
            if not corpus.cell(user, corpus.resolve(s, t), t):
                raise MissingCell(f"user {user} has no {t.name} strokes in {s}")
    entries = {}
    for s in settings:
        for t in STROKE_TYPES:
            pos, neg = build_training_sets(corpus, user, s, t, config.mode)
            rng = np.random.default_rng(derive_seed(seed, 0xBA4C, user, *_setting_code(s), 1 if t == StrokeType.HORIZONTAL else 2))
            entries[(s, t)] = _train_entry(feature_matrix(pos), feature_matrix(neg), config, rng)
    return ClassifierBank(user, settings, entries, config.mode, seed)


# -- authentication -----------------------------------------------------------


@dataclass(frozen=True)
class SettingSchedule:
    interval_seconds: float
    intervals: tuple  # ((index, ScreenSetting), ...)

    def setting_at(self, seconds: float) -> ScreenSetting:
        i = int(math.floor(seconds / self.interval_seconds))
        i = min(max(i, 0), len(self.intervals) - 1)
        return self.intervals[i][1]

    def interval_of(self, seconds: float) -> int:
        i = int(math.floor(seconds / self.interval_seconds))
        return min(max(i, 0), len(self.intervals) - 1)


def schedule_settings(settings, session_seconds: float, interval_seconds: float = DEFAULT_INTERVAL_SECONDS, rng=None) -> SettingSchedule:
    """Draw one setting per interval, i.i.d. uniform over `settings`."""
    if not interval_seconds > 0:
        raise ValueError("interval length must be positive")
    settings = list(settings)
    if not settings:
        raise ValueError("need at least one setting to schedule")
    rng = rng if rng is not None else np.random.default_rng(0)
    count = max(1, math.ceil(session_seconds / interval_seconds))
    picks = rng.integers(len(settings), size=count)
    return SettingSchedule(float(interval_seconds), tuple((i, settings[int(k)]) for i, k in enumerate(picks)))


def authenticate_stroke(bank: ClassifierBank, schedule: SettingSchedule, timestamp_s: float, stroke: RawStroke) -> tuple:
    """Score `stroke` with c(u, setting of its interval, stroke type); accept when score >= threshold."""
    setting = schedule.setting_at(timestamp_s)
    stype, _ = infer_stroke_type(stroke.points)
    entry = bank.entry(setting, stype)
    score = entry.score(extract_features(stroke))
    return score, score >= entry.threshold


@dataclass(frozen=True)
class StrokeDecision:
    timestamp: float
    score: float
    accepted: bool
    interval: int
    setting: ScreenSetting


@dataclass(frozen=True)
class SessionResult:
    decisions: tuple
    lockout: bool
    lockout_index: int | None
    # Seconds from session start to the first decision; None for an empty stream.
    time_to_first_decision: float | None


def run_session(bank: ClassifierBank, schedule: SettingSchedule, stream, consecutive_reject_limit: int = 3) -> SessionResult:
    """Authenticate a stream of (timestamp_s, stroke) pairs.

    The lockout flag is raised once `consecutive_reject_limit` strokes in a row
    are rejected; later strokes are still scored and recorded.
    """
    decisions = []
    run = 0
    lockout_index = None
    last = -math.inf
    for ts, stroke in stream:
        if ts < last:
            raise ValueError("stream timestamps must be non-decreasing")
        last = ts
        score, ok = authenticate_stroke(bank, schedule, ts, stroke)
        decisions.append(StrokeDecision(float(ts), float(score), bool(ok), schedule.interval_of(ts), schedule.setting_at(ts)))
        run = 0 if ok else run + 1
        if lockout_index is None and run >= consecutive_reject_limit:
            lockout_index = len(decisions) - 1
    first = decisions[0].timestamp if decisions else None
    return SessionResult(tuple(decisions), lockout_index is not None, lockout_index, first)
