"""Cross-validated forgery-attack evaluation.

For every stroke type and trial i, each user's classifiers are trained on folds
other than i and scored on fold i. Positive test strokes are the user's own
strokes in the classifier's setting; random attacks (RA) replay other users'
strokes collected in a source setting, targeted attacks (TA) replay the user's
own strokes from a source setting. The per-cell EERs are averaged over trials
and then summarized over users.

All C-ATCA classifiers of one (stroke type, trial) are trained on the same
matrix (every training-fold stroke; only the labels differ), and all
C-Baseline-x classifiers share the training strokes of setting x. Distance and
kernel matrices are therefore computed once per pool and reused.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import StrokeCorpus, StrokeType
from .errors import IncompleteMatrix, TooFewStrokes
from .features import NormalizationMode, apply_scaler, feature_matrix, fit_scaler
from .metrics import eer
from .svm import TrainConfig, decision_from_kernel, grid_search, kernel_matrix, squared_distances, train_pooled
from .synth import derive_seed

log = logging.getLogger(__name__)

FAMILIES = ("Baseline", "ATCA")
KINDS = ("RA", "TA")
SETTING_LETTERS = "abcdefghijklmnopqrstuvwxyz"
SCENARIOS = {
    "I": ((0, 1), (0, 1, 2), (0, 1, 2, 3), (0, 1, 2, 3, 4)),
    "II": ((0, 4), (0, 2, 4), (0, 1, 2, 4), (0, 1, 2, 3, 4)),
}
# Observed stroke rates (per second) for settings a..e.
DEFAULT_RATES = {
    StrokeType.HORIZONTAL: (0.35, 0.30, 0.19, 0.17, 0.17),
    StrokeType.VERTICAL: (0.71, 0.47, 0.31, 0.30, 0.27),
}
_FAMILY_CODE = {"Baseline": 1, "ATCA": 2}
_TYPE_CODE = {StrokeType.HORIZONTAL: 1, StrokeType.VERTICAL: 2}


@dataclass(frozen=True)
class LearningCurveConfig:
    user: int = 0
    trial: int = 0
    family: str = "ATCA"
    setting_index: int = 4
    stroke_type: StrokeType = StrokeType.HORIZONTAL
    budgets_minutes: tuple = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)

    def to_dict(self):
        return {
            "user": self.user,
            "trial": self.trial,
            "family": self.family,
            "setting_index": self.setting_index,
            "stroke_type": self.stroke_type.value,
            "budgets_minutes": list(self.budgets_minutes),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "stroke_type" in d:
            d["stroke_type"] = StrokeType(d["stroke_type"])
        if "budgets_minutes" in d:
            d["budgets_minutes"] = tuple(d["budgets_minutes"])
        return cls(**d)


@dataclass(frozen=True)
class EvalConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    k_folds: int = 5
    normalization: NormalizationMode = NormalizationMode.FAITHFUL
    seed: int = 0
    stroke_types: tuple = (StrokeType.HORIZONTAL, StrokeType.VERTICAL)
    learning_curve: LearningCurveConfig = field(default_factory=LearningCurveConfig)

    def __post_init__(self):
        object.__setattr__(self, "normalization", NormalizationMode(self.normalization))
        object.__setattr__(self, "stroke_types", tuple(StrokeType(t) for t in self.stroke_types))

    def to_dict(self):
        return {
            "train": self.train.to_dict(),
            "k_folds": self.k_folds,
            "normalization": self.normalization.value,
            "seed": self.seed,
            "stroke_types": [t.value for t in self.stroke_types],
            "learning_curve": self.learning_curve.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        if "learning_curve" in d:
            d["learning_curve"] = LearningCurveConfig.from_dict(d["learning_curve"])
        return cls(**d)


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- folds -------------------------------------------------------------------


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    folds: dict  # (user, setting, type) -> tuple of k tuples of stroke ids

    def fold(self, user, setting, stroke_type, i) -> tuple:
        return self.folds[(user, setting, StrokeType(stroke_type))][i]

    def fold_of(self) -> dict:
        """stroke id -> fold index."""
        return {sid: i for cell in self.folds.values() for i, ids in enumerate(cell) for sid in ids}


def kfold_split(corpus: StrokeCorpus, k: int = 5, seed=0) -> FoldAssignment:
    """Uniformly random partition of every (user, setting, type) cell into k folds.

    Fold sizes differ by at most one; earlier folds take the remainder.
    """
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**32))
    folds = {}
    for key in corpus.keys():
        user, setting, stype = key
        cell = corpus.cell(*key)
        if len(cell) < k:
            raise TooFewStrokes(f"cell {user}/{setting}/{stype.name} has {len(cell)} strokes, need {k}")
        rng = np.random.default_rng(
            derive_seed(seed, 0xF01D, user, int(round(setting.factor * 1e6)), ord(setting.axis.value), _TYPE_CODE[stype])
        )
        perm = rng.permutation(len(cell))
        folds[key] = tuple(tuple(cell[j].stroke_id for j in perm[i::k]) for i in range(k))
    return FoldAssignment(k, folds)


# -- per-type arrays ---------------------------------------------------------


@dataclass
class TypeData:
    """Feature rows of one stroke type with user / setting-index / fold labels."""

    stroke_type: StrokeType
    settings: list
    users: list
    X: np.ndarray
    user: np.ndarray
    setting: np.ndarray
    fold: np.ndarray
    ids: list


def type_data(corpus: StrokeCorpus, folds: FoldAssignment, stroke_type) -> TypeData:
    stroke_type = StrokeType(stroke_type)
    settings = sorted(corpus.settings_for(stroke_type), key=lambda s: s.factor)
    strokes = [s for s in corpus if s.stroke_type == stroke_type]
    fold_of = folds.fold_of()
    return TypeData(
        stroke_type=stroke_type,
        settings=settings,
        users=sorted({s.user for s in strokes}),
        X=feature_matrix(strokes),
        user=np.array([s.user for s in strokes]),
        setting=np.array([settings.index(s.setting) for s in strokes]),
        fold=np.array([fold_of[s.stroke_id] for s in strokes]),
        ids=[s.stroke_id for s in strokes],
    )


# -- one (type, trial) job ---------------------------------------------------


def _cell_eers(scores, td: TypeData, test, u, x):
    """EERs of classifier (u, x) against every RA/TA source setting: shape (2, n_settings)."""
    tu = td.user[test]
    ts = td.setting[test]
    pos = scores[(tu == u) & (ts == x)]
    out = np.empty((2, len(td.settings)))
    for y in range(len(td.settings)):
        out[0, y] = eer(pos, scores[(tu != u) & (ts == y)])
        out[1, y] = eer(pos, scores[(tu == u) & (ts == y)])
    return out


def _fit_family(td, pool_rows, labels_for, keys, test, mode, cfg: EvalConfig, trial, family, x_of):
    """Grid-search, train and score every classifier sharing one training pool."""
    train_cfg = cfg.train
    P = td.X[pool_rows]
    scaler = fit_scaler(P)
    Ps = scaler.transform(P)
    T = td.X[test]
    Ts = fit_scaler(T).transform(T) if mode == NormalizationMode.FAITHFUL else scaler.transform(T)
    D = squared_distances(Ps)
    Dt = squared_distances(Ts, Ps)
    idx = np.arange(len(pool_rows), dtype=np.int64)

    chosen = {}
    for key in keys:
        y = labels_for(key)
        rng = np.random.default_rng(
            derive_seed(cfg.seed, 0x6A1D, _TYPE_CODE[td.stroke_type], trial, _FAMILY_CODE[family], key[0], key[1])
        )
        chosen[key] = grid_search(Ps, y, train_cfg, rng, sq_dist=D)

    results = {}
    meta = {}
    for gamma in sorted({g for _, g in chosen.values()}):
        K = np.exp(-gamma * D)
        Kt = np.exp(-gamma * Dt)
        for key in keys:
            C, g = chosen[key]
            if g != gamma:
                continue
            y = labels_for(key)
            model = train_pooled(
                Ps, K, idx, y, C, gamma, tol=train_cfg.tol, max_iter=train_cfg.max_iter, weight_cap=train_cfg.weight_cap
            )
            scores = decision_from_kernel(model, Kt, idx)
            results[key] = _cell_eers(scores, td, test, key[0], x_of(key))
            meta[key] = (C, gamma, model.iterations, len(model.dual_coef))
        del K, Kt
    return results, meta


def _run_job(args):
    td, trial, cfg = args
    t0 = time.perf_counter()
    train_rows = np.flatnonzero(td.fold != trial)
    test = td.fold == trial
    n_users, n_set = len(td.users), len(td.settings)
    uidx = {u: i for i, u in enumerate(td.users)}
    out = {f: np.full((n_users, n_set, 2, n_set), np.nan) for f in FAMILIES}
    hyper = []

    # C-ATCA: one pool for all users and settings
    pool_user = td.user[train_rows]
    pool_set = td.setting[train_rows]
    keys = [(u, x) for u in td.users for x in range(n_set)]
    res, meta = _fit_family(
        td, train_rows,
        lambda k: np.where((pool_user == k[0]) & (pool_set == k[1]), 1.0, -1.0),
        keys, test, cfg.normalization, cfg, trial, "ATCA", lambda k: k[1],
    )
    for (u, x), v in res.items():
        out["ATCA"][uidx[u], x] = v
        hyper.append(("ATCA", u, x) + meta[(u, x)])

    # C-Baseline-x: one pool per setting
    for x in range(n_set):
        rows = train_rows[td.setting[train_rows] == x]
        pu = td.user[rows]
        keys = [(u, x) for u in td.users]
        res, meta = _fit_family(
            td, rows,
            lambda k, pu=pu: np.where(pu == k[0], 1.0, -1.0),
            keys, test, cfg.normalization, cfg, trial, "Baseline", lambda k: k[1],
        )
        for (u, _), v in res.items():
            out["Baseline"][uidx[u], x] = v
            hyper.append(("Baseline", u, x) + meta[(u, x)])
    log.info("type %s trial %d done in %.1fs", td.stroke_type.name, trial, time.perf_counter() - t0)
    return out, hyper


@dataclass
class TypeMatrix:
    """Attack-matrix EERs for one stroke type.

    per_trial[family] has shape (trials, users, x, kind, y): classifier setting x,
    attack kind (0 = RA, 1 = TA), attack source setting y.
    """

    stroke_type: StrokeType
    settings: list
    users: list
    per_trial: dict
    hyper: list = field(default_factory=list)

    @property
    def per_user(self) -> dict:
        return {f: a.mean(axis=0) for f, a in self.per_trial.items()}

    def mean(self, family) -> np.ndarray:
        return self.per_user[family].mean(axis=0)

    def std(self, family) -> np.ndarray:
        return self.per_user[family].std(axis=0)

    def labels(self):
        return [SETTING_LETTERS[i] for i in range(len(self.settings))]


@dataclass
class EerReport:
    matrices: dict  # StrokeType -> TypeMatrix
    metadata: dict
    systems: dict = field(default_factory=dict)  # StrokeType -> {system: {"RA": (mean, std), "TA": ...}}
    session: dict = field(default_factory=dict)


def classifier_attack_matrix(corpus: StrokeCorpus, folds: FoldAssignment, config: EvalConfig, workers: int = 1) -> EerReport:
    datas = {t: type_data(corpus, folds, t) for t in config.stroke_types}
    for td in datas.values():
        if len(td.users) < 2:
            raise IncompleteMatrix("need at least 2 users")
    jobs = [(datas[t], i, config) for t in config.stroke_types for i in range(folds.k)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    matrices = {}
    for n, t in enumerate(config.stroke_types):
        chunk = results[n * folds.k : (n + 1) * folds.k]
        per_trial = {f: np.stack([r[0][f] for r in chunk]) for f in FAMILIES}
        hyper = [(trial,) + h for trial, r in enumerate(chunk) for h in r[1]]
        td = datas[t]
        matrices[t] = TypeMatrix(t, td.settings, td.users, per_trial, hyper)
    meta = {
        "seed": config.seed,
        "config_hash": config_hash(config.to_dict()),
        "normalization": config.normalization.value,
        "k_folds": folds.k,
        "score_convention": "higher score = legitimate; accept when score >= threshold",
    }
    return EerReport(matrices, meta)


# -- system level -------------------------------------------------------------

# How each authentication system aggregates the classifier matrix.
SYSTEM_STRATEGIES = {
    "S-Baseline-x": {"family": "Baseline", "RA": "max over source settings of RA-xy", "TA": "TA-xx"},
    "S-Baseline-improved": {"family": "Baseline", "RA": "mean of all RA-xy", "TA": "mean of all TA-xy"},
    "S-ATCA": {"family": "ATCA", "RA": "mean of all RA-xy", "TA": "mean of all TA-xy"},
}


def _summ(per_user_values):
    v = np.asarray(per_user_values, dtype=float)
    return (float(v.mean()), float(v.std()))


def system_eval(report: EerReport, strategies=SYSTEM_STRATEGIES, rates=DEFAULT_RATES) -> EerReport:
    """Fill `report.systems` with per-system RA/TA mean and std EER over users."""
    for t, m in report.matrices.items():
        pu = m.per_user
        for f in FAMILIES:
            if f not in pu or np.isnan(pu[f]).any():
                raise IncompleteMatrix(f"matrix for {t.name}/{f} is incomplete")
        rows = {}
        base = pu[strategies["S-Baseline-x"]["family"]]
        for x, letter in enumerate(m.labels()):
            rows[f"S-Baseline-{letter}"] = {
                "RA": _summ(base[:, x, 0, :].max(axis=1)),
                "TA": _summ(base[:, x, 1, x]),
            }
        for name in ("S-Baseline-improved", "S-ATCA"):
            fam = pu[strategies[name]["family"]]
            rows[name] = {
                "RA": _summ(fam[:, :, 0, :].mean(axis=(1, 2))),
                "TA": _summ(fam[:, :, 1, :].mean(axis=(1, 2))),
            }
        report.systems[t] = rows
        r = rates.get(t)
        if r is not None and len(r) == len(m.settings):
            ts = float(np.mean([1.0 / v for v in r]))
            report.session[t] = {
                "T_s": ts,
                "expected_reauth_seconds": {
                    name: (ts / row["RA"][0] if row["RA"][0] > 0 else None) for name, row in rows.items()
                },
            }
    return report


def submatrix_ta(per_user_family: np.ndarray, subset) -> np.ndarray:
    """Per-user mean TA EER over the classifier/attack settings in `subset`."""
    sub = list(subset)
    ta = per_user_family[:, :, 1, :][:, sub][:, :, sub]
    return ta.mean(axis=(1, 2))


def settings_count_experiment(report: EerReport, scenario: str) -> dict:
    """S-ATCA targeted-attack EER as settings are added, for one scenario in SCENARIOS.

    Scenario I adds settings in order a, b, c...; Scenario II starts from the two extremes.

    Returns {stroke_type: [(n, mean EER, std EER), ...]}.
    """
    subsets = SCENARIOS[scenario]
    out = {}
    for t, m in report.matrices.items():
        if len(m.settings) != 5:
            raise IncompleteMatrix("settings-count scenarios need exactly five settings")
        fam = m.per_user["ATCA"]
        out[t] = [(len(s),) + _summ(submatrix_ta(fam, s)) for s in subsets]
    return out


# -- learning curve -------------------------------------------------------------


def learning_curve(
    corpus: StrokeCorpus,
    folds: FoldAssignment,
    config: EvalConfig,
    lc: LearningCurveConfig | None = None,
    rates=DEFAULT_RATES,
) -> dict:
    """EER of one classifier as its positive training set grows with collection time.

    Test and attack sets and the negative training set stay fixed; positive
    training strokes are taken as prefixes of one random order, so training sets
    are nested. Hyper-parameters are selected once on the full training set.
    """
    lc = lc or config.learning_curve
    td = type_data(corpus, folds, lc.stroke_type)
    x = lc.setting_index
    rate = rates[lc.stroke_type][x]
    train_rows = np.flatnonzero(td.fold != lc.trial)
    test = td.fold == lc.trial
    if lc.family == "ATCA":
        pool = train_rows
    else:
        pool = train_rows[td.setting[train_rows] == x]
    is_pos = (td.user[pool] == lc.user) & (td.setting[pool] == x)
    pos_rows = pool[is_pos]
    neg_rows = pool[~is_pos]
    rng = np.random.default_rng(derive_seed(config.seed, 0x1EA2, lc.user, x, lc.trial))
    pos_rows = pos_rows[rng.permutation(pos_rows.size)]

    full_y = np.where(is_pos, 1.0, -1.0)
    Pfull = fit_scaler(td.X[pool]).transform(td.X[pool])
    C, gamma = grid_search(Pfull, full_y, config.train, rng)
    T = td.X[test]
    test_scaler = fit_scaler(T)

    curve = []
    for minutes in lc.budgets_minutes:
        count = min(pos_rows.size, int(math.floor(rate * 60.0 * minutes + 1e-9)))
        if count < 1:
            continue
        rows = np.concatenate([pos_rows[:count], neg_rows])
        y = np.concatenate([np.ones(count), -np.ones(neg_rows.size)])
        scaler = fit_scaler(td.X[rows])
        P = scaler.transform(td.X[rows])
        Ts = apply_scaler(test_scaler if config.normalization == NormalizationMode.FAITHFUL else scaler, T)
        t0 = time.perf_counter()
        K = kernel_matrix(P, gamma=gamma)
        model = train_pooled(P, K, np.arange(len(rows)), y, C, gamma, tol=config.train.tol,
                             max_iter=config.train.max_iter, weight_cap=config.train.weight_cap)
        train_seconds = time.perf_counter() - t0
        Kt = np.exp(-gamma * squared_distances(Ts, P))
        scores = decision_from_kernel(model, Kt, np.arange(len(rows)))
        e = _cell_eers(scores, td, test, lc.user, x)
        curve.append({"minutes": float(minutes), "positives": int(count), "train_seconds": train_seconds, "eer": e})
    labels = [SETTING_LETTERS[i] for i in range(len(td.settings))]
    return {
        "classifier": f"C-{lc.family}-{labels[x]}",
        "stroke_type": lc.stroke_type,
        "user": lc.user,
        "trial": lc.trial,
        "C": C,
        "gamma": gamma,
        "rate_per_second": rate,
        "labels": labels,
        "points": curve,
    }


# -- persistent attack ------------------------------------------------------------


def persistent_attack_sim(n_settings: int, trials: int, rng: np.random.Generator) -> dict:
    """Replay with one fixed guessed setting until the system's random draw matches it."""
    if n_settings < 1 or trials < 1:
        raise ValueError("need n_settings >= 1 and trials >= 1")
    guesses = rng.integers(n_settings, size=trials)
    tries = np.zeros(trials, dtype=np.int64)
    pending = np.arange(trials)
    done_before = 0
    block = max(8, 4 * n_settings)
    while pending.size:
        draws = rng.integers(n_settings, size=(pending.size, block))
        hit = draws == guesses[pending, None]
        found = hit.any(axis=1)
        tries[pending[found]] = done_before + hit[found].argmax(axis=1) + 1
        pending = pending[~found]
        done_before += block
    values, counts = np.unique(tries, return_counts=True)
    return {
        "mean_tries": float(tries.mean()),
        "histogram": {int(v): int(c) for v, c in zip(values, counts)},
        "tries": tries,
    }
