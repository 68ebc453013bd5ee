"""End-to-end experiment runner: corpus -> evaluations -> report files."""
from __future__ import annotations

import logging
import time
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig
from .evaluation import (
    FAMILIES,
    KINDS,
    SCENARIOS,
    EerReport,
    classifier_attack_matrix,
    kfold_split,
    learning_curve,
    persistent_attack_sim,
    settings_count_experiment,
    system_eval,
)
from .synth import derive_seed, generate_population

log = logging.getLogger(__name__)

_MATRIX_NEEDS = {"matrix", "system", "settings-count"}


def load_or_generate_corpus(config: ExperimentConfig, workers: int = 1):
    if config.corpus_path is not None:
        return io.read_corpus(config.corpus_path)
    return generate_population(config.population, workers=workers)


def run_experiment(config: ExperimentConfig, corpus=None, out_dir=None, workers: int = 1) -> dict:
    """Run the selected experiments and write every report file under `out_dir`.

    Returns the in-memory results (including wall-clock timings, which are
    never written to disk so that outputs stay byte-reproducible).
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config.hash()
    timings: dict = {}
    t0 = time.perf_counter()
    if corpus is None:
        corpus = load_or_generate_corpus(config, workers)
    timings["corpus"] = time.perf_counter() - t0
    ev = config.evaluation
    folds = kfold_split(corpus, ev.k_folds, ev.seed)
    results: dict = {"config_hash": chash, "seed": config.seed, "timings": timings}
    summary: dict = {
        "schema": io.REPORT_SCHEMA,
        "version": io.REPORT_VERSION,
        "config_hash": chash,
        "seed": config.seed,
        "normalization": ev.normalization.value,
        "score_convention": "higher score = legitimate; accept when score >= threshold",
        "experiments": list(config.experiments),
    }
    meta = {"config_hash": chash, "seed": config.seed, "schema": f"{io.REPORT_SCHEMA} v{io.REPORT_VERSION}"}
    io.write_json(out / "config.json", config.to_dict())

    if _MATRIX_NEEDS & set(config.experiments):
        t0 = time.perf_counter()
        report = classifier_attack_matrix(corpus, folds, ev, workers=workers)
        timings["matrix"] = time.perf_counter() - t0
        report.metadata["config_hash"] = chash
        system_eval(report)
        results["report"] = report
        _write_matrix(out, report, meta)
        summary["matrix"] = _matrix_summary(report)
        if "system" in config.experiments:
            summary["systems"] = report.systems
            summary["session"] = report.session
            rows = [
                (t.value, name, kind, row[kind][0], row[kind][1])
                for t, table in report.systems.items()
                for name, row in table.items()
                for kind in KINDS
            ]
            io.write_table(out / "systems.csv", ("stroke_type", "system", "attack", "mean_eer", "std_eer"), rows, meta=meta)
        if "settings-count" in config.experiments:
            sc = {}
            for scenario in SCENARIOS:
                curves = settings_count_experiment(report, scenario)
                sc[scenario] = curves
                for t, pts in curves.items():
                    io.write_series(out / "series" / f"settings_count_{scenario}_{t.value}.csv", "n_settings", "ta_eer",
                                    [(n, m) for n, m, _ in pts])
            results["settings_count"] = sc
            summary["settings_count"] = {
                s: {t.value: [{"n": n, "mean": m, "std": sd} for n, m, sd in pts] for t, pts in c.items()}
                for s, c in sc.items()
            }

    if "learning-curve" in config.experiments:
        t0 = time.perf_counter()
        lc = learning_curve(corpus, folds, ev)
        timings["learning_curve"] = time.perf_counter() - t0
        results["learning_curve"] = lc
        labels = lc["labels"]
        x = ev.learning_curve.setting_index
        series = {}
        for k, kind in enumerate(KINDS):
            for y, lab in enumerate(labels):
                if kind == "TA" and y == x:
                    continue
                name = f"{kind}-{labels[x]}{lab}"
                series[name] = [(p["minutes"], p["eer"][k, y]) for p in lc["points"]]
                io.write_series(out / "series" / f"learning_curve_{name}.csv", "minutes", "eer", series[name])
        summary["learning_curve"] = {
            "classifier": lc["classifier"],
            "stroke_type": lc["stroke_type"],
            "user": lc["user"],
            "trial": lc["trial"],
            "C": lc["C"],
            "gamma": lc["gamma"],
            "rate_per_second": lc["rate_per_second"],
            "positives": [p["positives"] for p in lc["points"]],
            "series": {k: [{"minutes": m, "eer": e} for m, e in v] for k, v in series.items()},
        }

    if "persistent-attack" in config.experiments:
        rng = np.random.default_rng(derive_seed(config.seed, 0x9E25))
        t0 = time.perf_counter()
        pa = persistent_attack_sim(config.persistent_settings, config.persistent_trials, rng)
        timings["persistent_attack"] = time.perf_counter() - t0
        results["persistent_attack"] = pa
        summary["persistent_attack"] = {
            "n_settings": config.persistent_settings,
            "trials": config.persistent_trials,
            "mean_tries": pa["mean_tries"],
            "histogram": {str(k): v for k, v in pa["histogram"].items()},
        }
        io.write_series(out / "series" / "persistent_attack_histogram.csv", "tries", "count", sorted(pa["histogram"].items()))

    io.write_json(out / "summary.json", summary)
    results["summary"] = summary
    return results


def _names(report: EerReport, t, family, x, kind, y):
    lab = report.matrices[t].labels()
    return f"C-{family}-{lab[x]}", f"{kind}-{lab[x]}{lab[y]}"


def _write_matrix(out: Path, report: EerReport, meta: dict) -> None:
    for t, m in report.matrices.items():
        n = len(m.settings)
        rows, per_user, hyper = [], [], []
        for f in FAMILIES:
            mean, std, pt = m.mean(f), m.std(f), m.per_trial[f]
            for x in range(n):
                for k, kind in enumerate(KINDS):
                    for y in range(n):
                        cls, att = _names(report, t, f, x, kind, y)
                        rows.append((t.value, f, cls, att, mean[x, k, y], std[x, k, y]))
                        for trial in range(pt.shape[0]):
                            for ui, u in enumerate(m.users):
                                per_user.append((trial, u, f, cls, att, pt[trial, ui, x, k, y]))
        for trial, f, u, x, C, gamma, iters, n_sv in m.hyper:
            hyper.append((trial, f, u, m.labels()[x], C, gamma, iters, n_sv))
        tmeta = dict(meta, settings=" ".join(s.label for s in m.settings))
        io.write_table(out / f"matrix_{t.value}.csv", ("stroke_type", "family", "classifier", "attack", "mean_eer", "std_eer"), rows, meta=tmeta)
        io.write_table(out / f"per_user_{t.value}.csv", ("trial", "user", "family", "classifier", "attack", "eer"), per_user, meta=tmeta)
        io.write_table(out / f"hyperparameters_{t.value}.csv", ("trial", "family", "user", "setting", "C", "gamma", "iterations", "support_vectors"),
                       sorted(hyper, key=lambda r: (r[0], r[1], r[2], r[3])), meta=tmeta)


def _matrix_summary(report: EerReport) -> dict:
    out = {}
    for t, m in report.matrices.items():
        cells = {}
        for f in FAMILIES:
            mean, std = m.mean(f), m.std(f)
            for x in range(len(m.settings)):
                for k, kind in enumerate(KINDS):
                    for y in range(len(m.settings)):
                        cls, att = _names(report, t, f, x, kind, y)
                        cells.setdefault(cls, {})[att] = {"mean": mean[x, k, y], "std": std[x, k, y]}
        out[t.value] = {"settings": [s.label for s in m.settings], "classifiers": cells}
    return out
