"""File formats: stroke corpus, feature tables, classifier banks and reports.

Every file carries a schema tag, the config hash and the seed that produced it.
Floats are written with `repr`, which round-trips float64 exactly.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .core import ScreenSetting, StrokeCorpus, StrokeType, TouchPoint, validate_stroke
from .errors import AtcaError, ParseError, SchemaVersionMismatch
from .features import FEATURE_NAMES, Scaler, extract_features
from .pipeline import BankEntry, ClassifierBank
from .svm import SvmModel

CORPUS_SCHEMA = "atca-corpus"
CORPUS_VERSION = 1
BANK_SCHEMA = "atca-bank"
BANK_VERSION = 1
REPORT_SCHEMA = "atca-report"
REPORT_VERSION = 1
CORPUS_COLUMNS = ("user_id", "setting_axis", "setting_factor", "stroke_id", "point_index", "t_ms", "x", "y", "pressure", "area")


def _num(v) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


# -- corpus ---------------------------------------------------------------------


def write_corpus(corpus: StrokeCorpus, path, *, config_hash: str = "", seed: int = 0) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {CORPUS_SCHEMA} v{CORPUS_VERSION}\n")
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(f"# seed={seed}\n")
        fh.write(",".join(CORPUS_COLUMNS) + "\n")
        for s in corpus:
            head = f"{s.user},{s.setting.axis.value},{s.setting.factor!r},{s.stroke_id}"
            for i, p in enumerate(s.points):
                fh.write(f"{head},{i},{_num(p.t)},{_num(p.x)},{_num(p.y)},{_num(p.p)},{_num(p.a)}\n")


def read_corpus_header(path) -> dict:
    with open(path) as fh:
        lines = [fh.readline() for _ in range(3)]
    return _parse_header(lines, CORPUS_SCHEMA, CORPUS_VERSION)


def _parse_header(lines, schema, version) -> dict:
    first = lines[0].strip() if lines else ""
    if not first.startswith(f"# {schema} v"):
        raise ParseError(f"missing '# {schema} v{version}' header", 1)
    try:
        found = int(first.rsplit("v", 1)[1])
    except ValueError:
        raise ParseError("unreadable schema version", 1) from None
    if found != version:
        raise SchemaVersionMismatch(f"{schema} version {found} is not supported (expected {version})")
    meta = {}
    for n, line in enumerate(lines[1:3], start=2):
        line = line.strip()
        if not line.startswith("# ") or "=" not in line:
            raise ParseError("expected '# key=value' metadata line", n)
        key, value = line[2:].split("=", 1)
        meta[key] = value
    if "config_hash" not in meta or "seed" not in meta:
        raise ParseError("header must carry config_hash and seed", 3)
    return meta


def read_corpus(path) -> StrokeCorpus:
    """Parse a corpus file; strokes are re-validated as they are rebuilt."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    _parse_header(lines[:3], CORPUS_SCHEMA, CORPUS_VERSION)
    if len(lines) < 4 or tuple(lines[3].split(",")) != CORPUS_COLUMNS:
        raise ParseError("missing or wrong column header", 4)
    strokes = []
    current = None
    points: list = []
    start_line = 5

    def flush():
        if current is None:
            return
        user, setting, sid = current
        try:
            strokes.append(validate_stroke(points, user, setting, sid))
        except AtcaError as e:
            raise ParseError(f"stroke {sid}: {e}", start_line) from None

    for n, line in enumerate(lines[4:], start=5):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(CORPUS_COLUMNS):
            raise ParseError(f"expected {len(CORPUS_COLUMNS)} fields, got {len(parts)}", n)
        try:
            user = int(parts[0])
            setting = ScreenSetting.parse(parts[1] + parts[2])
            sid = parts[3]
            index = int(parts[4])
            t, x, y, p, a = (float(v) for v in parts[5:])
            point = TouchPoint(t, x, y, p, a)
        except (ValueError, AtcaError) as e:
            raise ParseError(str(e), n) from None
        if not sid:
            raise ParseError("empty stroke id", n)
        key = (user, setting, sid)
        if key != current:
            flush()
            if index != 0:
                raise ParseError(f"stroke {sid} does not start at point 0", n)
            current, points, start_line = key, [], n
        elif index != len(points):
            raise ParseError(f"point index {index} out of order (expected {len(points)})", n)
        points.append(point)
    flush()
    return StrokeCorpus(strokes)


# -- features -------------------------------------------------------------------


def write_features(corpus: StrokeCorpus, path, *, config_hash: str = "", seed: int = 0) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# atca-features v1\n# config_hash={config_hash}\n# seed={seed}\n")
        fh.write(",".join(("stroke_id", "user_id", "setting", "stroke_type") + FEATURE_NAMES) + "\n")
        for s in corpus:
            vals = ",".join(repr(float(v)) for v in extract_features(s))
            fh.write(f"{s.stroke_id},{s.user},{s.setting.label},{s.stroke_type.value},{vals}\n")


# -- classifier bank ---------------------------------------------------------------


def _model_to_dict(m: SvmModel) -> dict:
    return {
        "support_vectors": m.support_vectors.tolist(),
        "dual_coef": m.dual_coef.tolist(),
        "support_indices": m.support_indices.tolist(),
        "bias": m.bias,
        "gamma": m.gamma,
        "C": m.C,
        "weights": list(m.weights),
        "iterations": m.iterations,
        "kkt_residual": m.kkt_residual,
    }


def _model_from_dict(d) -> SvmModel:
    sv = np.asarray(d["support_vectors"], dtype=float)
    if sv.ndim != 2:
        sv = sv.reshape(0, len(FEATURE_NAMES))
    return SvmModel(
        support_vectors=sv,
        dual_coef=np.asarray(d["dual_coef"], dtype=float),
        bias=float(d["bias"]),
        gamma=float(d["gamma"]),
        C=float(d["C"]),
        weights=tuple(float(w) for w in d["weights"]),
        iterations=int(d["iterations"]),
        kkt_residual=float(d["kkt_residual"]),
        support_indices=np.asarray(d["support_indices"], dtype=np.int64),
    )


def bank_to_dict(bank: ClassifierBank, *, config_hash: str = "") -> dict:
    return {
        "schema": BANK_SCHEMA,
        "version": BANK_VERSION,
        "config_hash": config_hash,
        "seed": bank.seed,
        "user": bank.user,
        "mode": bank.mode,
        "settings": [s.label for s in bank.settings],
        "classifiers": [
            {
                "setting": s.label,
                "stroke_type": t.value,
                "threshold": e.threshold,
                "scaler": e.scaler.to_dict(),
                "model": _model_to_dict(e.model),
            }
            for (s, t), e in bank.entries.items()
        ],
    }


def write_bank(bank: ClassifierBank, path, *, config_hash: str = "") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(bank_to_dict(bank, config_hash=config_hash), indent=1) + "\n")


def read_bank(path) -> ClassifierBank:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno) from None
    if not isinstance(d, dict) or d.get("schema") != BANK_SCHEMA:
        raise ParseError("not a classifier bank document", 1)
    if d.get("version") != BANK_VERSION:
        raise SchemaVersionMismatch(f"bank version {d.get('version')} is not supported (expected {BANK_VERSION})")
    try:
        settings = tuple(ScreenSetting.parse(s) for s in d["settings"])
        entries = {}
        for c in d["classifiers"]:
            key = (ScreenSetting.parse(c["setting"]), StrokeType(c["stroke_type"]))
            entries[key] = BankEntry(_model_from_dict(c["model"]), Scaler.from_dict(c["scaler"]), float(c["threshold"]))
        user, mode, seed = int(d["user"]), d["mode"], int(d["seed"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed bank: {e}", 1) from None
    expected = {(s, t) for s in settings for t in StrokeType}
    missing = expected - set(entries)
    if missing:
        s, t = sorted(missing, key=lambda k: (k[0], k[1].value))[0]
        raise ParseError(f"missing classifier for {s.label}/{t.value}", 1)
    ordered = {k: entries[k] for k in sorted(entries, key=lambda k: (k[0], k[1].value))}
    return ClassifierBank(user, settings, ordered, mode, seed)


# -- reports --------------------------------------------------------------------------


def _clean(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k.value if isinstance(k, StrokeType) else k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, StrokeType):
        return obj.value
    return obj


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n")


def write_table(path, header, rows, *, meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if meta:
            for k in sorted(meta):
                fh.write(f"# {k}={meta[k]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_series(path, x_name, y_name, points) -> None:
    """Two-column plot-ready series."""
    write_table(path, (x_name, y_name), points)


def read_series(path) -> list:
    with open(path) as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    return [(float(a), float(b)) for a, b in rows[1:]]
