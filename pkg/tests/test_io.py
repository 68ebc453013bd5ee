import json

import numpy as np
import pytest

from atca.core import Axis, ScreenSetting, StrokeType
from atca.errors import ParseError, SchemaVersionMismatch
from atca.features import extract_features
from atca.io import (
    read_bank,
    read_corpus,
    read_corpus_header,
    read_series,
    write_bank,
    write_corpus,
    write_features,
    write_json,
    write_series,
)
from atca.pipeline import RegistrationConfig, register_user
from atca.svm import TrainConfig
from atca.synth import PopulationConfig, generate_population

FIVE = [ScreenSetting(Axis.X, f) for f in (0.8, 0.9, 1.0, 1.1, 1.2)]


@pytest.fixture(scope="module")
def corpus():
    return generate_population(PopulationConfig(n_users=2, strokes_per_cell=10, seed=6))


def test_corpus_round_trip_is_exact(corpus, tmp_path):
    p = tmp_path / "c.csv"
    write_corpus(corpus, p, config_hash="abc", seed=6)
    back = read_corpus(p)
    assert back == corpus
    assert read_corpus_header(p) == {"config_hash": "abc", "seed": "6"}
    q = tmp_path / "c2.csv"
    write_corpus(back, q, config_hash="abc", seed=6)
    assert p.read_bytes() == q.read_bytes()


def test_parse_error_reports_line(corpus, tmp_path):
    p = tmp_path / "c.csv"
    write_corpus(corpus, p)
    lines = p.read_text().splitlines()
    lines[9] = lines[9].replace(",", ";", 1)
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as e:
        read_corpus(p)
    assert e.value.line == 10


def test_bad_numbers_and_order(corpus, tmp_path):
    p = tmp_path / "c.csv"
    write_corpus(corpus, p)
    lines = p.read_text().splitlines()
    bad = lines[:]
    parts = bad[6].split(",")
    parts[6] = "abc"
    bad[6] = ",".join(parts)
    p.write_text("\n".join(bad) + "\n")
    with pytest.raises(ParseError) as e:
        read_corpus(p)
    assert e.value.line == 7
    swapped = lines[:5] + [lines[6], lines[5]] + lines[7:]
    p.write_text("\n".join(swapped) + "\n")
    with pytest.raises(ParseError):
        read_corpus(p)


def test_empty_file_and_version_mismatch(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(ParseError):
        read_corpus(p)
    p.write_text("# atca-corpus v2\n# config_hash=\n# seed=0\n")
    with pytest.raises(SchemaVersionMismatch):
        read_corpus(p)


def test_feature_table(corpus, tmp_path):
    p = tmp_path / "f.csv"
    write_features(corpus, p, config_hash="h", seed=1)
    lines = p.read_text().splitlines()
    assert lines[0] == "# atca-features v1" and len(lines) == 4 + len(corpus)
    first = next(iter(corpus))
    vals = np.array([float(v) for v in lines[4].split(",")[4:]])
    np.testing.assert_array_equal(vals, extract_features(first))


@pytest.fixture(scope="module")
def bank(corpus):
    cfg = RegistrationConfig(train=TrainConfig(C_grid=(1.0, 4.0), gamma_grid=(0.25,)))
    return register_user(corpus, 1, cfg, seed=2, settings=FIVE)


def test_bank_round_trip_decisions(corpus, bank, tmp_path):
    p = tmp_path / "b.json"
    write_bank(bank, p, config_hash="x")
    back = read_bank(p)
    assert back.settings == bank.settings and back.user == 1 and len(back) == len(bank)
    for key, e in bank.entries.items():
        f = back.entries[key]
        assert f.threshold == e.threshold
        s, t = key
        for stroke in corpus.cell(0, corpus.resolve(s, t), t):
            x = extract_features(stroke)
            assert abs(f.score(x) - e.score(x)) <= 1e-12


def test_bank_missing_entry_and_version(bank, tmp_path):
    p = tmp_path / "b.json"
    write_bank(bank, p)
    d = json.loads(p.read_text())
    d["classifiers"] = d["classifiers"][1:]
    p.write_text(json.dumps(d))
    with pytest.raises(ParseError, match="missing classifier"):
        read_bank(p)
    d["version"] = 9
    p.write_text(json.dumps(d))
    with pytest.raises(SchemaVersionMismatch):
        read_bank(p)
    p.write_text("{not json")
    with pytest.raises(ParseError):
        read_bank(p)


def test_series_and_json(tmp_path):
    write_series(tmp_path / "s.csv", "n", "eer", [(2, 0.25), (3, 0.125)])
    assert read_series(tmp_path / "s.csv") == [(2.0, 0.25), (3.0, 0.125)]
    write_json(tmp_path / "j.json", {"b": np.float64(np.nan), "a": np.int64(3), StrokeType.VERTICAL: [np.float32(0.5)]})
    assert json.loads((tmp_path / "j.json").read_text()) == {"a": 3, "b": None, "V": [0.5]}
