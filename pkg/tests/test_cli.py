import json

import pytest

from atca.cli import main
from atca.config import ExperimentConfig
from atca.evaluation import EvalConfig, LearningCurveConfig
from atca.pipeline import RegistrationConfig
from atca.svm import TrainConfig
from atca.synth import PopulationConfig

TINY = TrainConfig(C_grid=(1.0,), gamma_grid=(0.25,))


@pytest.fixture()
def cfg_path(tmp_path):
    cfg = ExperimentConfig(
        seed=3,
        population=PopulationConfig(n_users=3, strokes_per_cell=10),
        registration=RegistrationConfig(train=TINY),
        evaluation=EvalConfig(train=TINY, learning_curve=LearningCurveConfig(budgets_minutes=(0.2, 0.4))),
        persistent_trials=2000,
    )
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    return p


def test_synth_extract_train_validate(cfg_path, tmp_path, capsys):
    c = tmp_path / "corpus.csv"
    assert main(["synth", "--config", str(cfg_path), "--out", str(c)]) == 0
    assert main(["extract", "--corpus", str(c), "--out", str(tmp_path / "f.csv")]) == 0
    assert main(["train", "--config", str(cfg_path), "--corpus", str(c), "--user", "0",
                 "--fixed-settings", "--out", str(tmp_path / "b.json")]) == 0
    assert len(json.loads((tmp_path / "b.json").read_text())["classifiers"]) == 10
    # three users are too few to reach the default sensitivity floor reliably
    assert main(["validate", "--corpus", str(c), "--min-sensitivity", "0"]) == 0
    assert main(["validate", "--corpus", str(c), "--min-sensitivity", "1.01"]) == 1


def test_eval_and_report(cfg_path, tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["eval", "--config", str(cfg_path), "--out", str(out), "--experiment", "all"]) == 0
    for name in ("summary.json", "config.json", "systems.csv", "matrix_H.csv", "per_user_V.csv",
                 "series/settings_count_II_H.csv", "series/persistent_attack_histogram.csv"):
        assert (out / name).exists(), name
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    assert "S-ATCA" in capsys.readouterr().out


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["bogus"]) == 2
    assert main(["synth"]) == 2
    assert main(["eval", "--experiment", "nope", "--out", "x"]) == 2


def test_runtime_errors_exit_1(tmp_path):
    assert main(["report", str(tmp_path)]) == 1
    assert main(["extract", "--corpus", str(tmp_path / "none.csv"), "--out", str(tmp_path / "f.csv")]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("hello\n")
    assert main(["validate", "--corpus", str(bad)]) == 1
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"population": None}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 1
