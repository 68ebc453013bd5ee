import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atca.errors import EmptyScores
from atca.metrics import auc, compute_eer, compute_roc, eer, eer_threshold

from oracles import eer_bruteforce

scores = st.lists(st.integers(-5, 5).map(float), min_size=1, max_size=15)


def test_separable_roc_point():
    roc = compute_roc([2, 3], [0, 1])
    k = list(roc.thresholds).index(2.0)
    assert roc.far[k] == 0.0 and roc.frr[k] == 0.0


def test_perfectly_separable_eer_is_zero():
    assert eer([2, 3, 4], [-1, 0, 1]) == 0.0


def test_identical_multisets_give_half():
    assert eer([1, 2, 2, 5], [2, 5, 1, 2]) == 0.5


def test_small_interleaved_case_matches_oracle():
    assert eer([1, 3], [0, 2]) == pytest.approx(eer_bruteforce([1, 3], [0, 2]), abs=1e-12)


def test_sentinels_cover_both_endpoints():
    roc = compute_roc([0.3, 0.7], [0.1, 0.5, 0.9])
    assert roc.thresholds[0] == -np.inf and roc.thresholds[-1] == np.inf
    assert (roc.far[0], roc.frr[0]) == (1.0, 0.0)
    assert (roc.far[-1], roc.frr[-1]) == (0.0, 1.0)


def test_empty_scores_rejected():
    with pytest.raises(EmptyScores):
        compute_roc([], [1.0])
    with pytest.raises(EmptyScores):
        compute_roc([1.0], [])


def test_threshold_convention_accepts_equal_score():
    # a legitimate score equal to the threshold is not a false reject
    roc = compute_roc([1.0], [0.0])
    k = list(roc.thresholds).index(1.0)
    assert roc.frr[k] == 0.0


def test_eer_threshold_is_finite_and_balanced():
    rng = np.random.default_rng(3)
    pos, neg = rng.normal(1, 1, 200), rng.normal(-1, 1, 200)
    t = eer_threshold(pos, neg)
    far = np.mean(neg >= t)
    frr = np.mean(pos < t)
    assert np.isfinite(t) and abs(far - frr) < 0.02


def test_auc_matches_pair_count():
    pos, neg = [0.1, 0.4, 0.4], [0.4, 0.2]
    pairs = [(p > a) + 0.5 * (p == a) for p in pos for a in neg]
    assert auc(pos, neg) == pytest.approx(np.mean(pairs))


@given(scores, scores)
def test_far_frr_monotone_and_complementary_for_same_set(pos, neg):
    roc = compute_roc(pos, neg)
    assert np.all(np.diff(roc.far) <= 0) and np.all(np.diff(roc.frr) >= 0)
    same = compute_roc(pos, pos)
    assert np.allclose(same.far + same.frr, 1.0)


@settings(max_examples=200)
@given(scores, scores)
def test_eer_agrees_with_sweep_oracle(pos, neg):
    assert abs(eer(pos, neg) - eer_bruteforce(pos, neg)) < 1e-9


@given(scores)
def test_same_distribution_eer_is_exactly_half(pos):
    assert compute_eer(compute_roc(pos, list(reversed(pos)))) == 0.5
