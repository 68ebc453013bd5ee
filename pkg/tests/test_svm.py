import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atca.errors import ConvergenceError, DimensionMismatch, NonFinite, SingleClass
from atca.svm import (
    SvmModel,
    TrainConfig,
    class_weights,
    decision_from_kernel,
    decision_value,
    decision_values,
    grid_search,
    kernel_matrix,
    rbf_kernel,
    solve_dual,
    squared_distances,
    stratified_folds,
    train,
    train_pooled,
)

from oracles import kkt_residual, oracle_decision, svm_dual_oracle


def tiny_problems(seed, count):
    """Random problems of 3..8 points whose optimum has a free support vector."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(3, 9))
        X = rng.normal(size=(n, 2))
        y = np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0)
        if abs(y.sum()) == n:
            continue
        C = float(rng.choice([0.5, 2.0, 10.0]))
        gamma = float(rng.choice([0.25, 1.0, 4.0]))
        w = class_weights(y)
        alpha, b, n_free = svm_dual_oracle(X.tolist(), y, C * w[0], C * w[1], gamma)
        if n_free:
            out.append((X, y, C, gamma, alpha, b))
    return out


FIXTURES = tiny_problems(11, 25)


def test_rbf_kernel_values():
    assert rbf_kernel([0, 0], [0, 0], 0.5) == 1.0
    assert rbf_kernel([0, 0], [1, 1], 0.5) == pytest.approx(math.exp(-1.0))
    with pytest.raises(DimensionMismatch):
        rbf_kernel([0, 0], [0, 0, 0], 1.0)


def test_squared_distances_match_numpy():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(7, 4)), rng.normal(size=(5, 4))
    ref = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    np.testing.assert_allclose(squared_distances(A, B), ref, rtol=1e-12)
    sym = squared_distances(A)
    np.testing.assert_allclose(sym, ((A[:, None] - A[None]) ** 2).sum(-1), rtol=1e-12, atol=1e-14)
    assert np.all(np.diag(sym) == 0)


def test_class_weights_cap():
    assert class_weights([1, -1, -1, -1]) == (3.0, 1.0)
    assert class_weights([1] + [-1] * 500) == (100.0, 1.0)
    with pytest.raises(SingleClass):
        class_weights([1, 1])


@pytest.mark.parametrize("k", range(len(FIXTURES)))
def test_decisions_match_dual_oracle(k):
    X, y, C, gamma, alpha, b = FIXTURES[k]
    # tight stopping tolerance: the comparison is about the optimum, not the stopping rule
    model = train(X, y, C, gamma, tol=1e-7)
    Z = np.random.default_rng(k).normal(size=(15, 2))
    ref = oracle_decision(X.tolist(), y, alpha, b, gamma, Z.tolist())
    np.testing.assert_allclose(decision_values(model, Z), ref, atol=1e-4)
    full = np.zeros(len(y))
    full[model.support_indices] = model.alphas()
    np.testing.assert_allclose(full, alpha, atol=1e-4)


def test_kkt_residual_on_random_20_point_problems():
    rng = np.random.default_rng(5)
    for _ in range(100):
        X = rng.normal(size=(20, 3))
        y = np.where(X[:, 0] + 0.7 * rng.normal(size=20) > 0, 1.0, -1.0)
        if abs(y.sum()) == 20:
            y[0] = -y[0]
        C = float(rng.choice([0.125, 1.0, 8.0, 128.0]))
        gamma = float(rng.choice([2.0**-5, 0.5, 2.0]))
        m = train(X, y, C, gamma)
        a = m.alphas()
        w = m.weights
        assert m.kkt_residual <= 1e-3 + 1e-12
        # independent recomputation from the returned multipliers
        full = np.zeros(20)
        full[m.support_indices] = np.abs(m.dual_coef)
        assert kkt_residual(X.tolist(), y, full, m.bias, C * w[0], C * w[1], gamma) <= 1e-3 + 1e-9
        assert np.all(a >= 0) and abs(float(np.dot(full, y))) < 1e-9


def test_pooled_training_equals_direct_training():
    rng = np.random.default_rng(2)
    P = rng.normal(size=(40, 3))
    idx = np.arange(5, 35)
    y = np.where(P[idx, 1] > 0, 1.0, -1.0)
    K = kernel_matrix(P, gamma=0.5)
    a = train_pooled(P, K, idx, y, 2.0, 0.5)
    b = train(P[idx], y, 2.0, 0.5)
    assert a == b
    T = rng.normal(size=(6, 3))
    Kt = kernel_matrix(T, P, 0.5)
    np.testing.assert_allclose(decision_from_kernel(a, Kt, idx), decision_values(b, T), rtol=1e-12, atol=1e-12)
    assert decision_value(b, T[0]) == pytest.approx(decision_values(b, T[:1])[0])


def test_warm_start_reaches_same_optimum():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 2))
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    K = kernel_matrix(X, gamma=1.0)
    idx = np.arange(30)
    w = class_weights(y)
    a1, b1, _, _ = solve_dual(K, idx, y, 1.0, w, tol=1e-8)
    a2, b2, _, _ = solve_dual(K, idx, y, 8.0, w, tol=1e-8, alpha0=a1)
    a3, b3, _, _ = solve_dual(K, idx, y, 8.0, w, tol=1e-8)
    np.testing.assert_allclose(K @ (a2 * y) + b2, K @ (a3 * y) + b3, atol=1e-5)


def test_convergence_error_when_iterations_exhausted():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 2))
    y = np.where(rng.uniform(size=30) < 0.5, 1.0, -1.0)
    with pytest.raises(ConvergenceError):
        train(X, y, 100.0, 1.0, max_iter=2)


def test_input_validation():
    with pytest.raises(SingleClass):
        train(np.zeros((3, 2)), [1, 1, 1], 1.0, 1.0)
    with pytest.raises(ValueError):
        train(np.zeros((3, 2)), [1, 0, -1], 1.0, 1.0)
    with pytest.raises(NonFinite):
        train(np.array([[0.0, np.nan], [1, 1]]), [1, -1], 1.0, 1.0)
    m = train(np.array([[0.0, 0.0], [1.0, 1.0]]), [1, -1], 1.0, 1.0)
    with pytest.raises(DimensionMismatch):
        decision_values(m, np.zeros((2, 3)))


def test_separable_problem_scores_sign():
    X = np.array([[-2.0, 0], [-1.5, 0.3], [1.5, 0], [2.0, -0.2]])
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    m = train(X, y, 10.0, 0.5)
    assert np.all(np.sign(decision_values(m, X)) == y)


def test_stratified_folds_partition():
    y = np.array([1.0] * 7 + [-1.0] * 20)
    folds = stratified_folds(y, 3, np.random.default_rng(0))
    allidx = np.sort(np.concatenate(folds))
    np.testing.assert_array_equal(allidx, np.arange(27))
    for f in folds:
        assert 2 <= (y[f] > 0).sum() <= 3


def test_grid_search_deterministic_and_on_grid():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(120, 4))
    y = np.where(X[:, 0] + X[:, 1] ** 2 > 1, 1.0, -1.0)
    cfg = TrainConfig()
    a = grid_search(X, y, cfg, np.random.default_rng(9))
    b = grid_search(X, y, cfg, np.random.default_rng(9))
    assert a == b and a[0] in cfg.C_grid and a[1] in cfg.gamma_grid
    single = TrainConfig(C_grid=(4.0,), gamma_grid=(0.25,))
    assert grid_search(X, y, single, np.random.default_rng(0)) == (4.0, 0.25)
    with pytest.raises(SingleClass):
        grid_search(X, np.array([1.0, 1.0] + [-1.0] * 118), cfg, np.random.default_rng(0))


def test_train_config_round_trip():
    cfg = TrainConfig(C_grid=(1, 2), gamma_grid=(0.5,), grid_max_samples=100)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        TrainConfig(C_grid=())


def test_model_equality_is_structural():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.2, 0.1]])
    y = np.array([1.0, -1.0, 1.0])
    assert train(X, y, 1.0, 1.0) == train(X, y, 1.0, 1.0)
    assert isinstance(train(X, y, 1.0, 1.0), SvmModel)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_dual_feasibility_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 25))
    X = rng.normal(size=(n, 3))
    y = np.where(rng.uniform(size=n) < 0.4, 1.0, -1.0)
    if abs(y.sum()) == n:
        y[0] = -y[0]
    C = float(2.0 ** rng.integers(-3, 8))
    m = train(X, y, C, 0.5)
    w = m.weights
    a = np.abs(m.dual_coef)
    ub = np.where(m.dual_coef > 0, C * w[0], C * w[1])
    assert np.all(a > 0) and np.all(a <= ub + 1e-12)
    assert abs(float(m.dual_coef.sum())) < 1e-9
    assert m.kkt_residual <= 1e-3 + 1e-12
