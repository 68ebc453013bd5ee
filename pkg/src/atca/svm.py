"""Soft-margin RBF support vector machine trained by SMO.

The dual problem solved is

    min_a  1/2 a^T Q a - sum(a)   s.t.  0 <= a_i <= C * w_{y_i},  sum(a_i y_i) = 0

with Q_ij = y_i y_j exp(-gamma |x_i - x_j|^2). Pairs are chosen by the maximal
violating pair rule and updated analytically. The hot loops are compiled with
numba; everything is plain float64 arithmetic in a fixed order, so results do
not depend on BLAS threading or on how many processes run concurrently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConvergenceError, DimensionMismatch, NonFinite, SingleClass
from .metrics import auc

DEFAULT_C_GRID = tuple(2.0**k for k in (-3, -1, 1, 3, 5, 7))
DEFAULT_GAMMA_GRID = tuple(2.0**k for k in (-9, -7, -5, -3, -1, 1))


@dataclass(frozen=True)
class TrainConfig:
    C_grid: tuple = DEFAULT_C_GRID
    gamma_grid: tuple = DEFAULT_GAMMA_GRID
    tol: float = 1e-3
    max_iter: int = 100_000
    inner_folds: int = 3
    metric: str = "auc"
    weight_cap: float = 100.0
    # Inner-CV problems are drawn as a stratified subsample of at most this many rows.
    grid_max_samples: int = 600

    def __post_init__(self):
        if not self.C_grid or not self.gamma_grid:
            raise ValueError("hyper-parameter grids must be non-empty")
        if not self.tol > 0:
            raise ValueError("KKT tolerance must be positive")
        if self.metric != "auc":
            raise ValueError(f"unsupported selection metric {self.metric!r}")
        object.__setattr__(self, "C_grid", tuple(float(c) for c in self.C_grid))
        object.__setattr__(self, "gamma_grid", tuple(float(g) for g in self.gamma_grid))

    def to_dict(self):
        return {
            "C_grid": list(self.C_grid),
            "gamma_grid": list(self.gamma_grid),
            "tol": self.tol,
            "max_iter": self.max_iter,
            "inner_folds": self.inner_folds,
            "metric": self.metric,
            "weight_cap": self.weight_cap,
            "grid_max_samples": self.grid_max_samples,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for each support vector
    bias: float
    gamma: float
    C: float
    weights: tuple  # (w_pos, w_neg)
    iterations: int = 0
    kkt_residual: float = 0.0
    support_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def n_features(self):
        return self.support_vectors.shape[1]

    def alphas(self) -> np.ndarray:
        return np.abs(self.dual_coef)

    def __eq__(self, other):
        if not isinstance(other, SvmModel):
            return NotImplemented
        return (
            np.array_equal(self.support_vectors, other.support_vectors)
            and np.array_equal(self.dual_coef, other.dual_coef)
            and self.bias == other.bias
            and self.gamma == other.gamma
            and self.C == other.C
            and tuple(self.weights) == tuple(other.weights)
        )

    __hash__ = None


# -- kernels -----------------------------------------------------------------


@numba.njit(cache=True)
def _sq_dists(A, B):
    # B is walked feature by feature so the inner loop runs over contiguous
    # columns; each entry still sums its squared differences in feature order
    n, d = A.shape
    m = B.shape[0]
    BT = np.ascontiguousarray(B.T)
    out = np.zeros((n, m))
    for i in range(n):
        row = out[i]
        for k in range(d):
            a = A[i, k]
            col = BT[k]
            for j in range(m):
                diff = a - col[j]
                row[j] += diff * diff
    return out


def squared_distances(A, B=None) -> np.ndarray:
    """Pairwise squared Euclidean distances, computed without cancellation."""
    A = np.ascontiguousarray(A, dtype=float)
    if B is None:
        # (a-b)**2 == (b-a)**2 exactly, so the result is symmetric with a zero diagonal
        return _sq_dists(A, A)
    B = np.ascontiguousarray(B, dtype=float)
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return _sq_dists(A, B)


def rbf_kernel(x, z, gamma: float) -> float:
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != z.shape:
        raise DimensionMismatch(f"dimension mismatch: {x.shape} vs {z.shape}")
    diff = x - z
    return math.exp(-gamma * float(diff @ diff))


def kernel_matrix(A, B=None, gamma: float = 1.0) -> np.ndarray:
    K = squared_distances(A, B)
    K *= -gamma
    return np.exp(K, out=K)


# -- solver ------------------------------------------------------------------


@numba.njit(cache=True)
def _smo(K, idx, y, cb, tol, max_iter, alpha0):
    n = idx.shape[0]
    alpha = alpha0.copy()
    G = -np.ones(n)
    for s_ in range(n):
        if alpha[s_] != 0.0:
            ks = idx[s_]
            cs = y[s_] * alpha[s_]
            for t in range(n):
                G[t] += y[t] * K[ks, idx[t]] * cs
    it = 0
    status = 0
    while True:
        gmax = -np.inf
        gmin = np.inf
        gi = -1
        gj = -1
        for t in range(n):
            v = -y[t] * G[t]
            if y[t] > 0:
                up = alpha[t] < cb[t]
                low = alpha[t] > 0
            else:
                up = alpha[t] > 0
                low = alpha[t] < cb[t]
            if up and v > gmax:
                gmax = v
                gi = t
            if low and v < gmin:
                gmin = v
                gj = t
        if gi < 0 or gj < 0 or gmax - gmin <= tol:
            break
        if it >= max_iter:
            status = 1
            break
        it += 1
        i = gi
        j = gj
        ki = idx[i]
        kj = idx[j]
        Ci = cb[i]
        Cj = cb[j]
        old_ai = alpha[i]
        old_aj = alpha[j]
        if y[i] != y[j]:
            quad = K[ki, ki] + K[kj, kj] + 2.0 * (y[i] * y[j] * K[ki, kj])
            if quad <= 0:
                quad = 1e-12
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > Ci - Cj:
                if alpha[i] > Ci:
                    alpha[i] = Ci
                    alpha[j] = Ci - diff
            else:
                if alpha[j] > Cj:
                    alpha[j] = Cj
                    alpha[i] = Cj + diff
        else:
            quad = K[ki, ki] + K[kj, kj] - 2.0 * (y[i] * y[j] * K[ki, kj])
            if quad <= 0:
                quad = 1e-12
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > Ci:
                if alpha[i] > Ci:
                    alpha[i] = Ci
                    alpha[j] = total - Ci
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > Cj:
                if alpha[j] > Cj:
                    alpha[j] = Cj
                    alpha[i] = total - Cj
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        ci = y[i] * (alpha[i] - old_ai)
        cj = y[j] * (alpha[j] - old_aj)
        for t in range(n):
            kt = idx[t]
            G[t] += y[t] * (K[ki, kt] * ci + K[kj, kt] * cj)
    return alpha, G, it, status


def _bias(alpha, G, y, cb):
    yG = y * G
    at_upper = alpha >= cb
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = float(yG[ub_mask].min()) if ub_mask.any() else math.inf
        lb = float(yG[lb_mask].max()) if lb_mask.any() else -math.inf
        rho = (ub + lb) / 2.0
    return -rho


def _kkt_from_gradient(alpha, G, y, cb, b):
    yf = G + 1.0 + y * b
    viol = np.where(alpha <= 0, np.maximum(0.0, 1.0 - yf), 0.0)
    viol = np.where(alpha >= cb, np.maximum(0.0, yf - 1.0), viol)
    free = (alpha > 0) & (alpha < cb)
    viol = np.where(free, np.abs(yf - 1.0), viol)
    return float(viol.max()) if viol.size else 0.0


def class_weights(y, cap: float = 100.0) -> tuple:
    """Penalty weights (w_pos, w_neg) = (min(n_neg / n_pos, cap), 1)."""
    y = np.asarray(y)
    n_pos = int((y > 0).sum())
    n_neg = int((y < 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("training labels contain a single class")
    return (min(n_neg / n_pos, cap), 1.0)


def _check_labels(y):
    y = np.asarray(y, dtype=float).ravel()
    if not np.all((y == 1.0) | (y == -1.0)):
        raise ValueError("labels must be +1 or -1")
    if (y > 0).all() or (y < 0).all():
        raise SingleClass("training labels contain a single class")
    return y


def solve_dual(K, idx, y, C, weights, tol=1e-3, max_iter=100_000, alpha0=None):
    """Run SMO on the rows `idx` of a precomputed Gram matrix `K`.

    `alpha0` optionally warm-starts the solver from a feasible point (for
    example the solution for a smaller C with the same labels). Returns (alpha, bias, iterations, kkt_residual). Raises ConvergenceError
    when `max_iter` pair updates do not close the violating gap.
    """
    y = _check_labels(y)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    cb = np.where(y > 0, C * weights[0], C * weights[1])
    if alpha0 is None:
        alpha0 = np.zeros(idx.shape[0])
    alpha, G, it, status = _smo(K, idx, y, cb, float(tol), int(max_iter), np.ascontiguousarray(alpha0, dtype=float))
    if status:
        raise ConvergenceError(f"SMO did not converge within {max_iter} pair updates")
    b = _bias(alpha, G, y, cb)
    return alpha, b, it, _kkt_from_gradient(alpha, G, y, cb, b)


def train(
    X,
    y,
    C: float,
    gamma: float,
    weights=None,
    *,
    tol: float = 1e-3,
    max_iter: int = 100_000,
    weight_cap: float = 100.0,
    gram=None,
) -> SvmModel:
    """Train an RBF soft-margin SVM. `gram` may supply a precomputed kernel matrix."""
    X = np.ascontiguousarray(X, dtype=float)
    y = _check_labels(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch("X must be (n, d) with one label per row")
    if not np.isfinite(X).all():
        raise NonFinite("training matrix contains non-finite values")
    if weights is None:
        weights = class_weights(y, weight_cap)
    K = kernel_matrix(X, gamma=gamma) if gram is None else gram
    idx = np.arange(X.shape[0], dtype=np.int64)
    alpha, b, it, kkt = solve_dual(K, idx, y, C, weights, tol, max_iter)
    return _pack(X, idx, y, alpha, b, gamma, C, weights, it, kkt)


def train_pooled(X_pool, K_pool, idx, y, C, gamma, weights=None, *, tol=1e-3, max_iter=100_000, weight_cap=100.0):
    """Train on the pool rows `idx`, reusing the pool's Gram matrix `K_pool`."""
    y = _check_labels(y)
    if weights is None:
        weights = class_weights(y, weight_cap)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    alpha, b, it, kkt = solve_dual(K_pool, idx, y, C, weights, tol, max_iter)
    return _pack(X_pool, idx, y, alpha, b, gamma, C, weights, it, kkt)


def _pack(X_pool, idx, y, alpha, b, gamma, C, weights, it, kkt):
    sv = np.flatnonzero(alpha > 0)
    return SvmModel(
        support_vectors=np.ascontiguousarray(X_pool[idx[sv]]),
        dual_coef=alpha[sv] * y[sv],
        bias=float(b),
        gamma=float(gamma),
        C=float(C),
        weights=(float(weights[0]), float(weights[1])),
        iterations=int(it),
        kkt_residual=float(kkt),
        support_indices=sv.astype(np.int64),
    )


@numba.njit(cache=True)
def _decide(Kcols, coef, b):
    n, m = Kcols.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += Kcols[i, j] * coef[j]
        out[i] = s + b
    return out


def decision_values(model: SvmModel, X) -> np.ndarray:
    """Scores sum_i alpha_i y_i K(sv_i, x) + b for each row of X (higher = more legitimate)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(f"model expects {model.n_features} features, got {X.shape[1]}")
    if model.dual_coef.size == 0:
        return np.full(X.shape[0], model.bias)
    Kt = kernel_matrix(X, model.support_vectors, model.gamma)
    return _decide(Kt, np.ascontiguousarray(model.dual_coef), model.bias)


def decision_from_kernel(model: SvmModel, K_rows, pool_idx) -> np.ndarray:
    """Scores from precomputed kernel rows against a training pool.

    `K_rows[:, pool_idx[model.support_indices]]` must be the kernel values
    between the evaluated points and the model's support vectors.
    """
    cols = np.asarray(pool_idx)[model.support_indices]
    return _decide(np.ascontiguousarray(K_rows[:, cols]), np.ascontiguousarray(model.dual_coef), model.bias)


def decision_value(model: SvmModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("decision_value expects a single feature vector")
    return float(decision_values(model, x[None, :])[0])


# -- model selection ---------------------------------------------------------


def stratified_folds(y, k, rng) -> list:
    """Split row indices into k folds, shuffling each class and dealing round-robin."""
    y = np.asarray(y)
    folds = [[] for _ in range(k)]
    offset = 0
    for label in (1.0, -1.0):
        members = np.flatnonzero(y == label)
        members = members[rng.permutation(members.size)]
        for n, m in enumerate(members):
            folds[(offset + n) % k].append(int(m))
        offset += members.size
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def _stratified_subsample(y, cap, rng):
    n = y.shape[0]
    if n <= cap:
        return np.arange(n, dtype=np.int64)
    pos = np.flatnonzero(y > 0)
    neg = np.flatnonzero(y < 0)
    n_pos = min(pos.size, max(cap // 2, int(round(cap * pos.size / n))))
    n_neg = cap - n_pos
    pick_pos = np.sort(rng.choice(pos, size=n_pos, replace=False))
    pick_neg = np.sort(rng.choice(neg, size=min(n_neg, neg.size), replace=False))
    return np.sort(np.concatenate([pick_pos, pick_neg]))


def grid_search(X, y, config: TrainConfig, rng, sq_dist=None) -> tuple:
    """Pick (C, gamma) maximizing mean inner-CV AUC; ties go to smaller C then smaller gamma.

    `sq_dist` may hold precomputed squared distances between the rows of X.
    """
    y = _check_labels(y)
    X = np.asarray(X, dtype=float)
    k = config.inner_folds
    if min((y > 0).sum(), (y < 0).sum()) < k:
        raise SingleClass(f"each class needs at least {k} members for inner CV")
    if len(config.C_grid) == 1 and len(config.gamma_grid) == 1:
        return config.C_grid[0], config.gamma_grid[0]
    sub = _stratified_subsample(y, config.grid_max_samples, rng)
    ys = y[sub]
    if sq_dist is None:
        D = squared_distances(X[sub])
    else:
        D = np.ascontiguousarray(sq_dist[np.ix_(sub, sub)])
    folds = stratified_folds(ys, k, rng)
    splits = []
    for f in range(k):
        test = folds[f]
        train_idx = np.concatenate([folds[g] for g in range(k) if g != f])
        if np.unique(ys[train_idx]).size < 2 or np.unique(ys[test]).size < 2:
            continue
        splits.append(
            (
                np.ascontiguousarray(D[np.ix_(train_idx, train_idx)]),
                np.ascontiguousarray(D[np.ix_(test, train_idx)]),
                ys[train_idx],
                ys[test],
                class_weights(ys[train_idx], config.weight_cap),
            )
        )

    best = None
    scores = {}
    for gamma in config.gamma_grid:
        kernels = [(np.exp(-gamma * Dtr), np.exp(-gamma * Dte)) for Dtr, Dte, *_ in splits]
        # Ascending C: each fold's previous solution stays feasible and warm-starts the next.
        warm = [None] * len(splits)
        for C in sorted(config.C_grid):
            fold_auc = []
            for f, (_, _, ytr, yte, w) in enumerate(splits):
                Ktr, Kte = kernels[f]
                try:
                    alpha, b, _, _ = solve_dual(Ktr, np.arange(ytr.size), ytr, C, w, config.tol, config.max_iter, warm[f])
                except ConvergenceError:
                    fold_auc = None
                    break
                warm[f] = alpha
                s = _decide(Kte, alpha * ytr, b)
                fold_auc.append(auc(s[yte > 0], s[yte < 0]))
            scores[(C, gamma)] = None if fold_auc is None else float(np.mean(fold_auc))
    for C in sorted(config.C_grid):
        for gamma in sorted(config.gamma_grid):
            s = scores[(C, gamma)]
            if s is not None and (best is None or s > best[0]):
                best = (s, C, gamma)
    if best is None:
        raise ConvergenceError("no grid point converged")
    return best[1], best[2]
