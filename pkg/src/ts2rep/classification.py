"""Instance-level representations and the RBF-kernel classifier protocol."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist

from .encoder import ALL_ONES, EncoderParams, encode_numpy

# Penalties C = 10^i, i in -4..4, plus C = inf; ridge uses lambda = 1 / C.
C_GRID = tuple(10.0 ** i for i in range(-4, 5)) + (np.inf,)
HARD_MARGIN_PENALTY = 1e-8


def penalty_for(C: float) -> float:
    return HARD_MARGIN_PENALTY if np.isinf(C) else 1.0 / C


def max_pool_time(reprs: np.ndarray) -> np.ndarray:
    """[N, T, K] -> [N, K], elementwise max over time (NaN rows ignored)."""
    return np.nanmax(reprs, axis=1)


def instance_repr(params: EncoderParams, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Encode [N, T, F] series without masking and max-pool each over time."""
    return max_pool_time(encode_numpy(params, x, ALL_ONES, batch_size=batch_size))


def median_bandwidth(X: np.ndarray) -> float:
    d = pdist(X)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def rbf_kernel(A: np.ndarray, B: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * bandwidth ** 2))


@dataclass
class KernelRidgeClassifier:
    """One-vs-rest kernel ridge on +/-1 targets with an RBF kernel."""

    penalty: float
    bandwidth: float | None = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KernelRidgeClassifier":
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError("classifier needs at least two classes in the training set")
        self.X_ = np.asarray(X, dtype=np.float64)
        if self.bandwidth is None:
            self.bandwidth = median_bandwidth(self.X_)
        Y = np.where(y[:, None] == self.classes_[None, :], 1.0, -1.0)
        K = rbf_kernel(self.X_, self.X_, self.bandwidth)
        K[np.diag_indices_from(K)] += self.penalty
        try:
            self.coef_ = cho_solve(cho_factor(K), Y)
        except np.linalg.LinAlgError:
            # numerically singular at the hard-margin penalty
            self.coef_ = np.linalg.lstsq(K, Y, rcond=None)[0]
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return rbf_kernel(np.asarray(X, dtype=np.float64), self.X_, self.bandwidth) @ self.coef_

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


def _folds(n: int, k: int, seed: int) -> list[np.ndarray]:
    order = np.random.default_rng(seed).permutation(n)
    return [order[i::k] for i in range(k)]


def select_penalty(X: np.ndarray, y: np.ndarray, grid=C_GRID, n_folds: int = 5,
                   seed: int = 0) -> float:
    """Pick C by k-fold cross-validated accuracy; ties go to the earlier grid entry."""
    bandwidth = median_bandwidth(X)
    n_folds = min(n_folds, len(y))
    folds = _folds(len(y), n_folds, seed)
    best_C, best_acc = grid[0], -1.0
    for C in grid:
        correct = 0
        for f in folds:
            train = np.setdiff1d(np.arange(len(y)), f)
            if len(np.unique(y[train])) < 2:
                continue
            clf = KernelRidgeClassifier(penalty_for(C), bandwidth).fit(X[train], y[train])
            correct += int(np.sum(clf.predict(X[f]) == y[f]))
        acc = correct / len(y)
        if acc > best_acc:
            best_C, best_acc = C, acc
    return best_C


def fit_eval_classifier(train_X: np.ndarray, train_y: np.ndarray, test_X: np.ndarray,
                        test_y: np.ndarray, grid=C_GRID, seed: int = 0) -> dict:
    """Cross-validate C on train, refit, and return test accuracy."""
    train_y = np.asarray(train_y)
    if len(np.unique(train_y)) < 2:
        raise ValueError("training set has a single class; accuracy is undefined")
    C = select_penalty(train_X, train_y, grid, seed=seed)
    clf = KernelRidgeClassifier(penalty_for(C)).fit(train_X, train_y)
    acc = float(np.mean(clf.predict(test_X) == np.asarray(test_y)))
    return {"accuracy": acc, "chosen_penalty": "inf" if np.isinf(C) else C,
            "ridge_lambda": penalty_for(C), "n_train": int(len(train_y)), "n_test": int(len(test_y))}
