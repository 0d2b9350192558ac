"""Ridge-regression forecasting head on last-timestamp representations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .encoder import default_context, sliding_last_repr

ALPHA_GRID = (0.1, 0.2, 0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000)


@dataclass
class ForecastHead:
    weight: np.ndarray  # [K, F*H]
    bias: np.ndarray  # [F*H]
    alpha: float
    horizon: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weight + self.bias


def build_pairs(reprs: np.ndarray, values: np.ndarray, horizon: int,
                start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Pair ``reprs[t]`` with the flattened next ``horizon`` rows of ``values``.

    reprs is [T, K], values [T, F]. Row t (t >= start) targets
    ``values[t+1 : t+1+horizon]`` flattened time-major to F*H entries.
    Rows whose target window contains NaN are dropped.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    T = len(values)
    if T <= horizon:
        raise ValueError(f"series of length {T} is too short for horizon {horizon}")
    M = T - horizon
    idx = np.arange(start, M)
    windows = np.lib.stride_tricks.sliding_window_view(values[1:], horizon, axis=0)  # [M, F, H]
    Y = windows[idx].transpose(0, 2, 1).reshape(len(idx), -1)
    X = reprs[idx]
    keep = ~np.isnan(Y).any(axis=1) & ~np.isnan(X).any(axis=1)
    return X[keep], Y[keep]


def ridge_solve(X: np.ndarray, Y: np.ndarray, alpha: float,
                fit_intercept: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Closed form ``(X'X + alpha I) W = X'Y`` on centered data; returns (W, bias)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if fit_intercept:
        xm, ym = X.mean(axis=0), Y.mean(axis=0)
        Xc, Yc = X - xm, Y - ym
    else:
        xm, ym = np.zeros(X.shape[1]), np.zeros(Y.shape[1])
        Xc, Yc = X, Y
    A = Xc.T @ Xc
    A[np.diag_indices_from(A)] += alpha
    W = cho_solve(cho_factor(A), Xc.T @ Yc)
    return W, ym - xm @ W


def mse_mae(pred: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    """Mean squared / absolute error over every slice, step and variable."""
    err = np.asarray(pred) - np.asarray(target)
    return float(np.mean(err ** 2)), float(np.mean(np.abs(err)))


def ridge_fit(X: np.ndarray, Y: np.ndarray, X_val: np.ndarray, Y_val: np.ndarray,
              alpha_grid=ALPHA_GRID, horizon: int | None = None) -> tuple[ForecastHead, dict]:
    """Fit one head per grid value and keep the one with the lowest validation MSE.

    Returns the head and a dict alpha -> validation MSE. Ties keep the earlier alpha.
    """
    if len(X) < 1:
        raise ValueError("no training pairs")
    scores = {}
    best = None
    for alpha in alpha_grid:
        W, b = ridge_solve(X, Y, alpha)
        mse, _ = mse_mae(X_val @ W + b, Y_val)
        scores[alpha] = mse
        if best is None or mse < best[0]:
            best = (mse, alpha, W, b)
    _, alpha, W, b = best
    H = horizon if horizon is not None else Y.shape[1]
    return ForecastHead(W, b, float(alpha), H), scores


def evaluate(head: ForecastHead, X: np.ndarray, Y: np.ndarray) -> tuple[float, float]:
    if len(X) == 0:
        raise ValueError("no test pairs")
    return mse_mae(head.predict(X), Y)


def persistence_baseline(values: np.ndarray, horizon: int, start: int = 0) -> tuple[float, float]:
    """MSE/MAE of repeating the last observed value for every future step."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    X, Y = build_pairs(values, values, horizon, start)
    pred = np.tile(X, horizon)
    return mse_mae(pred, Y)


def evaluate_forecasting(params, splits: dict[str, np.ndarray], horizons, n_targets: int | None = None,
                         context: int | None = None, alpha_grid=ALPHA_GRID) -> list[dict]:
    """Full linear protocol on one normalized multivariate series.

    ``splits`` maps train/val/test to consecutive [T_s, F] arrays. The
    encoder sees the concatenated series causally (each r_t is computed from
    the window ending at t), pairs are formed within each split, alpha is
    chosen on val, and MSE/MAE are reported on test. The first
    ``n_targets`` columns are forecast (default: all).
    """
    parts = [np.asarray(splits[k], dtype=np.float64) for k in ("train", "val", "test")]
    parts = [p[0] if p.ndim == 3 else p for p in parts]
    full = np.concatenate(parts, axis=0)
    n_targets = n_targets or full.shape[1]
    context = context or default_context(params)
    reprs = sliding_last_repr(params, full, context)
    edges = np.cumsum([0] + [len(p) for p in parts])
    seg = {k: (edges[i], edges[i + 1]) for i, k in enumerate(("train", "val", "test"))}
    results = []
    for H in horizons:
        pairs = {}
        for k, (s, e) in seg.items():
            pairs[k] = build_pairs(reprs[s:e], full[s:e, :n_targets], H)
        head, _ = ridge_fit(*pairs["train"], *pairs["val"], alpha_grid=alpha_grid, horizon=H)
        mse, mae = evaluate(head, *pairs["test"])
        results.append({"H": int(H), "mse": mse, "mae": mae, "alpha": head.alpha})
    return results
