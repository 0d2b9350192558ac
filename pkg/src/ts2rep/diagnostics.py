"""Collapse metrics, the missing-data harness and representation heatmaps."""

from __future__ import annotations

import csv
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .encoder import ALL_ONES, ALL_ZEROS, EncoderConfig, EncoderParams, encode_numpy


@dataclass
class CollapseReport:
    alpha: float
    beta: float

    def to_dict(self) -> dict:
        return asdict(self)


def cosine_mean(r: np.ndarray, p: np.ndarray) -> float:
    """Mean cosine similarity over all (i, t) rows of two [N, T, K] arrays.

    Rows where either vector has zero norm are skipped with a warning.
    """
    r = np.asarray(r, dtype=np.float64).reshape(-1, r.shape[-1])
    p = np.asarray(p, dtype=np.float64).reshape(-1, p.shape[-1])
    nr = np.linalg.norm(r, axis=1)
    npos = np.linalg.norm(p, axis=1)
    ok = (nr > 0) & (npos > 0)
    if not ok.all():
        warnings.warn(f"skipped {int((~ok).sum())} zero-norm representation(s)", RuntimeWarning,
                      stacklevel=2)
    if not ok.any():
        return 0.0
    cos = np.sum(r[ok] * p[ok], axis=1) / (nr[ok] * npos[ok])
    return float(cos.mean())


def positional_repr(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    """Encoding of the same shape with every timestamp masked (input content removed)."""
    return encode_numpy(params, x, ALL_ZEROS)


def alpha_metric(params: EncoderParams, x: np.ndarray) -> float:
    """Similarity of the representations of ``x`` to the purely positional ones."""
    if len(x) == 0:
        raise ValueError("empty batch")
    return cosine_mean(encode_numpy(params, x, ALL_ONES), positional_repr(params, x))


def beta_metric(reprs: np.ndarray) -> float:
    """Mean over (t, k) of the population std across samples of [N, T, K] representations."""
    reprs = np.asarray(reprs, dtype=np.float64)
    if reprs.shape[0] < 2:
        raise ValueError("beta needs at least two samples")
    return float(np.mean(np.std(reprs, axis=0)))


def collapse_report(params: EncoderParams, x: np.ndarray) -> CollapseReport:
    r = encode_numpy(params, x, ALL_ONES)
    p = positional_repr(params, x)
    return CollapseReport(alpha=cosine_mean(r, p), beta=beta_metric(r))


def corrupt(x: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Copy of [N, T, F] data with a ``rate`` fraction of each series' timestamps set to NaN."""
    if not 0 <= rate < 1:
        raise ValueError("missing rate must lie in [0, 1)")
    out = np.array(x, dtype=np.float64, copy=True)
    N, T = out.shape[:2]
    k = int(round(rate * T))
    for i in range(N):
        if k:
            out[i, rng.choice(T, size=k, replace=False)] = np.nan
    return out


def missing_data_harness(train_x, train_y, test_x, test_y, rates, seed: int = 42,
                         encoder_config: EncoderConfig | None = None, train_config=None) -> list[dict]:
    """Train-and-classify accuracy for each missing-observation rate.

    The same seed drives corruption, training and model selection at every
    rate, so rate 0 reproduces the uncorrupted pipeline exactly.
    """
    from .classification import fit_eval_classifier, instance_repr
    from .trainer import TrainConfig, fit

    for r in rates:
        if not 0 <= r < 1:
            raise ValueError(f"missing rate {r} outside [0, 1)")
    train_config = train_config or TrainConfig(seed=seed)
    table = []
    for rate in rates:
        rng = np.random.default_rng(seed)
        tr = corrupt(train_x, rate, rng)
        te = corrupt(test_x, rate, rng)
        state = fit(tr, encoder_config, train_config)
        res = fit_eval_classifier(instance_repr(state.params, tr), train_y,
                                  instance_repr(state.params, te), test_y, seed=seed)
        table.append({"rate": float(rate), "accuracy": res["accuracy"]})
    return table


def top_variance_dims(reprs: np.ndarray, k: int = 16) -> np.ndarray:
    """Indices of the ``k`` dimensions of a [T, K] array with the largest variance over time."""
    var = np.var(reprs, axis=0)
    if reprs.shape[1] < k:
        warnings.warn(f"only {reprs.shape[1]} dimensions available; exporting all", RuntimeWarning,
                      stacklevel=2)
        k = reprs.shape[1]
    return np.argsort(-var, kind="stable")[:k]


def export_heatmap(params: EncoderParams, series: np.ndarray, path: str | Path, k: int = 16) -> np.ndarray:
    """Write the top-variance representation dimensions of one series as a T-row CSV.

    Columns are ordered by descending variance and headed ``dim_<index>``.
    Returns the exported [T, k] matrix.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    r = encode_numpy(params, series[None], ALL_ONES)[0]
    dims = top_variance_dims(r, k)
    mat = r[:, dims]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"dim_{d}" for d in dims])
        for row in mat:
            w.writerow([repr(float(v)) for v in row])
    return mat
