"""Streaming anomaly scoring, drift adjustment, thresholding and delay-adjusted metrics.

The raw score of timestamp t is the L1 distance between the last-step
representation of the window ending at t encoded as-is and with only its
last observation masked. Raw scores are divided by the mean of the
preceding ``window`` scores (after subtracting it), and a point is flagged
when that adjusted score exceeds ``mu + beta * sigma``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .encoder import ALL_ONES, MASK_LAST, EncoderParams, default_context, sliding_last_repr

DELAY_BY_FREQ = {"minutely": 7, "hourly": 3}


@dataclass(frozen=True)
class AnomalyConfig:
    beta: float = 4.0
    window: int = 21
    delay: int = 7
    diff_order: int = 0


def resolve_delay(freq: str) -> int:
    """Allowed detection delay: 7 steps for minutely data, 3 for hourly (7 otherwise)."""
    return DELAY_BY_FREQ.get(freq, 7)


def difference_series(x: np.ndarray, d: int) -> np.ndarray:
    if d < 0:
        raise ValueError("differencing order must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if len(x) <= d:
        raise ValueError(f"cannot difference a length-{len(x)} series {d} times")
    return np.diff(x, n=d, axis=0) if d else x.copy()


def l1_score(r_unmasked: np.ndarray, r_masked: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(r_unmasked) - np.asarray(r_masked)).sum(axis=-1)


def anomaly_scores(params: EncoderParams, x: np.ndarray, context: int) -> np.ndarray:
    """Raw score for every timestamp of a [T] or [T, F] series, each using only x[:t+1]."""
    unmasked = sliding_last_repr(params, x, context, ALL_ONES)
    masked = sliding_last_repr(params, x, context, MASK_LAST)
    return l1_score(unmasked, masked)


def adjust_score(alpha: float, history) -> float:
    """``(alpha - m) / m`` with m the mean of ``history``.

    A zero local mean gives 0 for a zero score and +inf otherwise.
    """
    m = float(np.mean(history))
    if m == 0.0:
        return 0.0 if alpha == 0 else math.inf
    return (alpha - m) / m


def adjust_scores(alphas: np.ndarray, window: int = 21) -> np.ndarray:
    """Adjusted score for each position; the first ``window`` positions are NaN (not ready)."""
    alphas = np.asarray(alphas, dtype=np.float64)
    out = np.full(len(alphas), np.nan)
    if len(alphas) <= window:
        return out
    csum = np.concatenate([[0.0], np.cumsum(alphas)])
    means = (csum[window:-1] - csum[:-window - 1]) / window
    cur = alphas[window:]
    with np.errstate(divide="ignore", invalid="ignore"):
        adj = (cur - means) / means
    zero = means == 0
    adj[zero] = np.where(cur[zero] == 0, 0.0, np.inf)
    out[window:] = adj
    return out


def detect(adjusted: np.ndarray, mu: float, sigma: float, beta: float = 4.0) -> np.ndarray:
    """Strict ``adjusted > mu + beta * sigma``; not-ready (NaN) points are never flagged."""
    adjusted = np.asarray(adjusted, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return np.nan_to_num(adjusted, nan=-np.inf) > mu + beta * sigma


def threshold_stats(adjusted: np.ndarray) -> tuple[float, float]:
    """Mean and population std of the finite adjusted scores."""
    a = np.asarray(adjusted, dtype=np.float64)
    a = a[np.isfinite(a)]
    if a.size < 2:
        raise ValueError("need at least two scored points to estimate the threshold")
    return float(a.mean()), float(a.std())


class StreamState:
    """Per-series online state: last ``window`` raw scores and running stats of adjusted scores.

    With ``mu``/``sigma`` given (normal setting) those fixed statistics are
    used; otherwise (cold start) they accumulate from every earlier adjusted
    score, and nothing is flagged until two scores exist.
    """

    def __init__(self, config: AnomalyConfig = AnomalyConfig(), mu: float | None = None,
                 sigma: float | None = None):
        self.config = config
        self.recent: deque[float] = deque(maxlen=config.window)
        self.fixed = mu is not None
        self.mu = mu
        self.sigma = sigma
        self._n = 0
        self._mean = 0.0
        self._m2 = 0.0

    def _threshold(self) -> float | None:
        if self.fixed:
            return self.mu + self.config.beta * self.sigma
        if self._n < 2:
            return None
        return self._mean + self.config.beta * math.sqrt(self._m2 / self._n)

    def update(self, alpha: float) -> tuple[float | None, bool]:
        """Consume one raw score; returns (adjusted score or None while warming up, flag)."""
        if len(self.recent) < self.config.window:
            self.recent.append(alpha)
            return None, False
        adj = adjust_score(alpha, self.recent)
        self.recent.append(alpha)
        thr = self._threshold()
        flag = bool(thr is not None and adj > thr)
        if not self.fixed and math.isfinite(adj):
            self._n += 1
            delta = adj - self._mean
            self._mean += delta / self._n
            self._m2 += delta * (adj - self._mean)
        return adj, flag


def _segments(labels: np.ndarray) -> list[tuple[int, int]]:
    segs, start = [], None
    for i, v in enumerate(labels):
        if v and start is None:
            start = i
        elif not v and start is not None:
            segs.append((start, i))
            start = None
    if start is not None:
        segs.append((start, len(labels)))
    return segs


def delay_adjust(pred: np.ndarray, labels: np.ndarray, delay: int) -> np.ndarray:
    """Credit a whole anomaly segment when an alarm fires within its first ``delay + 1`` points;
    otherwise every point of the segment counts as missed. Normal points are untouched."""
    pred = np.asarray(pred, dtype=bool).copy()
    labels = np.asarray(labels, dtype=bool)
    if pred.shape != labels.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {labels.shape} labels")
    for s, e in _segments(labels):
        hit = pred[s:min(s + delay + 1, e)].any()
        pred[s:e] = hit
    return pred


def delay_adjusted_prf(pred: np.ndarray, labels: np.ndarray, delay: int) -> tuple[float, float, float]:
    """Precision, recall and F1 after delay adjustment (0 where undefined)."""
    adj = delay_adjust(pred, labels, delay)
    labels = np.asarray(labels, dtype=bool)
    tp = int(np.sum(adj & labels))
    fp = int(np.sum(adj & ~labels))
    fn = int(np.sum(~adj & labels))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def run_detection(params: EncoderParams, values: np.ndarray, train_len: int,
                  config: AnomalyConfig = AnomalyConfig(), context: int | None = None,
                  cold_start: bool = False) -> dict[str, np.ndarray]:
    """Score a whole (already normalized) stream and flag anomalies.

    In the normal setting ``mu``/``sigma`` come from the adjusted scores of
    the first ``train_len`` points; with ``cold_start`` they accumulate
    online from all earlier points. Returns per-point arrays aligned with
    ``values`` (the first ``diff_order`` points are never scored).
    """
    values = np.asarray(values, dtype=np.float64)
    d = config.diff_order
    x = difference_series(values, d)
    context = context or default_context(params)
    raw = anomaly_scores(params, x, context)
    adj = adjust_scores(raw, config.window)
    if cold_start:
        state = StreamState(config)
        flags = np.zeros(len(raw), dtype=bool)
        for t, a in enumerate(raw):
            _, flags[t] = state.update(float(a))
    else:
        mu, sigma = threshold_stats(adj[:max(train_len - d, 0)])
        flags = detect(adj, mu, sigma, config.beta)
    pad = np.full(d, np.nan)
    return {
        "alpha": np.concatenate([pad, raw]),
        "alpha_adj": np.concatenate([pad, adj]),
        "is_anomaly": np.concatenate([np.zeros(d, dtype=bool), flags]),
    }
