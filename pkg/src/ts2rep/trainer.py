"""Training loop: batching, context views, hierarchical loss, Adam updates."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor_core as tc
from .augment import CropPair, make_views, sample_crop_pair
from .encoder import EncoderConfig, EncoderParams, MaskPlan, encode, init_params, save_params
from .losses import hierarchical_loss
from .tensor_core import Tensor

log = logging.getLogger(__name__)

LARGE_DATASET_POINTS = 100_000


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 8
    learning_rate: float = 1e-3
    iters: int | None = None  # None: 200, or 600 for datasets of >= 100,000 points
    max_train_length: int = 3000
    seed: int = 42
    # ablation switches
    temporal: bool = True
    instance: bool = True
    hierarchical: bool = True
    random_crop: bool = True
    timestamp_mask: bool = True
    symmetric: bool = True
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8


def default_iters(n_points: int) -> int:
    return 200 if n_points < LARGE_DATASET_POINTS else 600


@dataclass
class TrainState:
    params: EncoderParams
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0
    loss_history: list[float] = field(default_factory=list)


def slice_long_series(series: list[np.ndarray], max_len: int = 3000) -> list[np.ndarray]:
    """Cut every [T, F] series into consecutive pieces of at most ``max_len`` steps."""
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    pieces = []
    for s in series:
        for start in range(0, len(s), max_len):
            pieces.append(s[start:start + max_len])
    return pieces


def _pad_stack(pieces: list[np.ndarray]) -> np.ndarray:
    T = max(len(p) for p in pieces)
    F = pieces[0].shape[1]
    out = np.full((len(pieces), T, F), np.nan)
    for i, p in enumerate(pieces):
        out[i, :len(p)] = p
    return out


def prepare_training_array(data, max_len: int) -> np.ndarray:
    """Normalize input to a NaN-padded [N, T, F] array of pieces no longer than ``max_len``.

    Accepts a [N, T, F] / [N, T] array or a list of [T, F] / [T] arrays.
    Series that are entirely missing are dropped.
    """
    if isinstance(data, np.ndarray):
        arr = data[..., None] if data.ndim == 2 else data
        series = list(arr)
    else:
        series = [np.asarray(s, dtype=np.float64) for s in data]
        series = [s[:, None] if s.ndim == 1 else s for s in series]
    series = [s for s in slice_long_series(series, max_len) if not np.isnan(s).all()]
    if not series:
        raise ValueError("training data is empty")
    return _pad_stack(series)


def train_step(state: TrainState, batch: np.ndarray, rng: np.random.Generator,
               config: TrainConfig, batch_ids=None) -> float:
    """One crop pair, two masked views, hierarchical loss, one Adam update. Returns the loss."""
    T = batch.shape[1]
    pair = sample_crop_pair(T, rng) if config.random_crop else CropPair.full(T)
    views = make_views(batch, pair, rng, masking=config.timestamp_mask)
    params = state.params
    out1 = encode(params, views.x1, MaskPlan("custom", views.mask1))
    out2 = encode(params, views.x2, MaskPlan("custom", views.mask2))
    r1 = tc.slice_axis(out1, *views.local1, axis=1)
    r2 = tc.slice_axis(out2, *views.local2, axis=1)
    loss, _ = hierarchical_loss(r1, r2, symmetric=config.symmetric, temporal=config.temporal,
                                instance=config.instance, hierarchical=config.hierarchical)
    value = float(loss.data)
    if not np.isfinite(value):
        ids = "" if batch_ids is None else f" (batch ids {list(map(int, batch_ids))})"
        raise NonFiniteLossError(f"non-finite loss {value} at iteration {state.iteration}{ids}")
    for p in params.values():
        p.zero_grad()
    loss.backward()
    _adam_update(state, config)
    state.iteration += 1
    state.loss_history.append(value)
    return value


def _adam_update(state: TrainState, config: TrainConfig) -> None:
    b1, b2 = config.adam_betas
    t = state.iteration + 1
    lr_t = config.learning_rate * np.sqrt(1 - b2 ** t) / (1 - b1 ** t)
    for name, p in state.params.items():
        if p.grad is None:
            continue
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data -= (lr_t * m / (np.sqrt(v) + config.adam_eps)).astype(p.data.dtype)


def _batches(n: int, batch_size: int, seed: int):
    """Endless stream of index batches; reshuffled each pass, partial tail kept."""
    epoch = 0
    while True:
        order = np.random.default_rng([seed, 1, epoch]).permutation(n)
        for i in range(0, n, batch_size):
            yield order[i:i + batch_size]
        epoch += 1


def fit(data, encoder_config: EncoderConfig | None = None, config: TrainConfig | None = None,
        params: EncoderParams | None = None, log_path: str | Path | None = None,
        callback: Callable[[TrainState], None] | None = None) -> TrainState:
    """Train an encoder on unlabeled series only.

    ``data`` is a [N, T, F] array (NaN = missing) or a list of [T, F]
    arrays. Returns the final TrainState; ``state.params`` is the encoder.
    """
    config = config or TrainConfig()
    arr = prepare_training_array(data, config.max_train_length)
    if encoder_config is None:
        encoder_config = EncoderConfig(input_dims=arr.shape[-1])
    if params is None:
        params = init_params(encoder_config, config.seed)
    state = TrainState(params=params)
    n_iters = config.iters if config.iters is not None else default_iters(int(np.prod(arr.shape)))
    logf = open(log_path, "w") if log_path else None
    try:
        batches = _batches(len(arr), config.batch_size, config.seed)
        for it in range(n_iters):
            idx = next(batches)
            t0 = time.perf_counter()
            rng = np.random.default_rng([config.seed, 2, it])
            loss = train_step(state, arr[idx], rng, config, batch_ids=idx)
            wall_ms = (time.perf_counter() - t0) * 1000
            if logf:
                logf.write(json.dumps({"iter": it, "loss": loss, "wall_ms": round(wall_ms, 3)}) + "\n")
            if it % 50 == 0:
                log.debug("iter %d loss %.4f", it, loss)
            if callback:
                callback(state)
    finally:
        if logf:
            logf.close()
    return state


def save_checkpoint(state: TrainState, path: str | Path) -> None:
    save_params(state.params, path)
