"""Temporal, instance-wise, dual and hierarchical contrastive losses.

All losses take overlap-aligned representations ``r`` and ``r_prime`` of
shape [B, L, K]; position ``t`` in both addresses the same original
timestamp. Similarities are raw dot products (no temperature, no
normalization).

With ``symmetric=True`` (default) each term is averaged with its
counterpart in which the roles of ``r`` and ``r_prime`` are swapped.
"""

from __future__ import annotations

import numpy as np

from . import tensor_core as tc
from .tensor_core import Tensor


def _contrast(a: Tensor, b: Tensor, symmetric: bool) -> Tensor:
    """Mean InfoNCE over groups of n paired anchors.

    ``a`` and ``b`` are [G, n, K]. For anchor ``a[g, i]`` the positive is
    ``b[g, i]``; the denominator holds ``b[g, j]`` for every j and ``a[g, j]``
    for j != i. Returns the mean over (g, i) (and over both directions when
    symmetric).
    """
    G, n, _ = a.shape
    z = tc.concat([a, b], axis=1)  # [G, 2n, K]
    sim = tc.matmul(z, tc.swapaxes(z, 1, 2))  # [G, 2n, 2n]
    dtype = sim.dtype
    self_mask = np.zeros((2 * n, 2 * n), dtype=dtype)
    np.fill_diagonal(self_mask, -np.inf)
    pos_sel = np.zeros((2 * n, 2 * n), dtype=dtype)
    idx = np.arange(n)
    pos_sel[idx, idx + n] = 1.0
    pos_sel[idx + n, idx] = 1.0
    lse = tc.logsumexp(tc.add(sim, self_mask), axis=-1)  # [G, 2n]
    pos = tc.sum_(tc.mul(sim, pos_sel), axis=-1)  # [G, 2n]
    per_anchor = tc.add(lse, tc.neg(pos))
    if not symmetric:
        per_anchor = tc.slice_axis(per_anchor, 0, n, axis=1)
    return tc.mean(tc.reshape(per_anchor, (-1,)))


def _check(r: Tensor, r_prime: Tensor) -> None:
    if r.shape != r_prime.shape or len(r.shape) != 3:
        raise ValueError(f"representation pair must share a [B, L, K] shape, got {r.shape} and {r_prime.shape}")
    if r.shape[1] < 1:
        raise ValueError("overlap is empty (L = 0)")


def temporal_loss(r: Tensor, r_prime: Tensor, symmetric: bool = True) -> Tensor:
    """Positives: same timestamp across views; negatives: other timestamps of the same series."""
    _check(r, r_prime)
    return _contrast(r, r_prime, symmetric)


def instance_loss(r: Tensor, r_prime: Tensor, symmetric: bool = True) -> Tensor:
    """Positives: same series across views; negatives: other series at the same timestamp.

    With a single series there are no negatives and the loss is exactly 0.
    """
    _check(r, r_prime)
    return _contrast(tc.swapaxes(r, 0, 1), tc.swapaxes(r_prime, 0, 1), symmetric)


def dual_loss(r: Tensor, r_prime: Tensor, symmetric: bool = True,
              temporal: bool = True, instance: bool = True) -> Tensor:
    _check(r, r_prime)
    total = Tensor(np.zeros((), dtype=r.dtype))
    if temporal:
        total = tc.add(total, temporal_loss(r, r_prime, symmetric))
    if instance:
        total = tc.add(total, instance_loss(r, r_prime, symmetric))
    return total


def hierarchical_loss(r: Tensor, r_prime: Tensor, symmetric: bool = True,
                      temporal: bool = True, instance: bool = True,
                      hierarchical: bool = True) -> tuple[Tensor, int]:
    """Dual loss summed over successively max-pooled time scales, divided by the level count.

    Pooling halves the time axis (odd tails pass through) until one step
    remains, so L timestamps give ``ceil(log2 L) + 1`` levels. With
    ``hierarchical=False`` only the finest level is used. Returns
    ``(loss, levels)``.
    """
    _check(r, r_prime)
    loss = dual_loss(r, r_prime, symmetric, temporal, instance)
    levels = 1
    while hierarchical and r.shape[1] > 1:
        r = tc.maxpool1d_time(r, axis=1)
        r_prime = tc.maxpool1d_time(r_prime, axis=1)
        loss = tc.add(loss, dual_loss(r, r_prime, symmetric, temporal, instance))
        levels += 1
    return tc.mul(loss, 1.0 / levels), levels
