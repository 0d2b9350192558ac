"""Random overlapping crops and the two masked context views built from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import MaskPlan


@dataclass(frozen=True)
class CropPair:
    """Two half-open windows ``[a1, b1)`` and ``[a2, b2)`` overlapping on ``[a2, b1)``."""

    a1: int
    b1: int
    a2: int
    b2: int

    def __post_init__(self):
        if not (0 <= self.a1 <= self.a2 < self.b1 <= self.b2):
            raise ValueError(f"invalid crop pair {self}")

    @property
    def overlap(self) -> tuple[int, int]:
        return self.a2, self.b1

    @property
    def overlap_len(self) -> int:
        return self.b1 - self.a2

    def local_ranges(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """Overlap expressed in each view's own coordinates."""
        n = self.overlap_len
        return (self.a2 - self.a1, self.a2 - self.a1 + n), (0, n)

    @classmethod
    def full(cls, T: int) -> "CropPair":
        return cls(0, T, 0, T)


def sample_crop_pair(T: int, rng: np.random.Generator) -> CropPair:
    """Draw the overlap ``[a2, b1)`` first, then extend each view outward uniformly."""
    if T < 1:
        raise ValueError("series must have at least one timestamp")
    a2, b1 = np.sort(rng.choice(T + 1, size=2, replace=False))
    a1 = int(rng.integers(0, a2 + 1))
    b2 = int(rng.integers(b1, T + 1))
    return CropPair(a1, int(b1), int(a2), b2)


@dataclass
class Views:
    x1: np.ndarray
    x2: np.ndarray
    mask1: np.ndarray
    mask2: np.ndarray
    local1: tuple[int, int]
    local2: tuple[int, int]


def make_views(batch: np.ndarray, pair: CropPair, rng: np.random.Generator,
               masking: bool = True) -> Views:
    """Slice the two crops from a [B, T, F] batch and draw an independent
    timestamp mask for each (Bernoulli(0.5), or keep-all when ``masking`` is off)."""
    x1 = batch[:, pair.a1:pair.b1]
    x2 = batch[:, pair.a2:pair.b2]
    plan = MaskPlan("bernoulli_half" if masking else "all_ones")
    m1 = plan.build(x1.shape[0], x1.shape[1], rng)
    m2 = plan.build(x2.shape[0], x2.shape[1], rng)
    local1, local2 = pair.local_ranges()
    return Views(x1, x2, m1, m2, local1, local2)
