"""Dilated convolutional encoder mapping a series to per-timestamp vectors.

Pipeline: input projection -> timestamp masking -> ``depth`` residual blocks
(GELU, dilated conv, GELU, dilated conv, dilation ``2**l``) -> an output
residual block to ``output_dims`` channels. Parameters live in an ordered
dict of name -> Tensor so they can be checkpointed by name.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from . import tensor_core as tc
from .tensor_core import Tensor

EncoderParams = dict[str, Tensor]

MaskMode = Literal["bernoulli_half", "all_ones", "all_zeros", "mask_last", "custom"]

CKPT_MAGIC = b"TS2V"
CKPT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    input_dims: int
    hidden_dims: int = 64
    output_dims: int = 320
    depth: int = 10
    kernel_size: int = 3
    input_projection: bool = True

    def __post_init__(self):
        for field in ("input_dims", "hidden_dims", "output_dims", "depth"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1")
        if self.kernel_size != 3:
            raise ValueError("only kernel_size=3 is supported")

    @property
    def dilations(self) -> list[int]:
        """Dilation of each hidden block followed by the output block."""
        return [2 ** l for l in range(self.depth + 1)]

    @property
    def receptive_radius(self) -> int:
        """How far (in timestamps) an output can see to either side."""
        return sum(2 * d for d in self.dilations)


@dataclass(frozen=True)
class MaskPlan:
    mode: MaskMode = "all_ones"
    custom: np.ndarray | None = None

    def build(self, B: int, T: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """Boolean keep-mask of shape [B, T] (True = timestamp kept)."""
        if self.mode == "all_ones":
            return np.ones((B, T), dtype=bool)
        if self.mode == "all_zeros":
            return np.zeros((B, T), dtype=bool)
        if self.mode == "mask_last":
            m = np.ones((B, T), dtype=bool)
            m[:, -1] = False
            return m
        if self.mode == "bernoulli_half":
            if rng is None:
                raise ValueError("bernoulli_half masking needs an rng")
            return rng.random((B, T)) < 0.5
        if self.mode == "custom":
            m = np.asarray(self.custom, dtype=bool)
            if m.ndim == 1:
                m = np.broadcast_to(m, (B, m.shape[0]))
            if m.shape != (B, T):
                raise ValueError(f"custom mask shape {m.shape} does not match batch ({B}, {T})")
            return m
        raise ValueError(f"unknown mask mode {self.mode!r}")


ALL_ONES = MaskPlan("all_ones")
ALL_ZEROS = MaskPlan("all_zeros")
MASK_LAST = MaskPlan("mask_last")
BERNOULLI = MaskPlan("bernoulli_half")


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def separating_bias(W: np.ndarray, scale: float = 0.1) -> np.ndarray:
    """A bias orthogonal to the column space of ``W``.

    For such ``b``, ``||W x + b|| >= ||b|| > 0`` for every ``x``, so a projected
    observation can never coincide with the all-zero mask token.
    Requires more rows than columns.
    """
    Fp, F = W.shape
    if Fp <= F:
        raise ValueError(f"need output dims > input dims to separate, got W{W.shape}")
    q, _ = np.linalg.qr(W.astype(np.float64))
    v = np.ones(Fp)
    v_perp = v - q @ (q.T @ v)
    if np.linalg.norm(v_perp) < 1e-6:
        v = np.arange(1, Fp + 1, dtype=np.float64)
        v_perp = v - q @ (q.T @ v)
    return scale * np.sqrt(Fp) * v_perp / np.linalg.norm(v_perp)


def init_params(config: EncoderConfig, seed: int, dtype=np.float32) -> EncoderParams:
    rng = np.random.default_rng(seed)
    params: EncoderParams = {}

    def put(name, arr):
        params[name] = Tensor(arr.astype(dtype), requires_grad=True, name=name)

    H = config.hidden_dims
    if config.input_projection:
        W = _uniform(rng, (H, config.input_dims), config.input_dims, np.float64)
        put("proj.W", W)
        if H > config.input_dims:
            put("proj.b", separating_bias(W))
        else:
            put("proj.b", np.full(H, 0.1))
        in_ch = H
    else:
        in_ch = config.input_dims

    channels = [H] * config.depth + [config.output_dims]
    names = [f"blocks.{l}" for l in range(config.depth)] + ["out"]
    for name, out_ch in zip(names, channels):
        put(f"{name}.conv1.weight", _uniform(rng, (out_ch, in_ch, 3), 3 * in_ch, np.float64))
        put(f"{name}.conv1.bias", np.zeros(out_ch))
        put(f"{name}.conv2.weight", _uniform(rng, (out_ch, out_ch, 3), 3 * out_ch, np.float64))
        put(f"{name}.conv2.bias", np.zeros(out_ch))
        if in_ch != out_ch:
            put(f"{name}.skip.weight", _uniform(rng, (out_ch, in_ch), in_ch, np.float64))
            put(f"{name}.skip.bias", np.zeros(out_ch))
        in_ch = out_ch
    return params


def config_from_params(params: EncoderParams) -> EncoderConfig:
    """Recover the architecture from parameter names and shapes."""
    depth = len({k.split(".")[1] for k in params if k.startswith("blocks.")})
    out_w = params["out.conv2.weight"]
    if "proj.W" in params:
        hidden, input_dims = params["proj.W"].shape
        projection = True
    else:
        first = params["blocks.0.conv1.weight"] if depth else params["out.conv1.weight"]
        input_dims = first.shape[1]
        hidden = params["blocks.0.conv1.weight"].shape[0] if depth else input_dims
        projection = False
    return EncoderConfig(input_dims=int(input_dims), hidden_dims=int(hidden),
                         output_dims=int(out_w.shape[0]), depth=depth,
                         input_projection=projection)


def _missing_rows(x: np.ndarray) -> np.ndarray:
    return np.isnan(x).any(axis=-1)


def project_input(params: EncoderParams, x: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Affine projection of each observation; returns (latent, observed-mask).

    NaN observations are replaced by zeros before projection and reported
    as unobserved so the masking stage zeroes them.
    """
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[None]
    observed = ~_missing_rows(x)
    dtype = next(iter(params.values())).dtype
    x0 = np.where(np.isnan(x), 0.0, x).astype(dtype)
    if "proj.W" not in params:
        return Tensor(x0), observed
    W = params["proj.W"]
    if x0.shape[-1] != W.shape[1]:
        raise ValueError(f"input has F={x0.shape[-1]} features but the encoder expects F={W.shape[1]}")
    return tc.affine(Tensor(x0), W, params["proj.b"]), observed


def apply_mask(latent: Tensor, mask: np.ndarray) -> Tensor:
    """Zero the latent vectors of masked timestamps. ``mask`` is [B, T], True = keep."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != latent.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match latent {latent.shape[:2]}")
    return tc.mul(latent, mask[..., None].astype(latent.dtype))


def _block(params: EncoderParams, name: str, h: Tensor, dilation: int) -> Tensor:
    # h is channels-first [C, B, T]
    skip_w = params.get(f"{name}.skip.weight")
    if skip_w is None:
        residual = h
    else:
        residual = tc.pointwise(h, skip_w, params[f"{name}.skip.bias"])
    y = tc.conv1d_dilated(tc.gelu(h), params[f"{name}.conv1.weight"], dilation,
                          params[f"{name}.conv1.bias"])
    y = tc.conv1d_dilated(tc.gelu(y), params[f"{name}.conv2.weight"], dilation,
                          params[f"{name}.conv2.bias"])
    return tc.add(y, residual)


def encode(params: EncoderParams, x: np.ndarray, plan: MaskPlan = ALL_ONES,
           rng: np.random.Generator | None = None) -> Tensor:
    """Per-timestamp representations, shape [B, T, K].

    ``x`` is a [B, T, F] (or [T, F]) array that may contain NaNs.
    """
    latent, observed = project_input(params, x)
    B, T = latent.shape[:2]
    if T < 1:
        raise ValueError("encode needs at least one timestamp")
    keep = plan.build(B, T, rng) & observed
    h = tc.transpose(apply_mask(latent, keep), (2, 0, 1))  # [C, B, T]
    depth = len({k.split(".")[1] for k in params if k.startswith("blocks.")})
    for l in range(depth):
        h = _block(params, f"blocks.{l}", h, 2 ** l)
    h = _block(params, "out", h, 2 ** depth)
    return tc.transpose(h, (1, 2, 0))


def encode_numpy(params: EncoderParams, x: np.ndarray, plan: MaskPlan = ALL_ONES,
                 batch_size: int = 64) -> np.ndarray:
    """Gradient-free encoding of a [N, T, F] array, chunked over N."""
    frozen = {k: Tensor(v.data) for k, v in params.items()}
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[None]
    out = [encode(frozen, x[i:i + batch_size], plan).data for i in range(0, len(x), batch_size)]
    return np.concatenate(out, axis=0)


def default_context(params: EncoderParams, max_context: int = 3000) -> int:
    """Smallest window that makes the last-step representation exact, capped at ``max_context``."""
    return min(max_context, config_from_params(params).receptive_radius + 1)


def sliding_last_repr(params: EncoderParams, x: np.ndarray, context: int,
                      plan: MaskPlan = ALL_ONES, batch_size: int = 256) -> np.ndarray:
    """Representation of the last timestamp of every prefix of a [T, F] series.

    Row ``t`` encodes the window ``x[t-context+1 : t+1]``; positions before the
    series start are treated as missing. The window is exact whenever
    ``context > receptive_radius``. Returns [T, K].
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    T, F = x.shape
    padded = np.concatenate([np.full((context - 1, F), np.nan), x], axis=0)
    windows = np.lib.stride_tricks.sliding_window_view(padded, context, axis=0)  # [T, F, C]
    frozen = {k: Tensor(v.data) for k, v in params.items()}
    out = []
    for i in range(0, T, batch_size):
        w = np.ascontiguousarray(windows[i:i + batch_size].transpose(0, 2, 1))
        out.append(encode(frozen, w, plan).data[:, -1, :])
    return np.concatenate(out, axis=0)


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------

def params_to_bytes(params: EncoderParams) -> bytes:
    """Serialize: magic, u32 version, u32 count, then per parameter
    u16 name length, UTF-8 name, u8 ndims, u32 dims, float32 payload (all little-endian)."""
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<II", CKPT_VERSION, len(params)))
    for name, t in params.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        arr = np.ascontiguousarray(t.data, dtype="<f4")
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def params_from_bytes(blob: bytes, dtype=np.float32) -> EncoderParams:
    if blob[:4] != CKPT_MAGIC:
        raise ValueError("not a checkpoint: bad magic bytes")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12
    params: EncoderParams = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + n].decode("utf-8")
        off += n
        (nd,) = struct.unpack_from("<B", blob, off)
        off += 1
        dims = struct.unpack_from(f"<{nd}I", blob, off)
        off += 4 * nd
        size = int(np.prod(dims)) if nd else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(dims)
        off += 4 * size
        params[name] = Tensor(arr.astype(dtype), requires_grad=True, name=name)
    if off != len(blob):
        raise ValueError("trailing bytes after last parameter")
    return params


def save_params(params: EncoderParams, path: str | Path) -> None:
    Path(path).write_bytes(params_to_bytes(params))


def load_params(path: str | Path, dtype=np.float32) -> EncoderParams:
    return params_from_bytes(Path(path).read_bytes(), dtype=dtype)
