"""Minimal dense-array engine with reverse-mode differentiation.

Only the operations needed by the encoder and the contrastive losses are
provided. Arrays are numpy ndarrays; a :class:`Tensor` wraps one together
with its gradient accumulator and the closure that propagates gradients to
its parents.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """A node in a computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Propagate gradients from this node to every leaf that requires them.

        Gradients accumulate into ``.grad``; calling twice without zeroing
        doubles them.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _toposort(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(_as_tensor(other, self.dtype), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by constants")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data: np.ndarray, parents: Sequence[Tensor],
            backward: Callable[[np.ndarray], Iterable[np.ndarray | None]]) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    """Sum of two tensors (or a tensor and a constant array).

    Broadcasting is limited to numpy's rules; gradients are summed back to
    each operand's shape.
    """
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _result(a.data + b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape

    def backward(g):
        ga = _unbroadcast(g * b.data, sa) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, sb) if b.requires_grad else None
        return ga, gb

    return _result(a.data * b.data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (leading axes must agree)."""
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return _result(a.data @ b.data, (a, b), backward)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    return _result(np.swapaxes(a.data, ax1, ax2), (a,),
                   lambda g: (np.swapaxes(g, ax1, ax2),))


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))
    return _result(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                   lambda g: (g.transpose(inverse),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def slice_axis(a: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    """Contiguous slice ``[start, stop)`` along one axis."""
    axis = axis % a.data.ndim
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    src_shape, dtype = a.shape, a.dtype

    def backward(g):
        full = np.zeros(src_shape, dtype=dtype)
        full[idx] = g
        return (full,)

    return _result(a.data[idx], (a,), backward)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    src = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _result(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis), 1.0 / n)


# ---------------------------------------------------------------------------
# layer ops
# ---------------------------------------------------------------------------

def affine(x: Tensor, W: Tensor, b: Tensor | None) -> Tensor:
    """``out[..., t, :] = W @ x[..., t, :] + b`` for every leading index.

    x has shape ``[..., F]``, W ``[F', F]``, b ``[F']``.
    """
    if W.data.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ValueError(f"affine dimension mismatch: x{x.shape} vs W{W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise ValueError(f"affine dimension mismatch: b{b.shape} vs W{W.shape}")
    out = x.data @ W.data.T
    if b is not None:
        out = out + b.data

    def backward(g):
        gx = g @ W.data if x.requires_grad else None
        gW = None
        if W.requires_grad:
            gW = g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if b is not None and b.requires_grad else None
        return (gx, gW, gb) if b is not None else (gx, gW)

    parents = (x, W, b) if b is not None else (x, W)
    return _result(out, parents, backward)


def pointwise(x: Tensor, W: Tensor, b: Tensor | None) -> Tensor:
    """Channel mixing of a channels-first ``[C, ..., T]`` tensor: ``W @ x + b`` per position."""
    if W.data.ndim != 2 or x.shape[0] != W.shape[1]:
        raise ValueError(f"pointwise dimension mismatch: x{x.shape} vs W{W.shape}")
    C, rest = x.shape[0], x.shape[1:]
    x2 = x.data.reshape(C, -1)
    out = W.data @ x2
    if b is not None:
        out += b.data[:, None]

    def backward(g):
        g2 = g.reshape(W.shape[0], -1)
        gx = (W.data.T @ g2).reshape(x.shape) if x.requires_grad else None
        gW = g2 @ x2.T if W.requires_grad else None
        gb = g2.sum(axis=1) if b is not None and b.requires_grad else None
        return (gx, gW, gb) if b is not None else (gx, gW)

    parents = (x, W, b) if b is not None else (x, W)
    return _result(out.reshape((W.shape[0],) + rest), parents, backward)


def conv1d_dilated(x: Tensor, k: Tensor, dilation: int, bias: Tensor | None = None) -> Tensor:
    """Length-preserving dilated convolution with a width-3 kernel.

    x is ``[C_in, T]`` or channels-first batched ``[C_in, B, T]``; k is
    ``[C_out, C_in, 3]``. The time axis is zero-padded by ``dilation`` on
    both sides so tap ``j`` reads ``x[..., t + (j - 1) * dilation]``.
    """
    if not isinstance(dilation, (int, np.integer)) or dilation < 1:
        raise ValueError(f"dilation must be a positive integer, got {dilation!r}")
    if k.data.ndim != 3 or k.shape[2] != 3:
        raise ValueError(f"kernel must have shape [C_out, C_in, 3], got {k.shape}")
    xd = x.data
    if xd.ndim not in (2, 3) or k.shape[1] != xd.shape[0]:
        raise ValueError(f"conv1d channel mismatch: x{x.shape} vs k{k.shape}")
    C, T = xd.shape[0], xd.shape[-1]
    mid = xd.shape[1:-1]
    O = k.shape[0]
    d = int(dilation)
    xp = np.zeros(xd.shape[:-1] + (T + 2 * d,), dtype=xd.dtype)
    xp[..., d:d + T] = xd
    cols = np.concatenate([xp[..., j * d:j * d + T] for j in range(3)], axis=0)
    cols2 = cols.reshape(3 * C, -1)
    W2 = k.data.transpose(0, 2, 1).reshape(O, 3 * C)
    out = W2 @ cols2
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape((O,) + mid + (T,))

    def backward(g):
        g2 = g.reshape(O, -1)
        gx = gk = gb = None
        if k.requires_grad:
            gk = (g2 @ cols2.T).reshape(O, 3, C).transpose(0, 2, 1)
        if x.requires_grad:
            gcols = (W2.T @ g2).reshape((3 * C,) + mid + (T,))
            gx = gcols[C:2 * C].copy()
            if d < T:
                # left tap reads t - d, right tap reads t + d
                gx[..., :T - d] += gcols[:C, ..., d:]
                gx[..., d:] += gcols[2 * C:, ..., :T - d]
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=1)
        return (gx, gk, gb) if bias is not None else (gx, gk)

    parents = (x, k, bias) if bias is not None else (x, k)
    return _result(out, parents, backward)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``0.5 * x * (1 + erf(x / sqrt(2)))``."""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return _result(x.data * cdf, (x,), backward)


def maxpool1d_time(x: Tensor, axis: int = -1) -> Tensor:
    """Non-overlapping max over pairs along ``axis``; odd tails pass through.

    Output length is ``ceil(T / 2)``. Gradient goes to the earliest maximum.
    """
    axis = axis % x.data.ndim
    xd = np.moveaxis(x.data, axis, -1)
    T = xd.shape[-1]
    n_pairs = T // 2
    even = xd[..., 0:2 * n_pairs:2]
    odd = xd[..., 1:2 * n_pairs:2]
    take_odd = odd > even  # ties keep the earlier index
    pooled = np.where(take_odd, odd, even)
    if T % 2:
        pooled = np.concatenate([pooled, xd[..., -1:]], axis=-1)
    out = np.moveaxis(pooled, -1, axis)

    def backward(g):
        gm = np.moveaxis(g, axis, -1)
        gx = np.zeros(xd.shape, dtype=xd.dtype)
        gp = gm[..., :n_pairs]
        gx[..., 0:2 * n_pairs:2] = np.where(take_odd, 0, gp)
        gx[..., 1:2 * n_pairs:2] = np.where(take_odd, gp, 0)
        if T % 2:
            gx[..., -1] = gm[..., -1]
        return (np.moveaxis(gx, -1, axis),)

    return _result(out, (x,), backward)


def logsumexp(values: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted ``log(sum(exp(v)))`` along ``axis`` (axis is removed).

    Entries equal to ``-inf`` contribute nothing, which is how excluded
    terms are expressed by callers. NaN or +inf inputs propagate to a
    non-finite result so that callers can detect divergence.
    """
    v = values.data
    if v.shape[axis] == 0:
        raise ValueError("logsumexp of an empty input")
    m = np.max(v, axis=axis, keepdims=True)
    if np.any(m == -np.inf):
        raise ValueError("logsumexp needs at least one finite entry per reduction")
    if not np.all(np.isfinite(m)):
        m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(v - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(s), axis=axis)

    def backward(g):
        return (np.expand_dims(g, axis) * (e / s),)

    return _result(out, (values,), backward)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               max_coords: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Largest relative error between reverse-mode and central-difference gradients.

    ``f`` rebuilds the graph from the current contents of ``params`` and
    returns a scalar Tensor. The error of a coordinate is
    ``|a - n| / max(|a|, |n|, 1e-3 * s)`` where ``s`` is the largest gradient
    magnitude of that parameter, so coordinates whose true gradient is ~0 do
    not blow up the ratio. With ``max_coords`` set, only that many randomly
    chosen coordinates per parameter are probed.
    """
    for p in params:
        p.zero_grad()
    out = f()
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError(f"grad_check: f is not finite at the probe point ({out.data})")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(flat.size, max_coords, replace=False)
        numeric = np.empty(len(coords))
        for n, i in enumerate(coords):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f().data)
            flat[i] = orig - eps
            fm = float(f().data)
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise FloatingPointError(f"grad_check: f is not finite near coordinate {i}")
            numeric[n] = (fp - fm) / (2 * eps)
        a = ga.reshape(-1)[coords]
        scale = max(np.max(np.abs(a)), np.max(np.abs(numeric)), 1e-8)
        err = np.abs(a - numeric) / np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-3 * scale)
        worst = max(worst, float(err.max(initial=0.0)))
    return worst
