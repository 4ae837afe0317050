"""Minimal reverse-mode autodiff on numpy arrays.

Only the operations the synthesis pipeline needs are provided: elementwise
arithmetic with broadcasting, reductions, reshaping/slicing, ReLU, channel
concatenation, dilated 2D convolution and the Adam optimizer.

Graph nodes keep a closure that maps the output gradient to gradients of the
parents. Intermediate gradients live only for the duration of ``backward``;
leaves with ``requires_grad`` accumulate into ``.grad``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def abs(self):
        return tabs(self)

    def sqrt(self):
        return tsqrt(self)

    def square(self):
        return mul(self, self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else None))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


# elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _make(a.data + b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, sa), _unbroadcast(g * ad, sb)

    return _make(ad * bd, (a, b), bw)


def tabs(a: Tensor) -> Tensor:
    # sign(0) == 0 gives the zero subgradient at the kink
    s = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * s,))


def tsqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def bw(g):
        # derivative taken as 0 where the argument is exactly 0
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(out > 0, 0.5 / np.where(out > 0, out, 1), 0)
        return (g * d.astype(out.dtype),)

    return _make(out, (a,), bw)


def relu(t: Tensor) -> Tensor:
    t = as_tensor(t)
    mask = t.data > 0
    return _make(np.where(mask, t.data, 0).astype(t.dtype), (t,), lambda g: (g * mask,))


# shape -------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def getitem(a: Tensor, index) -> Tensor:
    src, dt = a.shape, a.dtype

    def bw(g):
        full = np.zeros(src, dtype=dt)
        np.add.at(full, index, g) if _is_advanced(index) else full.__setitem__(index, g)
        return (full,)

    return _make(a.data[index], (a,), bw)


def _is_advanced(index) -> bool:
    idx = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in idx)


def concat_channels(ts: Sequence[Tensor]) -> Tensor:
    """Concatenate [Ci, H, W] tensors along the channel axis."""
    ts = [as_tensor(t) for t in ts]
    if not ts:
        raise ValueError("concat_channels needs at least one tensor")
    hw = ts[0].shape[1:]
    for t in ts:
        if t.ndim != 3 or t.shape[1:] != hw:
            raise ValueError(f"spatial extents differ: {t.shape} vs {ts[0].shape}")
    if len(ts) == 1:
        return ts[0]
    sizes = [t.shape[0] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(ts)))

    return _make(np.concatenate([t.data for t in ts], axis=0), ts, bw)


# reductions --------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    src = a.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, src).copy(),)

    return _make(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), (a,), bw)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    src = a.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, src).astype(a.dtype),)

    return _make(np.asarray(a.data.mean(axis=axes, keepdims=keepdims)), (a,), bw)


# convolution -------------------------------------------------------------

@dataclass
class ConvLayer:
    weights: Tensor  # [out_ch, in_ch, kh, kw]
    bias: Tensor  # [out_ch]
    dilation: int = 1
    activation: str = "relu"

    def __post_init__(self):
        oc, ic, kh, kw = self.weights.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel extents must be odd, got {kh}x{kw}")
        if self.dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {self.dilation}")
        if self.bias.shape != (oc,):
            raise ValueError(f"bias shape {self.bias.shape} does not match out_ch={oc}")
        if self.activation not in ("relu", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_ch(self) -> int:
        return self.weights.shape[1]

    @property
    def out_ch(self) -> int:
        return self.weights.shape[0]


def _tap_ranges(off: int, n: int):
    # destination [lo, hi) receives source [lo + off, hi + off)
    lo, hi = max(0, -off), min(n, n - off)
    return lo, hi


def conv2d_raw(x: Tensor, w: Tensor, b: Tensor, dilation: int = 1) -> Tensor:
    """Cross-correlation with zero 'same' padding, no activation.

    Computed as one matmul of all taps against the input followed by a
    shifted accumulation of the tap planes, tap order fixed row-major.
    """
    if x.ndim != 3:
        raise ValueError(f"conv2d expects [C,H,W] input, got shape {x.shape}")
    oc, ic, kh, kw = w.shape
    c, h, wd = x.shape
    if c != ic:
        raise ValueError(f"conv2d: input has {c} channels, layer expects {ic}")
    d = dilation
    taps = [(i, j, d * (i - kh // 2), d * (j - kw // 2)) for i in range(kh) for j in range(kw)]
    xm = x.data.reshape(ic, h * wd)
    wm = w.data.transpose(2, 3, 0, 1).reshape(kh * kw * oc, ic)
    planes = (wm @ xm).reshape(kh * kw, oc, h, wd)
    out = np.empty((oc, h, wd), dtype=planes.dtype)
    out[:] = b.data.reshape(oc, 1, 1)
    for t, (_, _, oy, ox) in enumerate(taps):
        y0, y1 = _tap_ranges(oy, h)
        x0, x1 = _tap_ranges(ox, wd)
        if y0 < y1 and x0 < x1:
            out[:, y0:y1, x0:x1] += planes[t, :, y0 + oy:y1 + oy, x0 + ox:x1 + ox]

    def bw(g):
        gcol = np.zeros((kh * kw, oc, h, wd), dtype=g.dtype)
        for t, (_, _, oy, ox) in enumerate(taps):
            y0, y1 = _tap_ranges(oy, h)
            x0, x1 = _tap_ranges(ox, wd)
            if y0 < y1 and x0 < x1:
                gcol[t, :, y0 + oy:y1 + oy, x0 + ox:x1 + ox] = g[:, y0:y1, x0:x1]
        gcol = gcol.reshape(kh * kw * oc, h * wd)
        gx = gw = gb = None
        if x.requires_grad:
            gx = (wm.T @ gcol).reshape(ic, h, wd)
        if w.requires_grad:
            gw = (gcol @ xm.T).reshape(kh, kw, oc, ic).transpose(2, 3, 0, 1)
        if b.requires_grad:
            gb = g.sum(axis=(1, 2))
        return gx, gw, gb

    return _make(out, (x, w, b), bw)


def conv2d(x: Tensor, layer: ConvLayer) -> Tensor:
    out = conv2d_raw(x, layer.weights, layer.bias, layer.dilation)
    return relu(out) if layer.activation == "relu" else out


# backward ----------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
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


def backward(objective: Tensor, wrt: Sequence[Tensor] = ()) -> None:
    """Accumulate d(objective)/d(leaf) into ``.grad`` of every leaf.

    Tensors listed in ``wrt`` that the objective does not depend on get a
    zero gradient.
    """
    if objective.shape != ():
        raise ValueError(f"backward needs a scalar objective, got shape {objective.shape}")
    grads: dict[int, np.ndarray] = {}
    if objective.requires_grad:
        grads[id(objective)] = np.ones((), dtype=objective.dtype)
        for node in reversed(_topo_order(objective)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                k = id(p)
                grads[k] = pg if k not in grads else grads[k] + pg
    for t in wrt:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


# optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """Bias-corrected Adam, updating ``params`` in place."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ValueError(f"grad {i} has shape {g.shape}, param has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {i} ({p.name}); update aborted")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    elif len(state.m) != len(params):
        raise ValueError("optimizer state does not match parameter set")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p.data -= (state.lr * mhat / (np.sqrt(vhat) + state.epsilon)).astype(p.dtype)
    return state
