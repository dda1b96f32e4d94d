"""Dense tensors with reverse-mode differentiation.

numpy supplies the raw array arithmetic; this module adds graph recording
and the vector-Jacobian products for every primitive the model needs.
Double precision is the default so gradient checks have headroom; a
float32 mode exists behind ``set_default_dtype``.

Gradients accumulate by summation across backward calls and across
multiple uses of a tensor; callers zero them explicitly between steps.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, ContractError, ShapeError

_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715
_LN_EPS = 1e-5


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    if dtype not in (np.float64, np.float32):
        raise ConfigError(f"unsupported default dtype: {dtype!r}")
    _DEFAULT_DTYPE = dtype


def default_dtype():
    return _DEFAULT_DTYPE


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- autodiff core ------------------------------------------------------

    def backward(self) -> None:
        """Populate .grad on every requires_grad tensor reaching this scalar."""
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        if not self.requires_grad:
            raise ContractError("backward() on a tensor with no gradient path")

        topo: list[Tensor] = []
        seen = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        # Accumulation is out-of-place: vjp outputs may alias their input
        # gradient (or each other, as in add), so in-place += could corrupt
        # a sibling's pending buffer.
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.grad is None:
                # Leaves get their own buffer; callers treat .grad as owned.
                node.grad = np.array(g, copy=True) if node._vjp is None else g
            else:
                node.grad = node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in pending:
                    pending[id(parent)] = pending[id(parent)] + pg
                else:
                    pending[id(parent)] = pg

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def transpose(self, axes) -> "Tensor":
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple, vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape`` by summation."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ----------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(data, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _make(data, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _make(data, (a, b), vjp)


def texp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)
    return _make(data, (a,), lambda g: (g * data,))


def tlog(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def ttanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)
    return _make(data, (a,), lambda g: (g * (1.0 - data * data),))


def tsqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)
    return _make(data, (a,), lambda g: (g * 0.5 / data,))


def gelu(a) -> Tensor:
    """GELU with the tanh approximation used by standard ViT blocks."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * (x + _GELU_K * x2 * x))
    one_plus_t = 1.0 + t
    data = 0.5 * x * one_plus_t

    def vjp(g):
        # In-place chain; this vjp is on the training hot path.
        local = x2 * (3.0 * _GELU_K)
        local += 1.0
        local *= _GELU_C                 # d(inner)/dx
        tsq = t * t
        np.subtract(1.0, tsq, out=tsq)   # sech^2
        local *= tsq
        local *= x
        local += one_plus_t
        local *= 0.5
        local *= g
        return (local,)

    return _make(data, (a,), vjp)


def softplus(a) -> Tensor:
    """log(1 + exp(x)), overflow-safe in both directions."""
    a = as_tensor(a)
    data = np.logaddexp(0.0, a.data)

    def vjp(g):
        sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))
        return (g * sig,)

    return _make(data, (a,), vjp)


def clamp_max(a, cap: float) -> Tensor:
    """min(x, cap); zero gradient wherever the cap binds."""
    a = as_tensor(a)
    data = np.minimum(a.data, cap)
    mask = (a.data < cap).astype(a.data.dtype)
    return _make(data, (a,), lambda g: (g * mask,))


# -- shape manipulation ----------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape
    data = a.data.reshape(shape)
    return _make(data, (a,), lambda g: (g.reshape(old),))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    data = np.transpose(a.data, axes)
    return _make(data, (a,), lambda g: (np.transpose(g, inverse),))


def swap_axes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    perm = list(range(a.data.ndim))
    perm[ax1], perm[ax2] = perm[ax2], perm[ax1]
    return transpose(a, perm)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape
    data = np.broadcast_to(a.data, shape)
    return _make(data, (a,), lambda g: (_unbroadcast(g, old),))


def concat(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _make(data, tuple(tensors), vjp)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    if isinstance(idx, (np.ndarray, list)):
        raise ShapeError("only basic slicing is supported")
    data = a.data[idx]
    shape = a.data.shape

    def vjp(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[idx] = g
        return (full,)

    return _make(np.array(data, copy=True), (a,), vjp)


# -- reductions -------------------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(data, (a,), vjp)


def sorted_mean(a, axis: int) -> Tensor:
    """Mean over ``axis`` accumulated in value-sorted order.

    Sorting makes the reduction bit-identical under any permutation along
    the reduced axis; the gradient is the usual uniform 1/n either way.
    """
    a = as_tensor(a)
    n = a.data.shape[axis]
    data = np.sort(a.data, axis=axis).sum(axis=axis) / n
    shape = a.data.shape

    def vjp(g):
        g = np.expand_dims(g, axis) / n
        return (np.broadcast_to(g, shape).copy(),)

    return _make(data, (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        count = a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# -- linear algebra ----------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(
            f"matmul needs 2-d or higher operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner extents differ: {a.data.shape} @ {b.data.shape}"
        )
    data = a.data @ b.data

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _make(data, (a, b), vjp)


def linear(x, w, b) -> Tensor:
    """x @ w + b over the last axis, flattened to a single 2-D product."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(
            f"linear inner extents differ: {x.data.shape} @ {w.data.shape}"
        )
    lead = x.data.shape[:-1]
    d, h = w.data.shape
    x2 = np.ascontiguousarray(x.data.reshape(-1, d))
    data = (x2 @ w.data + b.data).reshape(*lead, h)

    def vjp(g):
        g2 = g.reshape(-1, h)
        gx = (g2 @ w.data.T).reshape(x.data.shape)
        gw = x2.T @ g2
        gb = g2.sum(axis=0)
        return gx, gw, gb

    return _make(data, (x, w, b), vjp)


def linear3(x, wq, bq, wk, bk, wv, bv):
    """Three projections of the same input in one GEMM; returns (q, k, v).

    Semantically identical to three linear() calls; exists because encoder
    self-attention calls this every block and the fused product is
    measurably faster at desk sizes.
    """
    x = as_tensor(x)
    parts = [as_tensor(t) for t in (wq, bq, wk, bk, wv, bv)]
    wq, bq, wk, bk, wv, bv = parts
    lead = x.data.shape[:-1]
    d, h = wq.data.shape
    w_all = np.concatenate([wq.data, wk.data, wv.data], axis=1)
    b_all = np.concatenate([bq.data, bk.data, bv.data])
    x2 = np.ascontiguousarray(x.data.reshape(-1, d))
    out = x2 @ w_all + b_all

    parents = (x, wq, bq, wk, bk, wv, bv)
    outs = []
    for i in range(3):
        chunk = out[:, i * h:(i + 1) * h].reshape(*lead, h)

        def vjp(g, i=i):
            g2 = g.reshape(-1, h)
            gx = (g2 @ parents[1 + 2 * i].data.T).reshape(x.data.shape)
            gw = x2.T @ g2
            gb = g2.sum(axis=0)
            grads = [gx, None, None, None, None, None, None]
            grads[1 + 2 * i] = gw
            grads[2 + 2 * i] = gb
            return tuple(grads)

        outs.append(_make(np.ascontiguousarray(chunk), parents, vjp))
    return tuple(outs)


# -- fused numeric primitives -------------------------------------------------


def softmax(a, axis: int = -1) -> Tensor:
    """Max-subtracted softmax; slices along ``axis`` sum to one."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - inner),)

    return _make(data, (a,), vjp)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    data = np.log(np.exp(a.data - m).sum(axis=axis, keepdims=True)) + m
    soft = np.exp(a.data - data)
    if not keepdims:
        data = data.squeeze(axis)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return _make(data, (a,), vjp)


def layer_norm(x, gain, bias, eps: float = _LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    dim = x.data.shape[-1]
    if dim < 2:
        raise ConfigError(f"layer_norm needs a feature axis of at least 2, got {dim}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    data = xhat * gain.data + bias.data

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        return dx, dgain, dbias

    return _make(data, (x, gain, bias), vjp)
