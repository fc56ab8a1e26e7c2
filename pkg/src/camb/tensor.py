"""Reverse-mode autodiff over float32 numpy arrays.

A Tensor wraps an ndarray and, while gradient recording is enabled, remembers
the operation that produced it. backward() walks the recorded graph once in
reverse topological order. The op set is fixed: conv2d, relu, max_pool2d,
global_avg_pool, linear, softmax, l2_normalize, elementwise add/mul, dot,
log, exp, sum/mean reductions, plus the plumbing (matmul, transpose,
row gather, clamp) the losses are built from.

Every op output is checked for NaN/Inf; non-finite values raise NumericError.
"""

from __future__ import annotations

import warnings
from contextlib import contextmanager
from typing import Optional

import numpy as np

from .errors import ContractError, NumericError, ShapeError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / metric loops)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _as_f32(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    return arr


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by op '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.astype(np.float32)


class Tensor:
    """Dense float32 array with optional gradient tracking.

    Leaf tensors created with requires_grad=True accumulate into .grad
    during backward(). Non-leaf tensors keep (parents, backward_fn) while
    recording is enabled.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f32(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self._op = "leaf"

    @classmethod
    def _from_op(cls, data: np.ndarray, parents, backward_fn, op: str) -> "Tensor":
        data = np.asarray(data, dtype=np.float32)
        if not data.flags["C_CONTIGUOUS"]:
            data = np.ascontiguousarray(data)
        _check_finite(data, op)
        out = cls(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward_fn
            out._op = op
        return out

    # -- introspection ----------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op})"

    # -- autodiff ---------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar output.

        Populates .grad on every reachable leaf with requires_grad=True.
        Leaves off the path keep grad=None; callers treat that as zero.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar output, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    acc = grads.get(id(parent))
                    grads[id(parent)] = pg if acc is None else acc + pg
            elif node.requires_grad and not node._parents:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __sub__(self, other):
        return add(self, mul(_coerce(other), Tensor(-1.0)))

    def __rsub__(self, other):
        return add(_coerce(other), mul(self, Tensor(-1.0)))

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul(self, Tensor(1.0 / float(other)))
        raise ShapeError("tensor division only supports python scalars")

    def __matmul__(self, other):
        return matmul(self, _coerce(other))

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


# -- elementwise and reductions -------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor._from_op(out, (a, b), backward, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return Tensor._from_op(out, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(out, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {a.shape}")
    out = a.data.T

    def backward(g):
        return (g.T,)

    return Tensor._from_op(out, (a,), backward, "transpose")


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Scalar inner product of two same-shaped tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"dot expects matching shapes, got {a.shape} and {b.shape}")
    out = np.array(np.vdot(a.data, b.data), dtype=np.float32)

    def backward(g):
        return g * b.data, g * a.data

    return Tensor._from_op(out, (a, b), backward, "dot")


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def backward(g):
        return (g * (a.data > 0.0),)

    return Tensor._from_op(out, (a,), backward, "relu")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return Tensor._from_op(out, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericError("log of non-positive value")
    out = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return Tensor._from_op(out, (a,), backward, "log")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient passes only where a >= floor."""
    out = np.maximum(a.data, np.float32(floor))

    def backward(g):
        return (g * (a.data >= floor),)

    return Tensor._from_op(out, (a,), backward, "clamp_min")


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float32)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).astype(np.float32),)

    return Tensor._from_op(np.asarray(out), (a,), backward, "sum")


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[i] for i in axis]))
    else:
        count = a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), Tensor(1.0 / count))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return Tensor._from_op(out, (a,), backward, "softmax")


def l2_normalize(a: Tensor, axis: int = -1) -> Tensor:
    """Rows scaled to unit Euclidean norm; zero rows pass through as zeros."""
    norm = np.sqrt((a.data.astype(np.float64) ** 2).sum(axis=axis, keepdims=True))
    zero_rows = norm == 0.0
    if zero_rows.any():
        warnings.warn("l2_normalize: zero-norm input left as zeros", RuntimeWarning)
    safe = np.where(zero_rows, 1.0, norm).astype(np.float32)
    out = a.data / safe

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        ga = (g - out * inner) / safe
        return (np.where(zero_rows, 0.0, ga).astype(np.float32),)

    return Tensor._from_op(out, (a,), backward, "l2_normalize")


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows a[indices]; backward scatter-adds into the source rows."""
    idx = np.asarray(indices, dtype=np.int64)
    out = a.data[idx]

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return Tensor._from_op(out, (a,), backward, "gather_rows")


# -- spatial ops ------------------------------------------------------------


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    hp, wp = x.shape[2], x.shape[3]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]  # (n, c, ho, wo, kh, kw)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(cols: np.ndarray, x_shape, kh, kw, stride, pad, ho, wo) -> np.ndarray:
    n, c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    xg = np.zeros((n, c, hp, wp), dtype=np.float32)
    cols = cols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    for i in range(kh):
        for j in range(kw):
            xg[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[
                :, :, :, :, i, j
            ]
    if pad:
        xg = xg[:, :, pad : pad + h, pad : pad + w]
    return xg


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution, NCHW input, OIHW kernel, im2col-backed."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input/kernel, got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    co, ci, kh, kw = weight.shape
    if ci != c:
        raise ShapeError(f"conv2d channel mismatch: input {c}, kernel {ci}")
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise ShapeError("conv2d kernel larger than padded input")
    cols, ho, wo = _im2col(x.data, kh, kw, stride, pad)
    wmat = weight.data.reshape(co, ci * kh * kw)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(n, ho, wo, co).transpose(0, 3, 1, 2)

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, co)
        gw = (gmat.T @ cols).reshape(co, ci, kh, kw)
        gcols = gmat @ wmat
        gx = _col2im(gcols, x.shape, kh, kw, stride, pad, ho, wo)
        if bias is None:
            return gx, gw
        return gx, gw, gmat.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward, "conv2d")


def max_pool2d(x: Tensor, kernel: int, stride: Optional[int] = None) -> Tensor:
    """Max pooling over kernel x kernel windows; ties route gradient to the
    first maximum in raster order."""
    if stride is None:
        stride = kernel
    if x.ndim != 4:
        raise ShapeError(f"max_pool2d expects 4-D input, got {x.shape}")
    n, c, h, w = x.shape
    if kernel > h or kernel > w:
        raise ShapeError("max_pool2d kernel larger than input")
    windows = np.lib.stride_tricks.sliding_window_view(x.data, (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]
    ho, wo = windows.shape[2], windows.shape[3]
    flat = windows.reshape(n, c, ho, wo, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gx = np.zeros((n, c, h, w), dtype=np.float32)
        ki, kj = np.unravel_index(arg.reshape(-1), (kernel, kernel))
        ni, ci_, oi, oj = np.indices((n, c, ho, wo)).reshape(4, -1)
        rows = oi * stride + ki
        cols_ = oj * stride + kj
        np.add.at(gx, (ni, ci_, rows, cols_), g.reshape(-1))
        return (gx,)

    return Tensor._from_op(out, (x,), backward, "max_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C) spatial mean."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects 4-D input, got {x.shape}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), dtype=np.float32)

    def backward(g):
        gx = np.broadcast_to(g[:, :, None, None] / (h * w), x.shape)
        return (gx.astype(np.float32),)

    return Tensor._from_op(out, (x,), backward, "global_avg_pool")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight.T + bias, the (in, out) layer convention used by the heads."""
    out = matmul(x, transpose(weight))
    if bias is not None:
        out = add(out, bias)
    return out
