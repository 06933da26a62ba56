"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a C-ordered numpy array.  Every op applied to a tensor
that requires gradients records its operands together with a closure mapping
the output gradient to operand gradients.  :func:`backward` walks the recorded
graph in reverse topological order and accumulates gradients into the leaves,
which for a dense layer reproduces the usual error recursion
``delta_i = (delta_{i+1} W_{i+1}) * phi_i'(z_i)``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, InternalError, NonFiniteError

ANALYSIS = np.float64
TRAINING = np.float32

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def precision_dtype(precision: str) -> type:
    if precision == "analysis":
        return ANALYSIS
    if precision == "training":
        return TRAINING
    raise ContractError(f"unknown precision {precision!r} (expected 'analysis' or 'training')")


class Tensor:
    """n-dimensional real array that can take part in a recorded graph."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.array(data, dtype=dtype, copy=True, order="C")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(ANALYSIS)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.name = None
        t.op = "leaf"
        t._parents = ()
        t._backward = None
        return t

    # -- introspection ---------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> dict:
        return backward(self, grad)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor._wrap(np.asarray(x, dtype=like.dtype))


def record(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Wrap an op result, check it is finite, and link it into the graph.

    ``backward_fn`` maps the output gradient to a tuple with one entry per
    parent (``None`` for parents that need no gradient).
    """
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op}: produced non-finite values (shape {np.shape(data)})")
    data = np.asarray(data)
    if not data.flags.c_contiguous:
        data = data.copy(order="C")
    out = Tensor._wrap(data)
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- graph ----------------------------------------------------------------

class Graph:
    """Recorded operations reachable from ``output``, in topological order.

    Every node appears after all of its operands.
    """

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes = _topological(output)

    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if n.is_leaf and n.requires_grad]

    def __len__(self) -> int:
        return len(self.nodes)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    stack = [(root, 0)]
    while stack:
        node, i = stack.pop()
        if i == 0:
            if state.get(id(node)) == 2:
                continue
            state[id(node)] = 1
        if i < len(node._parents):
            stack.append((node, i + 1))
            parent = node._parents[i]
            s = state.get(id(parent))
            if s == 1:
                raise InternalError("cycle detected in computation graph")
            if s is None and parent.requires_grad:
                stack.append((parent, 0))
        else:
            state[id(node)] = 2
            order.append(node)
    return order


def backward(loss, grad=None, retain_graph: bool = False) -> dict:
    """Back-propagate from a scalar ``loss``.

    Returns a dict mapping each differentiable leaf to its gradient array and
    also accumulates into ``leaf.grad``.  ``loss`` may be a :class:`Graph`.
    """
    graph = loss if isinstance(loss, Graph) else Graph(loss)
    root = graph.output
    if grad is None:
        if root.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {root.shape}")
        grad = np.ones_like(root.data)
    else:
        grad = np.asarray(grad, dtype=root.dtype).reshape(root.shape)
    if not root.requires_grad:
        return {}
    grads: dict[int, np.ndarray] = {id(root): grad}
    result: dict[Tensor, np.ndarray] = {}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            result[node] = g
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        if not retain_graph:
            node._backward = None
            node._parents = ()
    return result


def grad(loss: Tensor, inputs: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of ``loss`` with respect to ``inputs`` (zeros when unused)."""
    inputs = list(inputs)
    saved = [t.grad for t in inputs]
    for t in inputs:
        t.grad = None
    got = backward(loss)
    out = [got.get(t, np.zeros_like(t.data)) for t in inputs]
    for t, s in zip(inputs, saved):
        t.grad = s
    return out


# -- elementwise ----------------------------------------------------------

def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return record(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return record(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)

    def bw(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return record(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)
    out = a.data / b.data

    def bw(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return record(out, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    return record(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    if isinstance(exponent, Tensor):
        raise ContractError("power supports a constant exponent only")
    p = exponent

    def bw(g):
        return (g * p * a.data ** (p - 1),)

    return record(a.data ** p, (a,), bw, "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return record(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return record(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return record(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return record(out, (a,), lambda g: (g * (1 - out * out),), "tanh")


def absolute(a: Tensor) -> Tensor:
    # subgradient 0 at the origin
    return record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def clamp_min(a: Tensor, lo: float) -> Tensor:
    """``max(a, lo)`` with zero gradient where the clamp is active (ties included)."""
    mask = a.data > lo
    return record(np.where(mask, a.data, lo).astype(a.dtype), (a,), lambda g: (g * mask,), "clamp_min")


def where(cond, a: Tensor, b: Tensor) -> Tensor:
    cond = np.asarray(cond, dtype=bool)
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)

    def bw(g):
        return unbroadcast(np.where(cond, g, 0), a.shape), unbroadcast(np.where(cond, 0, g), b.shape)

    return record(np.where(cond, a.data, b.data), (a, b), bw, "where")


# -- reductions and shape -------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record(np.asarray(out), (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return record(np.asarray(out, dtype=a.dtype), (a,), bw, "mean")


def reshape(a: Tensor, shape) -> Tensor:
    return record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else tuple(np.argsort(axes))
    return record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def take(a: Tensor, index) -> Tensor:
    """Basic or advanced indexing; gradients scatter-add back."""
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return record(np.array(out), (a,), bw, "index")


def l2norm(a: Tensor, axis=-1) -> Tensor:
    """Euclidean norm along ``axis``; subgradient 0 where the norm vanishes."""
    out = np.sqrt((a.data * a.data).sum(axis=axis))

    def bw(g):
        denom = np.expand_dims(out, axis)
        safe = np.where(denom > 0, denom, 1)
        return (np.expand_dims(g, axis) * np.where(denom > 0, a.data / safe, 0),)

    return record(out, (a,), bw, "l2norm")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return record(out, (a,), bw, "log_softmax")


def normalize(x: Tensor, axes, eps: float) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Zero-mean unit-variance over ``axes`` with the biased 1/m variance.

    Returns the normalized tensor together with the mean and variance arrays
    (kept-dims) so callers can maintain running statistics.
    """
    axes = _norm_axes(axes, x.ndim)
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        gm = g.mean(axis=axes, keepdims=True)
        gx = (g * xhat).mean(axis=axes, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return record(xhat, (x,), bw, "normalize"), mu, var


# -- linear algebra -------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = as_tensor(a)
    b = _lift(b, a)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return record(a.data @ b.data, (a, b), bw, "matmul")


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Patches of a padded NCHW array as rows: (N*Ho*Wo, C*kh*kw)."""
    n, c = xp.shape[:2]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of an NCHW input with an FCkk kernel, zero padding.

    Output shape is ``(N, F, (H + 2p - kh) // stride + 1, (W + 2p - kw) // stride + 1)``.
    """
    x = as_tensor(x)
    kernel = _lift(kernel, x)
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {kernel.shape}")
    if stride < 1 or padding < 0:
        raise ContractError(f"conv2d: stride must be >= 1 and padding >= 0 (got {stride}, {padding})")
    n, c, h, w = x.shape
    f, kc, kh, kw = kernel.shape
    if kc != c:
        raise DimensionError(f"conv2d: input has {c} channels but kernel {kernel.shape} expects {kc}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError(f"conv2d: kernel {kernel.shape} larger than padded input {x.shape}")
    if bias is not None:
        bias = _lift(bias, x)
        if bias.shape != (f,):
            raise DimensionError(f"conv2d: bias shape {bias.shape} does not match {f} filters")
    if stride == 1:
        out, bw = _conv_shifted(x, kernel, bias, padding)
    else:
        out, bw = _conv_im2col(x, kernel, bias, stride, padding)
    parents = (x, kernel, bias) if bias is not None else (x, kernel)
    return record(out, parents, bw, "conv2d")


def _conv_im2col(x, kernel, bias, stride, padding):
    n, c, h, w = x.shape
    f, _, kh, kw = kernel.shape
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    wmat = kernel.data.reshape(f, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    def bw(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
        gk = (g2.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, ho, wo, c, kh, kw)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        return (gx, gk, gb) if bias is not None else (gx, gk)

    return out, bw


def _conv_shifted(x, kernel, bias, padding):
    """Stride-1 convolution as one GEMM per kernel tap.

    The zero-padded input is stored channels-last and flattened to a
    ``(N * P, C)`` matrix, ``P`` being the padded image size plus one spare
    row.  Output row ``r`` then needs input rows ``r + i * Wp + j`` for tap
    ``(i, j)``, so every tap is a contiguous slice and no patch matrix is
    materialized.  Rows that fall in the padding columns are computed and
    discarded.
    """
    n, c, h, w = x.shape
    f, _, kh, kw = kernel.shape
    hp, wp = h + 2 * padding, w + 2 * padding
    ho, wo = hp - kh + 1, wp - kw + 1
    per = (hp + 1) * wp
    span = (kh - 1) * wp + (kw - 1)
    m = n * per - span
    dt = x.dtype
    xn = np.zeros((n, hp + 1, wp, c), dtype=dt)
    xn[:, padding : padding + h, padding : padding + w, :] = x.data.transpose(0, 2, 3, 1)
    xf = xn.reshape(n * per, c)
    taps = [(i, j, i * wp + j) for i in range(kh) for j in range(kw)]
    wt = [np.ascontiguousarray(kernel.data[:, :, i, j].T) for i, j, _ in taps]
    acc = np.zeros((n * per, f), dtype=dt)
    tmp = np.empty((m, f), dtype=dt)
    for (_, _, s), wij in zip(taps, wt):
        np.matmul(xf[s : s + m], wij, out=tmp)
        acc[:m] += tmp
    out = acc.reshape(n, hp + 1, wp, f)[:, :ho, :wo, :]
    if bias is not None:
        out = out + bias.data
    out = out.transpose(0, 3, 1, 2)

    def bw(g):
        gf = np.zeros((n, hp + 1, wp, f), dtype=g.dtype)
        gf[:, :ho, :wo, :] = g.transpose(0, 2, 3, 1)
        gf = gf.reshape(n * per, f)
        gk = gx = gb = None
        if kernel.requires_grad:
            gk = np.empty(kernel.shape, dtype=g.dtype)
            for i, j, s in taps:
                gk[:, :, i, j] = gf[:m].T @ xf[s : s + m]
        if bias is not None and bias.requires_grad:
            gb = gf.sum(axis=0)
        if x.requires_grad:
            dxf = np.zeros((n * per, c), dtype=g.dtype)
            buf = np.empty((m, c), dtype=g.dtype)
            for (i, j, s), wij in zip(taps, wt):
                np.matmul(gf[:m], wij.T, out=buf)
                dxf[s : s + m] += buf
            gx = dxf.reshape(n, hp + 1, wp, c)[:, padding : padding + h, padding : padding + w, :]
            gx = gx.transpose(0, 3, 1, 2)
        return (gx, gk, gb) if bias is not None else (gx, gk)

    return out, bw


def global_avg_pool(x: Tensor) -> Tensor:
    """Average over the spatial axes of an NCHW tensor, giving (N, C)."""
    return mean(x, axis=(2, 3))


# -- verification oracle --------------------------------------------------

def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if h <= 0:
        raise ContractError("finite_diff_grad: step h must be positive")
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=ANALYSIS)
    out = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"finite_diff_grad: f is not finite around coordinate {i}")
        gflat[i] = (fp - fm) / (2 * h)
    return out
