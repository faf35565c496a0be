"""Dense tensors with reverse-mode automatic differentiation.

Every network in this package is built from the operations defined here.
A forward pass eagerly records a graph of closures; ``Tensor.backward()``
replays them in reverse execution order and then frees the graph, so each
forward pass supports exactly one backward pass.  All data is float64:
the sizes involved are small and the finite-difference checks in
``neurofuse.gradcheck`` rely on the extra precision.

Graphs are confined to a single thread; the gradient-tracking toggle used
by ``no_grad`` is thread-local so independent graphs may run on separate
threads.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import GraphError, NumericError, ShapeError

_state = threading.local()


def _tracking() -> bool:
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager that disables graph recording on this thread."""

    def __enter__(self):
        self._prev = _tracking()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


class Tensor:
    """A dense float64 array that can participate in a differentiable graph.

    ``grad`` accumulates across backward passes until ``zero_grad`` (or
    an optimizer) clears it, so the adjoint of a sum of losses equals the
    sum of separate adjoints.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_released")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._released = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            # copy: g may alias a buffer shared with another accumulation target
            self.grad = np.array(g, dtype=np.float64)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from a scalar; consumes the graph."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("backward() on a tensor that tracks no gradients")
        if self._released:
            raise GraphError("graph already consumed by a previous backward pass")

        # Iterative postorder DFS: reversed(topo) visits each op after all
        # of its consumers, i.e. in a valid reverse execution order.
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            if node._released:
                raise GraphError("graph already consumed by a previous backward pass")
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self._accum(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
                node._backward = None
                node._parents = ()
                node._released = True

    # -- operator sugar over the module-level ops ------------------------

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _wire(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Create the op output, recording the graph edge when tracking."""
    out = Tensor(data)
    if _tracking():
        tracked = tuple(p for p in parents if p.requires_grad)
        if tracked:
            out.requires_grad = True
            out._parents = tracked
            out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def parameter(data, rng: np.random.Generator | None = None, scale: float | None = None) -> Tensor:
    """A leaf tensor with gradients enabled.

    With ``rng`` and ``scale``, ``data`` is taken as a shape and filled
    uniformly from (-scale, scale).
    """
    if rng is not None:
        data = rng.uniform(-scale, scale, size=data)
    return Tensor(data, requires_grad=True)


# ---------------------------------------------------------------------------
# elementwise / broadcasting ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.shape))

    return _wire(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.shape))

    return _wire(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return _wire(data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _wire(data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    data = a.data * c

    def backward(g):
        a._accum(g * c)

    return _wire(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        a._accum(g * data * (1.0 - data))

    return _wire(data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        a._accum(g * (1.0 - data * data))

    return _wire(data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        a._accum(g * (a.data > 0.0))

    return _wire(data, (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    data = np.where(a.data > 0.0, a.data, slope * a.data)

    def backward(g):
        a._accum(g * np.where(a.data > 0.0, 1.0, slope))

    return _wire(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(g):
        a._accum(g / a.data)

    return _wire(data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        a._accum(g * data)

    return _wire(data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        a._accum(g * 0.5 / data)

    return _wire(data, (a,), backward)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; the gradient passes only where no clipping bound is hit."""
    data = np.clip(a.data, lo, hi)

    def backward(g):
        a._accum(g * ((a.data >= lo) & (a.data <= hi)))

    return _wire(data, (a,), backward)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        a._accum(g.reshape(a.shape))

    return _wire(data, (a,), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    data = a.data.T.copy()

    def backward(g):
        a._accum(g.T)

    return _wire(data, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    ndim = tensors[0].data.ndim
    if not -ndim <= axis < ndim:
        raise ShapeError(f"concat axis {axis} out of range for ndim {ndim}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    extents = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(extents)[:-1]

    def backward(g):
        pieces = np.split(g, offsets, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accum(piece)

    return _wire(data, tensors, backward)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    ndim = a.data.ndim
    if not -ndim <= axis < ndim:
        raise ShapeError(f"slice axis {axis} out of range for ndim {ndim}")
    index = [slice(None)] * ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    data = a.data[index].copy()

    def backward(g):
        buf = np.zeros_like(a.data)
        buf[index] = g
        a._accum(buf)

    return _wire(data, (a,), backward)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum_all(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a._accum(np.full(a.shape, float(np.asarray(g).reshape(()))))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            a._accum(np.broadcast_to(ge, a.shape).copy())

    return _wire(data, (a,), backward)


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    data = np.asarray(a.data.mean())

    def backward(g):
        a._accum(np.full(a.shape, float(g) / n))

    return _wire(data, (a,), backward)


def abs_sum(a: Tensor) -> Tensor:
    """Sum of absolute values; subgradient 0 at exact zeros."""
    data = np.asarray(np.abs(a.data).sum())

    def backward(g):
        a._accum(float(g) * np.sign(a.data))

    return _wire(data, (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra and structured ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes do not compose: {a.shape} x {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return _wire(data, (a, b), backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a matrix, stabilized by row-max subtraction."""
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {x.shape}")
    if np.isnan(x.data).any():
        raise NumericError("softmax_rows received NaN input")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=1, keepdims=True)
        x._accum(data * (g - inner))

    return _wire(data, (x,), backward)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution of a (C_in, H, W) map with a (C_out, C_in, kh, kw) kernel.

    Implemented by im2col: the padded input is unfolded into a
    (C_in*kh*kw, H'*W') matrix so forward and backward are single matmuls
    plus a scatter-add.
    """
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects (C,H,W) and (Co,Ci,kh,kw), got {x.shape} and {w.shape}")
    c_in, h, wd = x.shape
    c_out, c_in2, kh, kw = w.shape
    if c_in != c_in2:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(
            f"conv2d output extent {ho}x{wo} is non-positive "
            f"for input {x.shape}, kernel {w.shape}, stride {stride}, padding {padding}"
        )
    if padding:
        xp = np.zeros((c_in, h + 2 * padding, wd + 2 * padding))
        xp[:, padding : padding + h, padding : padding + wd] = x.data
    else:
        xp = x.data
    cols = np.empty((c_in, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i : i + stride * ho : stride, j : j + stride * wo : stride]
    colmat = cols.reshape(c_in * kh * kw, ho * wo)
    wmat = w.data.reshape(c_out, -1)
    data = (wmat @ colmat).reshape(c_out, ho, wo)

    def backward(g):
        gmat = g.reshape(c_out, -1)
        if w.requires_grad:
            w._accum((gmat @ colmat.T).reshape(w.shape))
        if x.requires_grad:
            dcols = (wmat.T @ gmat).reshape(c_in, kh, kw, ho, wo)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j]
            x._accum(dxp[:, padding : padding + h, padding : padding + wd] if padding else dxp)

    return _wire(data, (x, w), backward)


def avg_pool2d(x: Tensor, extent: int) -> Tensor:
    """Non-overlapping average pooling; trailing rows/cols that do not fill a cell are dropped."""
    if x.data.ndim != 3:
        raise ShapeError(f"avg_pool2d expects (C,H,W), got {x.shape}")
    c, h, w = x.shape
    ht, wt = h // extent, w // extent
    if ht == 0 or wt == 0:
        raise ShapeError(f"avg_pool2d extent {extent} exceeds input {x.shape}")
    data = x.data[:, : ht * extent, : wt * extent].reshape(c, ht, extent, wt, extent).mean(axis=(2, 4))

    def backward(g):
        dx = np.zeros_like(x.data)
        spread = np.broadcast_to(
            g[:, :, None, :, None] / (extent * extent), (c, ht, extent, wt, extent)
        )
        dx[:, : ht * extent, : wt * extent] = spread.reshape(c, ht * extent, wt * extent)
        x._accum(dx)

    return _wire(data, (x,), backward)


def gather_pixels(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Read all channels of a (C, H, W) map at N (row, col) cells, giving (N, C)."""
    if x.data.ndim != 3:
        raise ShapeError(f"gather_pixels expects (C,H,W), got {x.shape}")
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    data = x.data[:, rows, cols].T.copy()

    def backward(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, (slice(None), rows, cols), g.T)
        x._accum(dx)

    return _wire(data, (x,), backward)


def attach_op(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Register a custom differentiable op built outside this module."""
    return _wire(data, parents, backward)


def collect_parameters(obj, prefix: str = "") -> dict[str, Tensor]:
    """Walk dataclass-like containers, lists and dicts for gradient leaves."""
    found: dict[str, Tensor] = {}

    def visit(o, name):
        if isinstance(o, Tensor):
            if o.requires_grad:
                found[name] = o
        elif isinstance(o, (list, tuple)):
            for i, item in enumerate(o):
                visit(item, f"{name}.{i}")
        elif isinstance(o, dict):
            for k, item in o.items():
                visit(item, f"{name}.{k}")
        elif hasattr(o, "__dataclass_fields__"):
            for f in o.__dataclass_fields__:
                visit(getattr(o, f), f"{name}.{f}" if name else f)

    visit(obj, prefix)
    return found
