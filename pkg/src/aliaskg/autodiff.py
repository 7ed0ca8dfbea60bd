"""Small reverse-mode autodiff over float64 numpy arrays.

Only the handful of ops the encoder, decoder and losses need. Each op
returns a new :class:`Tensor` that remembers its parents and a closure
mapping the output gradient to parent gradients. Inside :func:`no_grad`
nothing is recorded.
"""

from __future__ import annotations

import contextlib
import contextvars

import numpy as np

BCE_EPS = 1e-7

_recording = contextvars.ContextVar("recording", default=True)


@contextlib.contextmanager
def no_grad():
    token = _recording.set(False)
    try:
        yield
    finally:
        _recording.reset(token)


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """Trainable leaf carrying AdamW moment estimates."""

    __slots__ = ("name", "m", "v", "step")

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.name = name
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0

    def zero_grad(self):
        self.grad[...] = 0.0


def _not_scalar(t):
    raise ShapeError(f"expected a scalar, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if _recording.get() and any(p.requires_grad or p._parents for p in parents):
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def back(g):
        if a.data.ndim == 1:
            return g @ b.data.T, np.outer(a.data, g)
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), back)


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    shapes = [t.shape for t in ts]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {shapes}") from None
    bounds = np.cumsum([s[axis] for s in shapes])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tuple(ts), back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def sum_(a, axis=None) -> Tensor:
    a = as_tensor(a)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(a.data.sum(axis=axis), (a,), back)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    if n == 0:
        raise ShapeError(f"mean: empty axis in shape {a.shape}")
    return scale(sum_(a, axis), 1.0 / n)


def max_(a, axis: int = 0) -> Tensor:
    """Max along ``axis``; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    if a.shape[axis] == 0:
        raise ShapeError(f"max: empty axis in shape {a.shape}")
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis).squeeze(axis)

    def back(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
        return (grad,)

    return _make(out, (a,), back)


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("minimum", a, b)
    pick_a = a.data <= b.data
    return _make(np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.shape),
                            _unbroadcast(g * ~pick_a, b.shape)))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def take(a, index) -> Tensor:
    """Gather rows ``a[index]``."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)

    def back(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _make(a.data[index], (a,), back)


def segment_sum(a, segments, num_segments: int) -> Tensor:
    """Scatter-add rows of ``a`` into ``num_segments`` buckets."""
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=np.int64)
    if len(segments) != a.shape[0]:
        raise ShapeError(f"segment_sum: {len(segments)} segment ids for shape {a.shape}")
    out = np.zeros((num_segments,) + a.shape[1:])
    np.add.at(out, segments, a.data)
    return _make(out, (a,), lambda g: (g[segments],))


def cosine_similarity(u, v) -> Tensor:
    """Cosine of two 1-d tensors; 0 (with zero gradient) if either is the zero vector."""
    u, v = as_tensor(u), as_tensor(v)
    if u.shape != v.shape or u.data.ndim != 1:
        raise ShapeError(f"cosine_similarity: incompatible shapes {u.shape} and {v.shape}")
    nu = float(np.sqrt(u.data @ u.data))
    nv = float(np.sqrt(v.data @ v.data))
    if nu == 0.0 or nv == 0.0:
        return _make(np.float64(0.0), (u, v),
                     lambda g: (np.zeros_like(u.data), np.zeros_like(v.data)))
    dot = float(u.data @ v.data)
    c = dot / (nu * nv)

    def back(g):
        gu = (v.data / (nu * nv) - c * u.data / (nu * nu)) * g
        gv = (u.data / (nu * nv) - c * v.data / (nv * nv)) * g
        return gu, gv

    return _make(np.float64(c), (u, v), back)


def binary_cross_entropy(pred, target) -> Tensor:
    """Mean BCE with predictions clamped to ``[1e-7, 1 - 1e-7]``."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target,
                        dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"binary_cross_entropy: incompatible shapes {pred.shape} "
                         f"and {target.shape}")
    n = pred.data.size
    if n == 0:
        raise ShapeError("binary_cross_entropy: empty input")
    p = np.clip(pred.data, BCE_EPS, 1.0 - BCE_EPS)
    inside = (pred.data >= BCE_EPS) & (pred.data <= 1.0 - BCE_EPS)
    loss = -np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p))

    def back(g):
        return (g * inside * (p - target) / (p * (1.0 - p)) / n,)

    return _make(np.float64(loss), (pred,), back)


def mse(u, v) -> Tensor:
    u, v = as_tensor(u), as_tensor(v)
    if u.shape != v.shape:
        raise ShapeError(f"mse: incompatible shapes {u.shape} and {v.shape}")
    d = sub(u, v)
    return mean(mul(d, d))


def margin_hinge(a, b, gamma: float) -> Tensor:
    """``max(b - a + gamma, 0)``: zero once ``a`` beats ``b`` by the margin."""
    a, b = as_tensor(a), as_tensor(b)
    if a.size != 1 or b.size != 1:
        raise ShapeError(f"margin_hinge: expected scalars, got {a.shape} and {b.shape}")
    x = b.item() - a.item() + gamma
    on = x > 0.0
    return _make(np.float64(max(x, 0.0)), (a, b),
                 lambda g: (-g * on * np.ones_like(a.data), g * on * np.ones_like(b.data)))


def backward(out: Tensor):
    """Accumulate d(out)/d(leaf) into every reachable leaf with ``requires_grad``."""
    if out.data.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {out.shape}")
    order = []
    seen = set()
    stack = [(out, False)]
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
            if id(p) not in seen:
                stack.append((p, False))

    grads = {id(out): np.ones_like(out.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad += g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if not (p.requires_grad or p._parents):
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
