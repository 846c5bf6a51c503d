"""Reverse-mode autodiff on numpy arrays, plus the Adam optimizer.

Everything the model trains with is built from the primitives in this
module: each operation produces a `Tensor` node holding the forward
value and a closure that routes gradients to its parents. Graphs are
rebuilt per step (define-by-run) and confined to a single thread;
exported weight arrays are plain numpy and safe to share for inference.
"""

from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Product code runs in float32 end to end; tests may build float64
# graphs (e.g. for finite differences) by passing float64 inputs.
DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when an op receives operands of incompatible shapes."""


class Tensor:
    """A node in the computation graph.

    `values` and `grad` always share a shape. Leaf nodes (parameters,
    inputs) have no parents; they accumulate gradient but never
    propagate it further. `backward()` visits each node exactly once in
    reverse topological order.
    """

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad=False, _parents=(), _backward=None):
        if isinstance(values, Tensor):
            raise TypeError("Tensor values must be an array, not a Tensor")
        # Explicit float arrays and numpy scalars keep their precision
        # (float64 graphs are used for finite-difference checks);
        # Python lists and scalars land on the product dtype.
        if isinstance(values, (np.ndarray, np.generic)) and \
                np.issubdtype(np.asarray(values).dtype, np.floating):
            arr = np.asarray(values)
        else:
            arr = np.asarray(values, dtype=DEFAULT_DTYPE)
        self.values = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def dtype(self):
        return self.values.dtype

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, grad={self.requires_grad})"

    def item(self):
        return float(self.values)

    def detach(self):
        """Constant copy of this node, cut off from the graph."""
        return Tensor(self.values.copy())

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Backpropagate from this scalar node through the graph."""
        if self.values.size != 1:
            raise ShapeError(f"backward: root must be scalar, got shape {self.shape}")
        # Iterative topo sort; training graphs routinely exceed the
        # default recursion limit.
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.values)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, like=self), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, like=self), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return total(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return average(self, axis, keepdims)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(name, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _binary(name, a, b, fwd, da, db):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    _check_broadcast(name, a, b)
    out = Tensor(fwd(a.values, b.values), a.requires_grad or b.requires_grad)

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate(_unbroadcast(da(g, a.values, b.values, out.values), a.shape))
        if b.requires_grad or b._parents:
            b.accumulate(_unbroadcast(db(g, a.values, b.values, out.values), b.shape))

    out._parents = (a, b)
    out._backward = backward
    return out


def _unary(a, fwd, dx):
    a = _as_tensor(a)
    out = Tensor(fwd(a.values), a.requires_grad)

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate(dx(g, a.values, out.values))

    out._parents = (a,)
    out._backward = backward
    return out


def add(a, b):
    return _binary("add", a, b, lambda x, y: x + y,
                   lambda g, x, y, o: g, lambda g, x, y, o: g)


def sub(a, b):
    return _binary("sub", a, b, lambda x, y: x - y,
                   lambda g, x, y, o: g, lambda g, x, y, o: -g)


def mul(a, b):
    return _binary("mul", a, b, lambda x, y: x * y,
                   lambda g, x, y, o: g * y, lambda g, x, y, o: g * x)


def div(a, b):
    return _binary("div", a, b, lambda x, y: x / y,
                   lambda g, x, y, o: g / y, lambda g, x, y, o: -g * x / (y * y))


def neg(a):
    return _unary(a, lambda x: -x, lambda g, x, o: -g)


def power(a, exponent):
    """Elementwise x**c for a constant scalar exponent."""
    c = float(exponent)
    return _unary(a, lambda x: x ** c, lambda g, x, o: g * c * x ** (c - 1.0))


def exp(a):
    return _unary(a, np.exp, lambda g, x, o: g * o)


def log(a):
    return _unary(a, np.log, lambda g, x, o: g / x)


def sqrt(a):
    return _unary(a, np.sqrt, lambda g, x, o: g * 0.5 / np.maximum(o, 1e-12))


def relu(a):
    return _unary(a, lambda x: np.maximum(x, 0), lambda g, x, o: g * (x > 0))


def leaky_relu(a, alpha=0.2):
    return _unary(a, lambda x: np.where(x > 0, x, alpha * x),
                  lambda g, x, o: g * np.where(x > 0, 1.0, alpha))


def sigmoid(a):
    def fwd(x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    return _unary(a, fwd, lambda g, x, o: g * o * (1.0 - o))


def tanh(a):
    return _unary(a, np.tanh, lambda g, x, o: g * (1.0 - o * o))


def clamp_min(a, floor):
    """max(a, floor) elementwise; subgradient 0 below the floor."""
    f = float(floor)
    return _unary(a, lambda x: np.maximum(x, f), lambda g, x, o: g * (x > f))


def maximum(a, b):
    """Elementwise max; ties send the gradient to the first operand."""
    return _binary("maximum", a, b, np.maximum,
                   lambda g, x, y, o: g * (x >= y), lambda g, x, y, o: g * (x < y))


def minimum(a, b):
    """Elementwise min; ties send the gradient to the first operand."""
    return _binary("minimum", a, b, np.minimum,
                   lambda g, x, y, o: g * (x <= y), lambda g, x, y, o: g * (x > y))


def absolute(a):
    return _unary(a, np.abs, lambda g, x, o: g * np.sign(x))


def softmax(a):
    """Softmax over the last axis; each slice sums to 1."""
    def fwd(x):
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)

    def dx(g, x, o):
        return (g - (g * o).sum(axis=-1, keepdims=True)) * o

    return _unary(a, fwd, dx)


def matmul(a, b):
    """Matrix product with stacked leading batch dims on either side."""
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ: {a.shape} vs {b.shape}")
    out = Tensor(a.values @ b.values, a.requires_grad or b.requires_grad)

    def backward(g):
        if a.requires_grad or a._parents:
            ga = g @ np.swapaxes(b.values, -1, -2)
            a.accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad or b._parents:
            gb = np.swapaxes(a.values, -1, -2) @ g
            b.accumulate(_unbroadcast(gb, b.shape))

    out._parents = (a, b)
    out._backward = backward
    return out


def total(a, axis=None, keepdims=False):
    """Sum over `axis` (all axes when None)."""
    a = _as_tensor(a)
    out = Tensor(a.values.sum(axis=axis, keepdims=keepdims), a.requires_grad)

    def backward(g):
        if not (a.requires_grad or a._parents):
            return
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.shape).astype(a.dtype, copy=False))

    out._parents = (a,)
    out._backward = backward
    return out


def average(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    count = a.values.size if axis is None else a.shape[axis]
    return total(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape):
    a = _as_tensor(a)
    out = Tensor(a.values.reshape(shape), a.requires_grad)

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate(g.reshape(a.shape))

    out._parents = (a,)
    out._backward = backward
    return out


def transpose(a, axes):
    a = _as_tensor(a)
    out = Tensor(a.values.transpose(axes), a.requires_grad)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        if a.requires_grad or a._parents:
            a.accumulate(g.transpose(inverse))

    out._parents = (a,)
    out._backward = backward
    return out


def narrow(a, key):
    """Basic slicing; gradient scatters back into a zero buffer."""
    a = _as_tensor(a)
    out = Tensor(a.values[key], a.requires_grad)

    def backward(g):
        if a.requires_grad or a._parents:
            buf = np.zeros_like(a.values)
            buf[key] = g
            a.accumulate(buf)

    out._parents = (a,)
    out._backward = backward
    return out


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.values for t in tensors], axis=axis),
                 any(t.requires_grad for t in tensors))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._parents:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t.accumulate(g[tuple(index)])

    out._parents = tuple(tensors)
    out._backward = backward
    return out


def gather_rows(a, idx):
    """Pick rows of `a` by integer index; backward scatter-adds.

    Doubles as the embedding-table lookup: `gather_rows(table, ids)`.
    """
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows: index must be 1-D, got {idx.shape}")
    out = Tensor(a.values[idx], a.requires_grad)

    def backward(g):
        if a.requires_grad or a._parents:
            buf = np.zeros_like(a.values)
            np.add.at(buf, idx, g)
            a.accumulate(buf)

    out._parents = (a,)
    out._backward = backward
    return out


embedding = gather_rows


def _content_order(values):
    # Total order on row bit patterns: identical multisets of rows sort
    # identically no matter how the rows were originally arranged.
    bits = values.view(np.uint32 if values.dtype == np.float32 else np.uint64)
    return np.lexsort(bits[:, ::-1].T)


def segment_mean(values, segment_ids, num_segments):
    """Mean of rows grouped by segment id.

    Rows within a segment are summed in a content-canonical order, so
    the result is bit-stable under any permutation of the input rows.
    Segments with no rows come out as zeros.
    """
    values = _as_tensor(values)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if values.ndim != 2 or seg.shape != (values.shape[0],):
        raise ShapeError(
            f"segment_mean: expected (M,D) values with (M,) ids, got {values.shape} and {seg.shape}")
    order = _content_order(values.values)
    order = order[np.argsort(seg[order], kind="stable")]
    sorted_vals = values.values[order]
    sorted_seg = seg[order]
    starts = np.flatnonzero(np.r_[True, np.diff(sorted_seg) != 0])
    sums = np.add.reduceat(sorted_vals, starts, axis=0)
    counts = np.diff(np.r_[starts, len(sorted_seg)])
    result = np.zeros((num_segments, values.shape[1]), dtype=values.dtype)
    result[sorted_seg[starts]] = sums / counts[:, None].astype(values.dtype)
    out = Tensor(result, values.requires_grad)
    full_counts = np.bincount(seg, minlength=num_segments).astype(values.dtype)

    def backward(g):
        if values.requires_grad or values._parents:
            values.accumulate(g[seg] / full_counts[seg][:, None])

    out._parents = (values,)
    out._backward = backward
    return out


def l2_distance(a, b):
    """Euclidean distance over the last axis; exact 0 at equal inputs."""
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    if a.shape != b.shape:
        raise ShapeError(f"l2_distance: shapes differ: {a.shape} vs {b.shape}")
    diff = a.values - b.values
    dist = np.sqrt(np.maximum((diff * diff).sum(axis=-1), 0.0))
    out = Tensor(dist, a.requires_grad or b.requires_grad)

    def backward(g):
        unit = diff / np.maximum(dist, 1e-12)[..., None]
        scaled = g[..., None] * unit
        if a.requires_grad or a._parents:
            a.accumulate(scaled)
        if b.requires_grad or b._parents:
            b.accumulate(-scaled)

    out._parents = (a, b)
    out._backward = backward
    return out


def l1_distance(a, b):
    """Sum of absolute differences over the last axis."""
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    if a.shape != b.shape:
        raise ShapeError(f"l1_distance: shapes differ: {a.shape} vs {b.shape}")
    diff = a.values - b.values
    out = Tensor(np.abs(diff).sum(axis=-1), a.requires_grad or b.requires_grad)

    def backward(g):
        signed = g[..., None] * np.sign(diff)
        if a.requires_grad or a._parents:
            a.accumulate(signed)
        if b.requires_grad or b._parents:
            b.accumulate(-signed)

    out._parents = (a, b)
    out._backward = backward
    return out


def squared_error(a, b):
    """Elementwise (a - b)**2."""
    return _binary("squared_error", a, b, lambda x, y: (x - y) ** 2,
                   lambda g, x, y, o: g * 2.0 * (x - y),
                   lambda g, x, y, o: g * -2.0 * (x - y))


def pairwise_l2(a, b):
    """All-pairs Euclidean distances between rows of `a` and rows of `b`."""
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"pairwise_l2: expected (N,D) and (M,D), got {a.shape} and {b.shape}")
    sq = (a.values * a.values).sum(1)[:, None] + (b.values * b.values).sum(1)[None, :]
    sq = sq - 2.0 * (a.values @ b.values.T)
    dist = np.sqrt(np.maximum(sq, 0.0))
    out = Tensor(dist, a.requires_grad or b.requires_grad)

    def backward(g):
        w = g / np.maximum(dist, 1e-12)
        if a.requires_grad or a._parents:
            a.accumulate(w.sum(1)[:, None] * a.values - w @ b.values)
        if b.requires_grad or b._parents:
            b.accumulate(w.sum(0)[:, None] * b.values - w.T @ a.values)

    out._parents = (a, b)
    out._backward = backward
    return out


def cross_entropy_logits(logits, labels):
    """Per-row categorical cross-entropy between logits and class ids."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(
            f"cross_entropy_logits: expected (N,C) logits with (N,) labels, "
            f"got {logits.shape} and {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError(f"cross_entropy_logits: label out of range for C={logits.shape[1]}")
    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(labels))
    out = Tensor(lse - shifted[rows, labels], logits.requires_grad)

    def backward(g):
        if logits.requires_grad or logits._parents:
            probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
            probs[rows, labels] -= 1.0
            logits.accumulate(probs * g[:, None])

    out._parents = (logits,)
    out._backward = backward
    return out


def stack_rows(tensors):
    """Stack equally shaped 1-D tensors into a matrix."""
    return concat([reshape(t, (1, -1)) for t in tensors], axis=0)


# -- parameters and optimization --------------------------------------


def he_param(rng, fan_in, shape):
    """He-normal initialized parameter tensor."""
    scale = np.sqrt(2.0 / fan_in)
    return Tensor((rng.standard_normal(shape) * scale).astype(DEFAULT_DTYPE),
                  requires_grad=True)


def zeros_param(shape):
    return Tensor(np.zeros(shape, dtype=DEFAULT_DTYPE), requires_grad=True)


def ones_param(shape):
    return Tensor(np.ones(shape, dtype=DEFAULT_DTYPE), requires_grad=True)


def table_param(rng, rows, cols, scale=0.02):
    """Small-normal embedding table."""
    return Tensor((rng.standard_normal((rows, cols)) * scale).astype(DEFAULT_DTYPE),
                  requires_grad=True)


class Adam:
    """Bias-corrected Adam over a fixed parameter list.

    A step with any non-finite gradient is skipped entirely (moments
    untouched) but still advances the step counter and logs a warning.
    """

    def __init__(self, params: Sequence[Tensor], lr, beta1=0.5, beta2=0.999, eps=1e-9):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self):
        """Apply one update in place. Returns False if skipped."""
        self.step_count += 1
        grads = [p.grad if p.grad is not None else np.zeros_like(p.values)
                 for p in self.params]
        if any(not np.isfinite(g).all() for g in grads):
            logger.warning("adam: non-finite gradient at step %d, update skipped", self.step_count)
            return False
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.values -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return True

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# -- gradient checking -------------------------------------------------


class GradCheckError(AssertionError):
    """Raised when a finite-difference probe produces non-finite values."""


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h=1e-4):
    """Max relative error between analytic and central-difference grads.

    `f` must build a scalar graph from `x` and be evaluable repeatedly.
    The error for component i is |analytic_i - numeric_i| / max(1, |numeric_i|).
    """
    if not (1e-4 <= h <= 1e-2):
        raise ValueError(f"grad_check: h={h} outside [1e-4, 1e-2]")
    x.zero_grad()
    out = f(x)
    out.backward()
    analytic = np.zeros_like(x.values) if x.grad is None else x.grad.copy()

    flat = x.values.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        hi = float(f(x).values)
        flat[i] = saved - h
        lo = float(f(x).values)
        flat[i] = saved
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise GradCheckError(f"non-finite probe at flat index {i}")
        numeric = (hi - lo) / (2.0 * h)
        err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    if not np.isfinite(analytic).all():
        raise GradCheckError("non-finite analytic gradient")
    return worst
