"""Small reverse-mode autodiff over float64 numpy arrays.

Every backward rule is written with the same differentiable primitives as
the forward pass, so gradients returned with ``create_graph=True`` can be
differentiated again.  That is what the gradient penalty needs: the critic
loss contains ``||dD/dx||`` and is itself differentiated with respect to the
critic weights.

Broadcasting follows numpy; the reverse of a broadcast is :func:`sum_to`.
"""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

NORM_FLOOR = 1e-12

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def set_grad_enabled(flag: bool):
    prev = is_grad_enabled()
    _state.enabled = flag
    try:
        yield
    finally:
        _state.enabled = prev


def no_grad():
    return set_grad_enabled(False)


class ShapeError(ValueError):
    pass


class Tensor:
    """A float64 array plus the graph edge that produced it."""

    __slots__ = ("data", "requires_grad", "parents", "backward_fn", "op")
    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag}, op={self.op})"

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return slice_(self, index)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
    else:
        out.requires_grad = False
        out.parents = ()
        out.backward_fn = None
    return out


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# shape primitives


def sum_to(x, shape) -> Tensor:
    """Sum ``x`` down to ``shape`` (reverse of numpy broadcasting)."""
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, n in enumerate(shape) if n == 1 and x.shape[i + lead] != 1
    )
    data = x.data.sum(axis=axes, keepdims=True)
    if lead:
        data = data.reshape(data.shape[lead:])
    in_shape = x.shape
    return _record(data, (x,), lambda g: (broadcast_to(g, in_shape),), "sum_to")


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    in_shape = x.shape
    data = np.broadcast_to(x.data, shape).copy()
    return _record(data, (x,), lambda g: (sum_to(g, in_shape),), "broadcast_to")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    in_shape = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {in_shape} to {tuple(shape)}") from None
    return _record(data, (x,), lambda g: (reshape(g, in_shape),), "reshape")


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.shape}")
    return _record(x.data.T.copy(), (x,), lambda g: (transpose(g),), "transpose")


def slice_(x, index) -> Tensor:
    x = as_tensor(x)
    in_shape = x.shape
    data = np.array(x.data[index], dtype=np.float64)
    return _record(data, (x,), lambda g: (_scatter(g, in_shape, index),), "slice")


def _scatter(g, shape, index) -> Tensor:
    # adjoint of slice_: place g into zeros of `shape`
    g = as_tensor(g)
    data = np.zeros(shape)
    data[index] = g.data
    return _record(data, (g,), lambda h: (slice_(h, index),), "scatter")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"concat along axis {axis}: incompatible shapes {shapes}") from None
    ax = axis % data.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def backward(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = (slice(None),) * ax + (slice(int(lo), int(hi)),)
            out.append(slice_(g, idx))
        return tuple(out)

    return _record(data, tensors, backward, "concat")


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b), lambda g: (sum_to(g, sa), sum_to(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b), lambda g: (sum_to(g, sa), neg(sum_to(g, sb))), "sub")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (neg(g),), "neg")


def scale(a, c: float) -> Tensor:
    """Multiply by a Python scalar."""
    a = as_tensor(a)
    c = float(c)
    return _record(a.data * c, (a,), lambda g: (scale(g, c),), "scale")


def mul(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        return scale(a, b)
    if isinstance(a, (int, float)):
        return scale(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    sa, sb = a.shape, b.shape
    return _record(
        a.data * b.data, (a, b), lambda g: (sum_to(mul(g, b), sa), sum_to(mul(g, a), sb)), "mul"
    )


def div(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        return scale(a, 1.0 / b)
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    sa, sb = a.shape, b.shape

    def backward(g):
        ga = div(g, b)
        gb = neg(div(mul(ga, a), b))
        return sum_to(ga, sa), sum_to(gb, sb)

    return _record(a.data / b.data, (a, b), backward, "div")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _record(
        a.data @ b.data,
        (a, b),
        lambda g: (matmul(g, transpose(b)), matmul(transpose(a), g)),
        "matmul",
    )


def square(x) -> Tensor:
    x = as_tensor(x)
    return _record(x.data * x.data, (x,), lambda g: (mul(g, scale(x, 2.0)),), "square")


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = _record(np.sqrt(x.data), (x,), lambda g: (div(g, scale(out, 2.0)),), "sqrt")
    return out


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = _record(np.tanh(x.data), (x,), lambda g: (mul(g, sub(1.0, square(out))),), "tanh")
    return out


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    """Leaky ReLU; the derivative at exactly 0 is ``slope``."""
    x = as_tensor(x)
    mask = Tensor(np.where(x.data > 0.0, 1.0, slope))
    return _record(x.data * mask.data, (x,), lambda g: (mul(g, mask),), "leaky_relu")


# ---------------------------------------------------------------------------
# reductions


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    in_shape = x.shape
    if axis is None:
        axes = set(range(x.ndim))
    else:
        axes = {a % x.ndim for a in ((axis,) if isinstance(axis, int) else axis)}
    kept = tuple(1 if i in axes else n for i, n in enumerate(in_shape))
    data = np.asarray(x.data.sum(axis=axis, keepdims=keepdims), dtype=np.float64)
    return _record(data, (x,), lambda g: (broadcast_to(reshape(g, kept), in_shape),), "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum_(x, axis, keepdims), 1.0 / n)


def l2_norm(x, axis=-1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis``; ``sqrt(sum x^2 + 1e-12)`` keeps the gradient finite at 0."""
    return sqrt(add(sum_(square(x), axis, keepdims), NORM_FLOOR))


# ---------------------------------------------------------------------------
# differentiation


def _topo_order(output: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Tensor, inputs: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradients of a scalar ``output`` with respect to ``inputs``.

    Inputs the output does not depend on get zero gradients.  With
    ``create_graph`` the returned tensors carry their own graph and can be
    passed to another :func:`grad` call.
    """
    if output.size != 1:
        raise ShapeError(f"grad needs a scalar output, got shape {output.shape}")
    grads: dict[int, Tensor] = {}
    if output.requires_grad:
        grads[id(output)] = Tensor(np.ones(output.shape))
        with set_grad_enabled(create_graph):
            for node in reversed(_topo_order(output)):
                g = grads.get(id(node))
                if g is None or node.backward_fn is None:
                    continue
                for parent, pg in zip(node.parents, node.backward_fn(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    prev = grads.get(id(parent))
                    grads[id(parent)] = pg if prev is None else add(prev, pg)
    out = []
    for x in inputs:
        g = grads.get(id(x))
        if g is None:
            g = Tensor(np.zeros(x.shape))
        elif not create_graph:
            g = g.detach()
        out.append(g)
    return out


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    analytic: list[np.ndarray]
    numeric: list[np.ndarray]

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tol)


def numeric_grad(f: Callable[..., float], xs: Sequence[np.ndarray], step: float = 1e-5) -> list[np.ndarray]:
    """Central differences of a scalar function of several arrays."""
    xs = [np.array(x, dtype=np.float64) for x in xs]
    out = []
    for x in xs:
        g = np.zeros_like(x)
        for i in np.ndindex(x.shape):
            orig = x[i]
            x[i] = orig + step
            hi = f(*xs)
            x[i] = orig - step
            lo = f(*xs)
            x[i] = orig
            g[i] = (hi - lo) / (2.0 * step)
        out.append(g)
    return out


def gradient_check(f: Callable[..., Tensor], xs, step: float = 1e-5, tol: float = 1e-6) -> GradCheckReport:
    """Compare reverse-mode gradients of ``f`` with central differences.

    ``f`` maps tensors to a scalar tensor.  The error for each input is
    ``max|analytic - numeric| / max(|analytic|_inf, |numeric|_inf)``; the
    report holds the worst input.
    """
    if isinstance(xs, np.ndarray) or np.isscalar(xs):
        xs = [xs]
    xs = [np.array(x, dtype=np.float64) for x in xs]
    leaves = [Tensor(x, requires_grad=True) for x in xs]
    analytic = [g.data for g in grad(f(*leaves), leaves)]

    def scalar(*arrays):
        with no_grad():
            return float(f(*[Tensor(a) for a in arrays]).data)

    numeric = numeric_grad(scalar, xs, step)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-300)
        worst = max(worst, float(np.abs(a - n).max(initial=0.0) / denom))
    return GradCheckReport(worst, tol, analytic, numeric)
