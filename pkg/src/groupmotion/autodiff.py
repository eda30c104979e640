"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run: every operation on a ``Var`` eagerly computes its numpy value
and records a backward closure. ``grad(loss, leaves)`` walks the recorded
graph once in reverse topological order. The graph itself acts as the tape;
it is never mutated by a backward pass, so values can be re-read and
``grad`` can be called repeatedly.

Broadcasting is deliberately restricted to scalar-with-array. Any other
shape mismatch raises, because silent broadcasting is the easiest way to
get a wrong gradient without noticing.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Var",
    "constant",
    "grad",
    "sum_",
    "mean",
    "relu",
    "sqrt",
    "exp",
    "tanh",
    "sin",
    "cos",
    "atan2",
    "matmul",
    "concat",
    "stack",
    "reshape",
    "broadcast_to",
    "norm",
    "adam_step",
    "AdamState",
    "Adam",
]

# Set True to validate finiteness after every op (slow; used in debug runs).
CHECK_FINITE = False


class ShapeMismatchError(ValueError):
    pass


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def _check_elementwise(op: str, a: np.ndarray, b: np.ndarray) -> None:
    # scalar-with-array is the only permitted broadcast
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise ShapeMismatchError(f"{op}: incompatible shapes {a.shape} vs {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient g back to `shape` (handles the scalar broadcast case)."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.sum(g)
    return np.broadcast_to(g, shape) if g.shape == () else g.reshape(shape)


class Var:
    """A node in the computation graph: value plus backward bookkeeping."""

    __slots__ = ("value", "parents", "_backward", "requires_grad")

    def __init__(self, value, parents=(), backward=None, requires_grad=True):
        self.value = _as_array(value)
        if CHECK_FINITE and not np.all(np.isfinite(self.value)):
            raise FloatingPointError("non-finite value produced")
        self.parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    # -- operator sugar -------------------------------------------------

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
        return mul(self, -1.0)

    def __pow__(self, p):
        return powi(self, p)

    def __getitem__(self, idx):
        return take(self, idx)


def constant(x) -> Var:
    return Var(x, requires_grad=False)


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else constant(x)


# -- elementwise ops -----------------------------------------------------


def add(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    _check_elementwise("add", a.value, b.value)
    out_val = a.value + b.value

    def backward(g):
        return (_sum_to(g, a.shape), _sum_to(g, b.shape))

    return Var(out_val, (a, b), backward)


def sub(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    _check_elementwise("sub", a.value, b.value)

    def backward(g):
        return (_sum_to(g, a.shape), _sum_to(-g, b.shape))

    return Var(a.value - b.value, (a, b), backward)


def mul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    _check_elementwise("mul", a.value, b.value)

    def backward(g):
        return (_sum_to(g * b.value, a.shape), _sum_to(g * a.value, b.shape))

    return Var(a.value * b.value, (a, b), backward)


def div(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    _check_elementwise("div", a.value, b.value)
    inv = 1.0 / b.value

    def backward(g):
        return (
            _sum_to(g * inv, a.shape),
            _sum_to(-g * a.value * inv * inv, b.shape),
        )

    return Var(a.value * inv, (a, b), backward)


def powi(a, p: float) -> Var:
    a = _wrap(a)
    p = float(p)

    def backward(g):
        return (g * p * np.power(a.value, p - 1.0),)

    return Var(np.power(a.value, p), (a,), backward)


def _sum_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient down to `shape` (inverse of the scalar broadcast)."""
    g = np.asarray(g)
    if g.shape == shape:
        return g
    if shape == ():
        return np.sum(g)
    # g scalar flowing into array operand cannot happen elementwise, but
    # guard anyway for robustness of composed closures
    return np.broadcast_to(g, shape).copy()


def relu(a) -> Var:
    """max(0, a); subgradient at 0 is 0 (satisfied hinge stays inert)."""
    a = _wrap(a)
    mask = a.value > 0.0

    def backward(g):
        return (g * mask,)

    return Var(np.where(mask, a.value, 0.0), (a,), backward)


def sqrt(a) -> Var:
    a = _wrap(a)
    out_val = np.sqrt(a.value)

    def backward(g):
        return (g * 0.5 / out_val,)

    return Var(out_val, (a,), backward)


def exp(a) -> Var:
    a = _wrap(a)
    out_val = np.exp(a.value)

    def backward(g):
        return (g * out_val,)

    return Var(out_val, (a,), backward)


def tanh(a) -> Var:
    a = _wrap(a)
    out_val = np.tanh(a.value)

    def backward(g):
        return (g * (1.0 - out_val * out_val),)

    return Var(out_val, (a,), backward)


def sin(a) -> Var:
    a = _wrap(a)

    def backward(g):
        return (g * np.cos(a.value),)

    return Var(np.sin(a.value), (a,), backward)


def cos(a) -> Var:
    a = _wrap(a)

    def backward(g):
        return (-g * np.sin(a.value),)

    return Var(np.cos(a.value), (a,), backward)


def atan2(y, x) -> Var:
    y, x = _wrap(y), _wrap(x)
    _check_elementwise("atan2", y.value, x.value)
    denom = y.value * y.value + x.value * x.value

    def backward(g):
        return (
            _sum_to(g * x.value / denom, y.shape),
            _sum_to(-g * y.value / denom, x.shape),
        )

    return Var(np.arctan2(y.value, x.value), (y, x), backward)


# -- reductions / structural ops ------------------------------------------


def sum_(a, axis=None) -> Var:
    a = _wrap(a)
    out_val = np.sum(a.value, axis=axis)

    def backward(g):
        if axis is None:
            return (np.full(a.shape, g, dtype=np.float64),)
        g_exp = np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, a.shape).copy(),)

    return Var(out_val, (a,), backward)


def mean(a, axis=None) -> Var:
    a = _wrap(a)
    count = a.value.size if axis is None else a.shape[axis]
    return sum_(a, axis=axis) * (1.0 / count)


def matmul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul: incompatible shapes {a.shape} vs {b.shape}"
        )

    def backward(g):
        return (g @ b.value.T, a.value.T @ g)

    return Var(a.value @ b.value, (a, b), backward)


def take(a, idx) -> Var:
    """Indexing/slicing with gradient scatter-add. Integer-array indices are
    allowed on the leading axis only; otherwise basic indexing."""
    a = _wrap(a)
    out_val = a.value[idx]
    fancy = isinstance(idx, (np.ndarray, list))

    def backward(g):
        ga = np.zeros(a.shape, dtype=np.float64)
        if fancy:
            np.add.at(ga, idx, g)   # handles repeated indices
        else:
            ga[idx] += g
        return (ga,)

    return Var(np.array(out_val, copy=True), (a,), backward)


def concat(parts, axis=0) -> Var:
    parts = [_wrap(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    out_val = np.concatenate([p.value for p in parts], axis=axis)

    def backward(g):
        return tuple(
            np.array(chunk, copy=True)
            for chunk in np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        )

    return Var(out_val, parts, backward)


def stack(parts, axis=0) -> Var:
    parts = [_wrap(p) for p in parts]
    out_val = np.stack([p.value for p in parts], axis=axis)

    def backward(g):
        return tuple(
            np.array(np.take(g, i, axis=axis), copy=True)
            for i in range(len(parts))
        )

    return Var(out_val, parts, backward)


def reshape(a, shape) -> Var:
    a = _wrap(a)
    old = a.shape

    def backward(g):
        return (g.reshape(old),)

    return Var(a.value.reshape(shape), (a,), backward)


def broadcast_to(a, shape) -> Var:
    """Explicit broadcast; the only way to widen a non-scalar array."""
    a = _wrap(a)
    out_val = np.broadcast_to(a.value, shape).copy()
    old = a.shape

    def backward(g):
        extra = g.ndim - len(old)
        gg = g.sum(axis=tuple(range(extra))) if extra else g
        keep = tuple(i for i, s in enumerate(old) if s == 1 and gg.shape[i] != 1)
        if keep:
            gg = gg.sum(axis=keep, keepdims=True)
        return (gg.reshape(old),)

    return Var(out_val, (a,), backward)


def norm(a, axis=None, eps: float = 0.0) -> Var:
    """Euclidean norm; `eps` smooths the origin when differentiability there
    matters (scripted direction fields)."""
    sq = sum_(a * a, axis=axis)
    if eps:
        sq = sq + eps * eps
    return sqrt(sq)


# -- backward pass ---------------------------------------------------------


def _toposort(root: Var) -> list:
    order: list = []
    seen: set = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order  # parents before children


def grad(loss: Var, leaves) -> list:
    """Return d(loss)/d(leaf) for every leaf Var.

    `loss` must be scalar. The graph is untouched, so both the values and
    further grad() calls stay valid.
    """
    if loss.value.shape != ():
        raise ValueError(f"grad: loss must be scalar, got shape {loss.value.shape}")
    leaves = list(leaves)
    adjoint: dict = {id(loss): np.array(1.0)}
    order = _toposort(loss)
    for node in reversed(order):
        g = adjoint.get(id(node))
        if g is None or node._backward is None:
            continue
        parent_grads = node._backward(np.asarray(g, dtype=np.float64))
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in adjoint:
                adjoint[key] = adjoint[key] + pg
            else:
                adjoint[key] = pg
    out = []
    for leaf in leaves:
        g = adjoint.get(id(leaf))
        out.append(np.zeros(leaf.shape) if g is None else np.broadcast_to(g, leaf.shape).astype(np.float64))
    return out


# -- Adam ------------------------------------------------------------------


class AdamState:
    """First/second moment accumulators for one parameter array."""

    def __init__(self, shape):
        self.m = np.zeros(shape, dtype=np.float64)
        self.v = np.zeros(shape, dtype=np.float64)


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, step: int = 1):
    """One bias-corrected Adam update. Returns (new_params, state)."""
    if lr <= 0:
        raise ValueError(f"adam_step: lr must be positive, got {lr}")
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeMismatchError("adam_step: params/grads/state shapes disagree")
    if step < 1:
        raise ValueError("adam_step: step must be >= 1")
    state.m = beta1 * state.m + (1.0 - beta1) * grads
    state.v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1 ** step)
    v_hat = state.v / (1.0 - beta2 ** step)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, state


class Adam:
    """Stateful convenience wrapper around adam_step for a list of arrays."""

    def __init__(self, shapes, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"Adam: lr must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.states = [AdamState(s) for s in shapes]

    def step(self, params: list, grads: list) -> list:
        self.t += 1
        out = []
        for p, g, st in zip(params, grads, self.states):
            new_p, _ = adam_step(p, g, st, self.lr, self.beta1, self.beta2,
                                 self.eps, self.t)
            out.append(new_p)
        return out
