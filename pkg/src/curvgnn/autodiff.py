"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array; primitives record their inputs and a
vector-Jacobian closure on the output node, forming an implicit tape
(a DAG, topologically ordered by construction). ``backward`` walks the
tape in reverse and accumulates gradients on every node that requires
them. Nothing is recorded when no input requires a gradient, so
forward-only evaluation has no tape overhead and produces identical
values.

Hyperbolic-specific conventions live here too: ``arccosh`` clamps its
argument to [1, 1e8] in the forward pass and evaluates its derivative at
max(z, 1 + 1e-7), keeping gradients finite when distances collapse to 0.
"""

from __future__ import annotations

import numpy as np

ACOSH_CLAMP_LO = 1.0
ACOSH_CLAMP_HI = 1e8
ACOSH_GRAD_EPS = 1e-7

# keeps sqrt-of-sum-of-squares differentiable at exactly zero
NORM_GUARD = 1e-30


class Tensor:
    """A float64 array plus the autodiff bookkeeping for one tape node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all route through the module-level primitives
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, rng: np.random.Generator | None = None, scale: float | None = None) -> Tensor:
    """Trainable leaf. With rng set, data is interpreted as a shape tuple."""
    if rng is not None:
        shape = tuple(data)
        fan_in = shape[-1] if shape else 1
        s = scale if scale is not None else 1.0 / np.sqrt(max(fan_in, 1))
        data = rng.uniform(-s, s, size=shape)
    return Tensor(np.asarray(data, dtype=np.float64).copy(), requires_grad=True)


def _make(data, parents, vjp) -> Tensor:
    tracked = tuple(p for p in parents if isinstance(p, Tensor) and p.requires_grad)
    out = Tensor(data)
    if tracked:
        out.requires_grad = True
        out._parents = tuple(p for p in parents if isinstance(p, Tensor))
        out._vjp = vjp
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Reverse accumulation from a scalar loss; grads land on .grad fields."""
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and not node._parents:
            node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            cur = grads.get(id(p))
            grads[id(p)] = pg if cur is None else cur + pg


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _make(out, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _make(out, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def scale(a, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), vjp)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / np.maximum(out, 1e-150),)

    return _make(out, (a,), vjp)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def cosh(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.cosh(a.data), (a,), lambda g: (g * np.sinh(a.data),))


def sinh(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.sinh(a.data), (a,), lambda g: (g * np.cosh(a.data),))


def arccosh(a) -> Tensor:
    """arccosh with the forward argument clamped to [1, 1e8].

    The derivative is evaluated at max(z, 1 + 1e-7) so that collapsing
    distances keep a large but finite gradient instead of NaN.
    """
    a = as_tensor(a)
    z = np.clip(a.data, ACOSH_CLAMP_LO, ACOSH_CLAMP_HI)
    out = np.arccosh(z)

    def vjp(g):
        zc = np.maximum(z, 1.0 + ACOSH_GRAD_EPS)
        d = 1.0 / np.sqrt(zc * zc - 1.0)
        d = np.where(a.data >= ACOSH_CLAMP_HI, 0.0, d)
        return (g * d,)

    return _make(out, (a,), vjp)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), vjp)


def softplus(a) -> Tensor:
    """log(1 + exp(x)) in the overflow-safe form max(x,0) + log1p(exp(-|x|))."""
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def vjp(g):
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return (g * s,)

    return _make(out, (a,), vjp)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)
    return _make(out, (a,), lambda g: (g * (a.data > 0.0),))


def clamp_min(a, floor: float) -> Tensor:
    a = as_tensor(a)
    floor = float(floor)
    out = np.maximum(a.data, floor)
    return _make(out, (a,), lambda g: (g * (a.data > floor),))


def concat(parts, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(parts), vjp)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _make(out, (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return ((g - inner) * out,)

    return _make(out, (a,), vjp)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = m + np.log(s)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def vjp(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        return (gg * (e / s),)

    return _make(out, (a,), vjp)


def gather_rows(a, idx: np.ndarray) -> Tensor:
    """Select rows a[idx] along axis 0 (repeats allowed)."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = a.data[idx]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _make(out, (a,), vjp)


def segment_sum(a, indptr: np.ndarray) -> Tensor:
    """Sum contiguous row blocks: out[k] = sum of a[indptr[k]:indptr[k+1]].

    Every segment must be nonempty (callers inject self-loops to ensure it).
    """
    a = as_tensor(a)
    counts = np.diff(indptr)
    if np.any(counts <= 0):
        raise ValueError("segment_sum requires nonempty segments")
    if indptr[-1] != a.data.shape[0]:
        raise ValueError("segment index does not cover all rows")
    out = np.add.reduceat(a.data, indptr[:-1], axis=0)

    def vjp(g):
        return (np.repeat(g, counts, axis=0),)

    return _make(out, (a,), vjp)


def lorentz_inner(u, v, keepdims: bool = True) -> Tensor:
    """Batched Minkowski product -u0*v0 + sum_i ui*vi over the last axis."""
    u, v = as_tensor(u), as_tensor(v)
    if u.data.shape[-1] != v.data.shape[-1]:
        raise ValueError("dimension mismatch in lorentz_inner")
    prod = u.data * v.data
    out = prod[..., 1:].sum(axis=-1, keepdims=keepdims)
    out = out - (prod[..., :1] if keepdims else prod[..., 0])

    def vjp(g):
        gg = g if keepdims else np.expand_dims(g, -1)
        return (
            _unbroadcast(gg * _mink_flip(v.data), u.data.shape),
            _unbroadcast(gg * _mink_flip(u.data), v.data.shape),
        )

    return _make(out, (u, v), vjp)


def _mink_flip(x: np.ndarray) -> np.ndarray:
    flipped = x.copy()
    flipped[..., 0] = -flipped[..., 0]
    return flipped


def pad_zero_column(a) -> Tensor:
    """Prefix a zero time-component: w in R^n -> (0, w), tangent at the origin."""
    a = as_tensor(a)
    zeros = Tensor(np.zeros(a.data.shape[:-1] + (1,)))
    return concat([zeros, a], axis=-1)


def spatial(a) -> Tensor:
    """Drop the time component: (x0, xs) -> xs."""
    a = as_tensor(a)
    out = a.data[..., 1:]

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[..., 1:] = g
        return (ga,)

    return _make(out, (a,), vjp)


def first_col(a) -> Tensor:
    """Keep only the time component as a (..., 1) slice."""
    a = as_tensor(a)
    out = a.data[..., :1]

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[..., :1] = g
        return (ga,)

    return _make(out, (a,), vjp)


def dropout(a, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not training or p <= 0.0:
        return as_tensor(a)
    a = as_tensor(a)
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)
    return mul(a, Tensor(mask))


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_of(f, x: np.ndarray) -> np.ndarray:
    """Gradient of a scalar-valued tensor function at x via the tape."""
    leaf = Tensor(np.array(x, dtype=np.float64, copy=True), requires_grad=True)
    out = f(leaf)
    if out.data.size != 1:
        raise ValueError("grad_of expects a scalar-valued function")
    backward(out)
    return np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad


def finite_diff_check(f, x: np.ndarray, h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    The relative error denominator is max(|a|, |b|, 1e-8) elementwise.
    """
    x = np.asarray(x, dtype=np.float64)
    analytic = grad_of(f, x)
    numeric = np.zeros_like(x)
    flat = numeric.reshape(-1)
    for i in range(x.size):
        xp = x.copy().reshape(-1)
        xm = x.copy().reshape(-1)
        xp[i] += h
        xm[i] -= h
        fp = f(Tensor(xp.reshape(x.shape))).item()
        fm = f(Tensor(xm.reshape(x.shape))).item()
        flat[i] = (fp - fm) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adam over Euclidean parameter tensors, with optional L2 weight decay."""

    def __init__(self, params, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            p.data -= self.lr * (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "m": [m.tolist() for m in self.m],
            "v": [v.tolist() for v in self.v],
        }

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = [np.array(m, dtype=np.float64) for m in state["m"]]
        self.v = [np.array(v, dtype=np.float64) for v in state["v"]]
