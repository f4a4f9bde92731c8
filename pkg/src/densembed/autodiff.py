"""Dense float64 tensors with a dynamic reverse-mode tape.

Every differentiable operation records its parents and a closure that maps
the output gradient to parent gradients. The tape is rebuilt on every
forward pass, so graphs may depend on the input values.

Broadcasting is deliberately limited to scalar-with-tensor and equal shapes;
anything else has to go through :func:`expand` so each gradient rule stays
easy to audit.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit, logsumexp

EXP_CLAMP = 700.0


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


def _finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced non-finite values")
    return arr


class Tensor:
    """Immutable float64 array node in a differentiable graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, op: str = "leaf",
                 _copy: bool = True):
        # internal nodes own their freshly computed arrays, leaves copy
        arr = np.array(data, dtype=np.float64) if _copy else np.asarray(data, dtype=np.float64)
        if arr.flags.writeable:
            arr.setflags(write=False)
        self.data = _finite(arr, op)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents = tuple(_parents)
        self._backward = _backward
        self.op = op

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
        return float(self.data.item())

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{rg})"

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __rtruediv__ = lambda self, other: div(other, self)
    __neg__ = lambda self: neg(self)

    def __getitem__(self, index) -> Tensor:
        return getitem(self, index)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None) -> Tensor:
        return tsum(self, axis)

    def backward(self) -> dict[Tensor, np.ndarray]:
        return backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], grad_fn, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=grad_fn, op=op, _copy=False)
    return Tensor(data, op=op, _copy=False)


def _check_binary(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are neither equal nor scalar-with-tensor")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # only the scalar case can differ under the restricted broadcasting rule
    if shape == g.shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "add")

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), grad_fn, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "sub")

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), grad_fn, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "mul")

    def grad_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), grad_fn, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "div")
    if np.any(b.data == 0):
        raise ZeroDivisionError("div: zero in denominator")
    out = a.data / b.data

    def grad_fn(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _node(out, (a, b), grad_fn, "div")


def scale(a, c: float) -> Tensor:
    """Multiply by a constant (non-differentiable) scalar."""
    a = as_tensor(a)
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a) -> Tensor:
    a = as_tensor(a)
    inside = np.abs(a.data) <= EXP_CLAMP
    out = np.exp(np.clip(a.data, -EXP_CLAMP, EXP_CLAMP))
    return _node(out, (a,), lambda g: (g * out * inside,), "exp")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = expit(a.data)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def _select(a, b, pick_a: np.ndarray, pick_b: np.ndarray, out: np.ndarray, op: str) -> Tensor:
    def grad_fn(g):
        return _unbroadcast(g * pick_a, a.shape), _unbroadcast(g * pick_b, b.shape)

    return _node(out, (a, b), grad_fn, op)


def maximum(a, b) -> Tensor:
    """Elementwise max; at exact ties neither operand receives gradient."""
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "maximum")
    return _select(a, b, a.data > b.data, b.data > a.data, np.maximum(a.data, b.data), "maximum")


def minimum(a, b) -> Tensor:
    """Elementwise min; at exact ties neither operand receives gradient."""
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "minimum")
    return _select(a, b, a.data < b.data, b.data < a.data, np.minimum(a.data, b.data), "minimum")


def relu(a) -> Tensor:
    return maximum(a, 0.0)


# -- structural --------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return _node(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    inverse = tuple(np.argsort(axes))
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]

    basic = all(isinstance(k, (slice, int, type(Ellipsis))) for k in (index if isinstance(index, tuple) else (index,)))

    def grad_fn(g):
        full = np.zeros(a.shape)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _node(out, (a,), grad_fn, "getitem")


def expand(a, shape: tuple[int, ...], axes: tuple[int, ...]) -> Tensor:
    """Insert new axes at ``axes`` (positions in the result) and repeat along them."""
    a = as_tensor(a)
    shape = tuple(shape)
    axes = tuple(ax % len(shape) for ax in axes)
    if len(shape) != a.ndim + len(axes):
        raise ShapeError(f"expand: {a.shape} with new axes {axes} cannot give {shape}")
    view = np.expand_dims(a.data, axes)
    try:
        out = np.broadcast_to(view, shape)
    except ValueError as exc:
        raise ShapeError(f"expand: {a.shape} -> {shape}: {exc}") from None
    return _node(out, (a,), lambda g: (g.sum(axis=axes),), "expand")


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: mismatched shapes {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)

    def grad_fn(g):
        return tuple(np.take(g, k, axis=axis) for k in range(len(tensors)))

    return _node(out, tuple(tensors), grad_fn, "stack")


# -- reductions --------------------------------------------------------------

def tsum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape),)

    return _node(out, (a,), grad_fn, "sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return scale(tsum(a, axis), 1.0 / count)


def argmax(a, axis: int = -1) -> np.ndarray:
    """Index of the largest entry; ties resolve to the lowest index."""
    return np.argmax(as_tensor(a).data, axis=axis)


# -- contraction -------------------------------------------------------------

def _parse_spec(spec: str) -> tuple[str, str, str]:
    spec = spec.replace(" ", "")
    try:
        lhs, out = spec.split("->")
        sa, sb = lhs.split(",")
    except ValueError:
        raise ValueError(f"contract spec must look like 'ij,jk->ik', got {spec!r}") from None
    return sa, sb, out


def _einsum2(sa: str, sb: str, so: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-operand einsum lowered onto a single batched matmul."""
    batch = [c for c in sa if c in sb and c in so]
    summed = [c for c in sa if c in sb and c not in so]
    keep_a = [c for c in sa if c not in sb]
    keep_b = [c for c in sb if c not in sa]
    ext = {**dict(zip(sa, a.shape)), **dict(zip(sb, b.shape))}
    size = lambda labels: int(np.prod([ext[c] for c in labels], dtype=np.int64))
    at = np.transpose(a, [sa.index(c) for c in batch + keep_a + summed])
    bt = np.transpose(b, [sb.index(c) for c in batch + summed + keep_b])
    prod = np.matmul(at.reshape(size(batch), size(keep_a), size(summed)),
                     bt.reshape(size(batch), size(summed), size(keep_b)))
    labels = batch + keep_a + keep_b
    prod = prod.reshape([ext[c] for c in labels])
    return np.transpose(prod, [labels.index(c) for c in so])


def contract(a, b, spec: str) -> Tensor:
    """Generalized tensor contraction in einsum notation, e.g. ``"bmn,ijmn->bij"``.

    Indices shared by ``a`` and ``b`` but absent from the output are summed.
    Every index of an operand must appear in the other operand or in the
    output, which keeps the reverse rule a single einsum.
    """
    a, b = as_tensor(a), as_tensor(b)
    sa, sb, so = _parse_spec(spec)
    if len(sa) != a.ndim or len(sb) != b.ndim:
        raise ShapeError(f"contract: spec {spec!r} does not match ranks {a.ndim} and {b.ndim}")
    extents: dict[str, int] = {}
    for labels, arr, name in ((sa, a, "a"), (sb, b, "b")):
        for ch, n in zip(labels, arr.shape):
            if extents.setdefault(ch, n) != n:
                raise ShapeError(f"contract: index {ch!r} has extent {extents[ch]} in a but {n} in {name}")
    for labels, other in ((sa, sb), (sb, sa)):
        for ch in labels:
            if ch not in other and ch not in so:
                raise ShapeError(f"contract: index {ch!r} appears in one operand only and is not kept")
    for labels in (sa, sb, so):
        if len(set(labels)) != len(labels):
            raise ValueError(f"contract: repeated index within one term of {spec!r}")
    if set(so) - set(sa) - set(sb):
        raise ValueError(f"contract: output indices {sorted(set(so) - set(sa) - set(sb))} not in any operand")
    out = _einsum2(sa, sb, so, a.data, b.data)

    def grad_fn(g):
        ga = _einsum2(so, sb, sa, g, b.data) if a.requires_grad else None
        gb = _einsum2(so, sa, sb, g, a.data) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), grad_fn, "contract")


# -- loss --------------------------------------------------------------------

def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean over the batch of ``-log softmax(logits)[label]``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape}, labels {labels.shape}")
    n, k = logits.shape
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    rows = np.arange(n)
    lse = logsumexp(logits.data, axis=1)
    loss = np.mean(lse - logits.data[rows, labels])

    def grad_fn(g):
        p = np.exp(logits.data - lse[:, None])
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return _node(np.asarray(loss), (logits,), grad_fn, "softmax_cross_entropy")


# -- reverse pass ------------------------------------------------------------

def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(root: Tensor) -> dict[Tensor, np.ndarray]:
    """Propagate d(root)/d(leaf) to every requires-grad leaf.

    Leaf gradients are stored on ``leaf.grad`` (overwriting any previous
    value) and also returned as a mapping keyed by the leaf tensor.
    """
    if root.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return {}
    grads: dict[int, np.ndarray] = {id(root): np.ones(root.shape)}
    leaves: dict[Tensor, np.ndarray] = {}
    for node in reversed(_toposort(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = _finite(np.array(g, dtype=np.float64).reshape(node.shape), "backward")
            leaves[node] = node.grad
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else np.asarray(pg, dtype=np.float64)
    return leaves


def numeric_gradient(f, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        fp = float(f(x.copy()))
        flat[k] = orig - step
        fm = float(f(x.copy()))
        flat[k] = orig
        gflat[k] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative discrepancy ``|a - n| / max(|a|, |n|)``."""
    num = float(np.linalg.norm(np.ravel(analytic) - np.ravel(numeric)))
    den = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    return 0.0 if den == 0.0 else num / den
